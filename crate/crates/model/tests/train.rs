use std::path::Path;

use autosame_core::dataset::save_study;
use autosame_core::phantom::generate_dataset;
use autosame_model::checkpoint::Checkpoint;
use autosame_model::data::{make_batch, resize_frame, study_samples};
use autosame_model::loss::{total_loss, LossWeights, Targets};
use autosame_model::optim::{Adam, AdamConfig};
use autosame_model::schedule::lr_schedule;
use autosame_model::train::{train, train_until, TrainConfig, TrainError, LOSS_CSV, NONFINITE_DUMP};
use autosame_model::{ModelConfig, Network};
use autosame_tensor::Graph;
use ndarray::{Array2, Axis};

fn dataset(dir: &Path, n: usize) {
    for (s, _) in generate_dataset(n, 11).unwrap() {
        save_study(&s, dir).unwrap();
    }
}

fn tiny_run(root: &Path, out: &str) -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        input_size: 32,
        peak_lr: 1e-3,
        epochs: 4,
        warmup_epochs: 2,
        seed: 3,
        data_root: root.join("data"),
        out: root.join(out),
        ..Default::default()
    }
}

#[test]
fn loss_falls_on_a_single_image() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path(), 1);
    let study = autosame_core::dataset::load_dataset(dir.path()).unwrap().remove(0);
    let samples = study_samples(&study, 32).unwrap();
    let mut net = Network::<f32>::new(ModelConfig::tiny(), 1).unwrap();
    let batch = make_batch(&samples[..1], 4.0, net.prompt_encoder()).unwrap();
    let mut adam = Adam::new(AdamConfig::default());
    let weights = LossWeights::default().for_epoch(0, 1);
    let mut losses = Vec::new();
    for _ in 0..50 {
        let g = Graph::new();
        let out = net.forward(&g, &g.input(batch.images.clone().into_dyn()), None).unwrap();
        let targets = Targets {
            mask: g.constant(batch.masks.clone().into_dyn()),
            heatmaps: g.constant(batch.heatmaps.clone().into_dyn()),
            pe_seg: g.constant(batch.pe_seg.clone().into_dyn()),
            pe_hr: g.constant(batch.pe_hr.clone().into_dyn()),
        };
        let terms = total_loss(&out, &targets, &weights).unwrap();
        losses.push(terms.total.item());
        let grads = g.backward(&terms.total);
        adam.update(net.store_mut(), &grads, 1e-3);
    }
    assert!(losses[49] < 0.5 * losses[0], "{} -> {}", losses[0], losses[49]);
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    dataset(&dir.path().join("data"), 1);
    let cfg = TrainConfig {
        epochs: 2,
        warmup_epochs: 1,
        ..tiny_run(dir.path(), "out")
    };
    let outcome = train(&cfg, &ModelConfig::tiny(), None).unwrap();
    let ck = Checkpoint::load(&outcome.checkpoint).unwrap();
    assert_eq!(ck.header.epoch, 2);
    assert_eq!(ck.header.step, outcome.history.len() as u64);
    assert_eq!(ck.header.train, cfg);
    let copy = dir.path().join("copy.bin");
    ck.save(&copy).unwrap();
    let again = Checkpoint::load(&copy).unwrap();
    assert_eq!(again.header, ck.header);
    assert_eq!(again.adam, ck.adam);
    for ((na, a), (nb, b)) in again.params.iter().zip(ck.params.iter()) {
        assert_eq!(na, nb);
        assert_eq!(a, b);
    }
    assert_eq!(std::fs::read(&copy).unwrap(), std::fs::read(&outcome.checkpoint).unwrap());

    let mut bytes = std::fs::read(&copy).unwrap();
    bytes[0] = b'X';
    std::fs::write(&copy, &bytes).unwrap();
    assert!(Checkpoint::load(&copy).is_err());
}

#[test]
fn training_is_seed_deterministic_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    dataset(&dir.path().join("data"), 2);
    let model = ModelConfig::tiny();
    let a = train(&tiny_run(dir.path(), "a"), &model, None).unwrap();
    let b = train(&tiny_run(dir.path(), "b"), &model, None).unwrap();
    assert_eq!(a.history, b.history);
    let csv_a = std::fs::read_to_string(dir.path().join("a").join(LOSS_CSV)).unwrap();
    assert_eq!(csv_a, std::fs::read_to_string(dir.path().join("b").join(LOSS_CSV)).unwrap());
    assert_eq!(csv_a.lines().count(), 1 + a.history.len());

    let c = tiny_run(dir.path(), "c");
    let first = train_until(&c, &model, None, 3).unwrap();
    let rest = train(&c, &model, Some(&first.checkpoint)).unwrap();
    let mut joined = first.history.clone();
    joined.extend(rest.history);
    assert_eq!(joined, a.history);
    assert_eq!(std::fs::read_to_string(dir.path().join("c").join(LOSS_CSV)).unwrap(), csv_a);
    let (ck_a, ck_c) = (Checkpoint::load(&a.checkpoint).unwrap(), Checkpoint::load(&rest.checkpoint).unwrap());
    assert_eq!(ck_a.adam, ck_c.adam);
    assert_eq!(ck_a.header.rng, ck_c.header.rng);
    assert!(ck_a.params.iter().zip(ck_c.params.iter()).all(|(x, y)| x == y));

    let other = TrainConfig {
        peak_lr: 2e-3,
        ..tiny_run(dir.path(), "c")
    };
    assert!(matches!(
        train(&other, &model, Some(&first.checkpoint)),
        Err(TrainError::ResumeMismatch { .. })
    ));

    for r in &a.history {
        if r.epoch >= 2 {
            assert_eq!(r.align, 0.0);
        } else {
            assert!(r.align > 0.0);
        }
    }
}

#[test]
fn non_finite_loss_aborts_with_a_dump() {
    let dir = tempfile::tempdir().unwrap();
    dataset(&dir.path().join("data"), 1);
    let cfg = TrainConfig {
        weights: LossWeights {
            dice: 1e300,
            ..LossWeights::default()
        },
        ..tiny_run(dir.path(), "out")
    };
    match train(&cfg, &ModelConfig::tiny(), None) {
        Err(TrainError::NonFinite { epoch: 0, step: 0, dump }) => {
            assert_eq!(dump, cfg.out.join(NONFINITE_DUMP));
            let body: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dump).unwrap()).unwrap();
            assert_eq!(body["batch"].as_array().unwrap().len(), 4);
        }
        other => panic!("expected a non-finite abort, got {other:?}"),
    }
}

#[test]
fn config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_run(dir.path(), "out");
    let bad = TrainConfig {
        warmup_epochs: 4,
        ..cfg.clone()
    };
    assert!(matches!(train(&bad, &ModelConfig::tiny(), None), Err(TrainError::Config(_))));
    assert!(matches!(train(&cfg, &ModelConfig::desk(), None), Err(TrainError::InputSize { .. })));
    assert!(matches!(train(&cfg, &ModelConfig::tiny(), None), Err(TrainError::Dataset(_) | TrainError::NoStudies(_))));
}

#[test]
fn lr_schedule_shape() {
    let (peak, spe) = (2e-4, 10);
    assert!((lr_schedule(0, spe, peak, 10, 60) - peak / 100.0).abs() < 1e-18);
    assert!((lr_schedule(99, spe, peak, 10, 60) - peak).abs() < 1e-18);
    assert_eq!(lr_schedule(599, spe, peak, 10, 60), 0.0);
    let mut prev = f64::INFINITY;
    for s in 99..600 {
        let lr = lr_schedule(s, spe, peak, 10, 60);
        assert!(lr <= prev && lr >= 0.0);
        prev = lr;
    }
    let mid = lr_schedule(349, spe, peak, 10, 60);
    assert!((mid - peak / 2.0).abs() < 1e-12);
}

#[test]
fn resizing_moves_landmarks_with_pixel_centers() {
    let lm = autosame_core::Landmarks::new(
        autosame_core::Point::new(0.0, 0.0),
        autosame_core::Point::new(63.0, 63.0),
        autosame_core::Point::new(31.5, 10.0),
    )
    .unwrap();
    let image = Array2::from_shape_fn((64, 64), |(r, c)| (r + c) as f32);
    let mask = Array2::from_shape_fn((64, 64), |(r, _)| (r < 32) as u8);
    let (img, msk, out) = resize_frame(&image, &mask, &lm, 32).unwrap();
    assert_eq!(img.dim(), (32, 32));
    let p = out.points();
    assert!((p[0].x + 0.25).abs() < 1e-12 && (p[1].x - 31.25).abs() < 1e-12);
    assert!((p[2].x - 15.5).abs() < 1e-12 && (p[2].y - 4.75).abs() < 1e-12);
    // Output pixel (r, c) averages input pixels 2r, 2r + 1.
    assert!((img[[3, 5]] - (2.0 * 3.0 + 0.5 + 2.0 * 5.0 + 0.5)).abs() < 1e-4);
    assert_eq!(msk.sum_axis(Axis(1)).to_vec()[15..17], [32, 0]);
}
