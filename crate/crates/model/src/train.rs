//! Seeded training loop with per-epoch checkpoints and resume.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use autosame_core::augment::AugmentConfig;
use autosame_core::dataset::{load_dataset, DatasetError};
use autosame_core::heatmap::{sigma_schedule, HeatmapError};
use autosame_core::split::{read_manifest, SplitError};
use autosame_core::StudyQuad;
use autosame_tensor::{Graph, ParamStore};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointError, Header};
use crate::config::ModelConfig;
use crate::data::{augment_sample, make_batch, study_samples, DataError, Sample};
use crate::loss::{total_loss, LossWeights, Targets};
use crate::network::{Network, NetworkError};
use crate::optim::{Adam, AdamConfig};
use crate::prompting::PromptError;
use crate::schedule::lr_schedule;

pub const LOSS_CSV: &str = "loss.csv";
pub const CHECKPOINT: &str = "checkpoint.bin";
pub const NONFINITE_DUMP: &str = "nonfinite_dump.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub input_size: usize,
    pub peak_lr: f64,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub weights: LossWeights,
    pub seed: u64,
    pub data_root: PathBuf,
    pub out: PathBuf,
    /// Study ids to train on, one per line; all studies under `data_root`
    /// when absent.
    pub train_manifest: Option<PathBuf>,
    pub augment: bool,
    pub augment_config: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            input_size: 256,
            peak_lr: 2e-4,
            epochs: 60,
            warmup_epochs: 10,
            weights: LossWeights::default(),
            seed: 0,
            data_root: PathBuf::from("data"),
            out: PathBuf::from("out"),
            train_manifest: None,
            augment: true,
            augment_config: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Short run for overfitting a small phantom set with the desk network.
    pub fn smoke() -> Self {
        Self {
            batch_size: 2,
            peak_lr: 1e-3,
            epochs: 30,
            augment: false,
            ..Self::default()
        }
    }

    /// Desk-scale run on a few dozen phantom studies, with augmentation.
    pub fn generalization() -> Self {
        Self {
            epochs: 20,
            augment: true,
            ..Self::smoke()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.warmup_epochs >= self.epochs {
            return bad(format!(
                "warmup_epochs {} must be below epochs {}",
                self.warmup_epochs, self.epochs
            ));
        }
        if !(self.peak_lr.is_finite() && self.peak_lr > 0.0) {
            return bad(format!("peak_lr {} must be positive", self.peak_lr));
        }
        let w = self.weights;
        if [w.dice, w.mse, w.align].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad(format!("loss weights must be nonnegative, got {w:?}"));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Heatmap(#[from] HeatmapError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no training studies found under {0}")]
    NoStudies(PathBuf),
    #[error("model input size {model} differs from train input size {train}")]
    InputSize { model: usize, train: usize },
    #[error("non-finite loss at epoch {epoch}, step {step}; diagnostics in {dump}")]
    NonFinite { epoch: usize, step: u64, dump: PathBuf },
    #[error("checkpoint {path} was written by a different configuration: {what}")]
    ResumeMismatch { path: PathBuf, what: String },
}

/// One optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    pub lr: f64,
    pub sigma: f64,
    pub total: f64,
    pub dice: f64,
    pub mse: f64,
    /// Weighted alignment contribution; exactly 0 after warm-up.
    pub align: f64,
}

impl StepRecord {
    pub const CSV_HEADER: &'static str = "epoch,step,lr,sigma,total,dice,mse,align";

    fn csv(&self) -> String {
        format!(
            "{},{},{:e},{},{:e},{:e},{:e},{:e}",
            self.epoch, self.step, self.lr, self.sigma, self.total, self.dice, self.mse, self.align
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    /// Steps run by this call (after the resume point, if any).
    pub history: Vec<StepRecord>,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Studies under `data_root`, restricted to the manifest if one is given.
pub fn load_training_studies(cfg: &TrainConfig) -> Result<Vec<StudyQuad>, TrainError> {
    let mut studies = load_dataset(&cfg.data_root)?;
    if let Some(m) = &cfg.train_manifest {
        let ids = read_manifest(m)?;
        studies.retain(|s| ids.iter().any(|i| i == s.id()));
    }
    if studies.is_empty() {
        return Err(TrainError::NoStudies(cfg.data_root.clone()));
    }
    Ok(studies)
}

fn param_summary(store: &ParamStore<f32>) -> serde_json::Value {
    store
        .iter()
        .map(|(name, p)| {
            let nonfinite = p.value.iter().filter(|v| !v.is_finite()).count();
            let max_abs = p.value.iter().filter(|v| v.is_finite()).fold(0f32, |m, v| m.max(v.abs()));
            (name.to_string(), serde_json::json!({ "nonfinite": nonfinite, "max_abs": max_abs }))
        })
        .collect::<serde_json::Map<_, _>>()
        .into()
}

/// Loss rows from an earlier run that precede `epoch`.
fn kept_rows(csv: &Path, epoch: usize) -> Vec<String> {
    fs::read_to_string(csv)
        .map(|s| {
            s.lines()
                .skip(1)
                .filter(|l| l.split(',').next().and_then(|e| e.parse::<usize>().ok()).is_some_and(|e| e < epoch))
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default()
}

/// Trains from scratch, or continues from `resume` with the run's own
/// configuration, which must match `cfg` and `model`.
pub fn train(cfg: &TrainConfig, model: &ModelConfig, resume: Option<&Path>) -> Result<TrainOutcome, TrainError> {
    train_until(cfg, model, resume, cfg.epochs)
}

/// Like [`train`], but stops after epoch `stop - 1`, leaving a checkpoint
/// from which the run can be resumed.
pub fn train_until(
    cfg: &TrainConfig,
    model: &ModelConfig,
    resume: Option<&Path>,
    stop: usize,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    model.validate().map_err(NetworkError::from)?;
    if model.input_size != cfg.input_size {
        return Err(TrainError::InputSize {
            model: model.input_size,
            train: cfg.input_size,
        });
    }
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;

    let studies = load_training_studies(cfg)?;
    let mut samples: Vec<Sample> = Vec::new();
    for s in &studies {
        samples.extend(study_samples(s, cfg.input_size)?);
    }

    let (mut net, mut adam, mut rng, start_epoch, mut step) = match resume {
        None => (
            Network::<f32>::new(model.clone(), cfg.seed)?,
            Adam::new(AdamConfig::default()),
            ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1)),
            0,
            0u64,
        ),
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let mismatch = |what: &str| TrainError::ResumeMismatch {
                path: path.to_path_buf(),
                what: what.to_string(),
            };
            if &ck.header.model != model {
                return Err(mismatch("model config"));
            }
            let mut expected = ck.header.train.clone();
            expected.out = cfg.out.clone();
            expected.data_root = cfg.data_root.clone();
            expected.train_manifest = cfg.train_manifest.clone();
            if &expected != cfg {
                return Err(mismatch("train config"));
            }
            log::info!("resuming from {} after epoch {}", path.display(), ck.header.epoch);
            (
                Network::from_store(model.clone(), ck.params)?,
                ck.adam,
                ck.header.rng,
                ck.header.epoch,
                ck.header.step,
            )
        }
    };

    let csv_path = cfg.out.join(LOSS_CSV);
    let previous = if resume.is_some() { kept_rows(&csv_path, start_epoch) } else { Vec::new() };
    let mut csv = fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    writeln!(csv, "{}", StepRecord::CSV_HEADER).map_err(io_err(&csv_path))?;
    for row in previous {
        writeln!(csv, "{row}").map_err(io_err(&csv_path))?;
    }

    let steps_per_epoch = samples.len().div_ceil(cfg.batch_size);
    let ckpt_path = cfg.out.join(CHECKPOINT);
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..samples.len()).collect();

    for epoch in start_epoch..stop.min(cfg.epochs) {
        let sigma = sigma_schedule(epoch, cfg.warmup_epochs, cfg.epochs)?;
        let weights = cfg.weights.for_epoch(epoch, cfg.warmup_epochs);
        order.sort_unstable();
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Sample> = chunk
                .iter()
                .map(|&i| {
                    if cfg.augment {
                        augment_sample(&samples[i], &mut rng, &cfg.augment_config)
                    } else {
                        samples[i].clone()
                    }
                })
                .collect();
            let arrays = make_batch(&batch, sigma, net.prompt_encoder())?;
            let lr = lr_schedule(step as usize, steps_per_epoch, cfg.peak_lr, cfg.warmup_epochs, cfg.epochs);

            let graph = Graph::new();
            let images = graph.input(arrays.images.into_dyn());
            let out = net.forward(&graph, &images, None)?;
            let targets = Targets {
                mask: graph.constant(arrays.masks.into_dyn()),
                heatmaps: graph.constant(arrays.heatmaps.into_dyn()),
                pe_seg: graph.constant(arrays.pe_seg.into_dyn()),
                pe_hr: graph.constant(arrays.pe_hr.into_dyn()),
            };
            let terms = total_loss(&out, &targets, &weights)?;
            let record = StepRecord {
                epoch,
                step,
                lr,
                sigma,
                total: terms.total.item() as f64,
                dice: terms.dice,
                mse: terms.mse,
                align: weights.align * terms.align,
            };
            if !record.total.is_finite() {
                let dump = cfg.out.join(NONFINITE_DUMP);
                let studies: Vec<String> = batch.iter().map(|s| format!("{} {}/{}", s.study, s.view, s.phase)).collect();
                let body = serde_json::json!({
                    "record": record,
                    "batch": studies,
                    "params": param_summary(net.store()),
                });
                fs::write(&dump, serde_json::to_string_pretty(&body).expect("json"))
                    .map_err(io_err(&dump))?;
                log::error!("non-finite loss at epoch {epoch} step {step}");
                return Err(TrainError::NonFinite { epoch, step, dump });
            }
            let grads = graph.backward(&terms.total);
            adam.update(net.store_mut(), &grads, lr);
            writeln!(csv, "{}", record.csv()).map_err(io_err(&csv_path))?;
            history.push(record);
            step += 1;
        }
        csv.flush().map_err(io_err(&csv_path))?;
        let last = &history[history.len() - 1];
        log::info!(
            "epoch {epoch}: loss {:.4} dice {:.4} mse {:.5} align {:.4} lr {:.2e} sigma {sigma:.1}",
            last.total,
            last.dice,
            last.mse,
            last.align,
            last.lr
        );
        let ck = Checkpoint {
            header: Header {
                model: model.clone(),
                train: cfg.clone(),
                epoch: epoch + 1,
                step,
                adam: adam.config,
                rng: rng.clone(),
            },
            params: net.store().clone(),
            adam: adam.clone(),
        };
        ck.save(&ckpt_path)?;
    }
    Ok(TrainOutcome {
        checkpoint: ckpt_path,
        history,
    })
}
