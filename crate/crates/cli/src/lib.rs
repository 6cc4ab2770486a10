//! Subcommands of the `autosame` binary.

pub mod config;
pub mod plot;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use autosame_core::dataset::{load_dataset, save_reference, save_study};
use autosame_core::phantom::generate_dataset;
use autosame_core::quant::DEFAULT_DISKS;
use autosame_core::split::{fold_split, read_manifest, write_manifests};
use autosame_core::{measure_study, LVIndicators, StudyQuad};
use autosame_model::checkpoint::Checkpoint;
use autosame_model::eval::{predict_study, study_row, summarize, EvalReport};
use autosame_model::train::{train, TrainOutcome};
use autosame_model::Network;

use crate::config::Overrides;

/// Writes `count` phantom studies, each with its reference indicators, and
/// optionally the manifests of one ten-fold split.
pub fn phantom(count: usize, seed: u64, out: &Path, split: Option<(&Path, usize)>) -> Result<Vec<String>> {
    let studies = generate_dataset(count, seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut ids = Vec::with_capacity(count);
    for (study, reference) in &studies {
        let dir = save_study(study, out)?;
        save_reference(&dir, reference)?;
        ids.push(study.id().to_string());
    }
    if let Some((dir, fold)) = split {
        write_manifests(&fold_split(&ids, seed, fold)?, dir)?;
    }
    Ok(ids)
}

pub fn run_train(file: Option<&Path>, flags: &Overrides, resume: Option<&Path>) -> Result<TrainOutcome> {
    let base = match file {
        Some(p) => Overrides::load(p)?,
        None => Overrides::default(),
    };
    let (cfg, model) = base.merged(flags).resolve();
    log::info!("training {:?} for {} epochs into {}", cfg.data_root, cfg.epochs, cfg.out.display());
    Ok(train(&cfg, &model, resume)?)
}

/// Studies under `root`, restricted to a manifest if one is given.
pub fn load_studies(root: &Path, manifest: Option<&Path>) -> Result<Vec<StudyQuad>> {
    let mut studies = load_dataset(root)?;
    if let Some(m) = manifest {
        let ids = read_manifest(m)?;
        let missing: Vec<&String> = ids.iter().filter(|i| !studies.iter().any(|s| s.id() == i.as_str())).collect();
        if !missing.is_empty() {
            bail!("manifest {} names studies not under {}: {missing:?}", m.display(), root.display());
        }
        studies.retain(|s| ids.iter().any(|i| i == s.id()));
    }
    if studies.is_empty() {
        bail!("no studies under {}", root.display());
    }
    Ok(studies)
}

pub fn load_network(checkpoint: &Path) -> Result<Network<f32>> {
    let ck = Checkpoint::load(checkpoint)?;
    Ok(Network::from_store(ck.header.model, ck.params)?)
}

pub fn run_eval(checkpoint: &Path, studies: &[StudyQuad], out: &Path) -> Result<EvalReport> {
    let net = load_network(checkpoint)?;
    let report = autosame_model::eval::evaluate(&net, studies)?;
    report.write(out).with_context(|| format!("writing reports into {}", out.display()))?;
    Ok(report)
}

/// `study_id,EDL,ESL,EDV,ESV,EF`; a study that cannot be measured aborts.
pub fn measure_csv(studies: &[StudyQuad], disks: usize) -> Result<String> {
    let mut s = format!("study_id,{}\n", LVIndicators::NAMES.join(","));
    for study in studies {
        let ind = measure_study(study, disks).with_context(|| format!("measuring {}", study.id()))?;
        write!(s, "{}", study.id()).expect("string");
        for v in ind.to_array() {
            write!(s, ",{v}").expect("string");
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn run_measure(studies: &[StudyQuad], disks: Option<usize>, out: &Path) -> Result<()> {
    let csv = measure_csv(studies, disks.unwrap_or(DEFAULT_DISKS))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(out, csv).with_context(|| format!("writing {}", out.display()))
}

fn save_png(img: &image::RgbImage, path: &Path) -> Result<()> {
    img.save(path).with_context(|| format!("writing {}", path.display()))
}

/// Evaluation CSVs, one scatter plot per indicator, and overlays for the
/// first `overlays` studies. Returns the files written.
pub fn run_report(checkpoint: &Path, studies: &[StudyQuad], out: &Path, overlays: usize) -> Result<Vec<PathBuf>> {
    let net = load_network(checkpoint)?;
    fs::create_dir_all(out.join("overlays"))?;
    let mut written = Vec::new();
    let mut rows = Vec::with_capacity(studies.len());
    for (i, study) in studies.iter().enumerate() {
        let frames = predict_study(&net, study)?;
        rows.push(study_row(study.id(), &frames)?);
        if i < overlays {
            for f in &frames {
                let img = plot::overlay(
                    &f.sample.image,
                    (&f.sample.mask, &f.sample.landmarks.points()),
                    (&f.mask, &f.landmarks),
                );
                let path = out.join("overlays").join(format!("{}_{}_{}.png", study.id(), f.sample.view, f.sample.phase));
                save_png(&img, &path)?;
                written.push(path);
            }
        }
    }
    let report = summarize(rows)?;
    report.write(out)?;
    written.push(out.join("eval_studies.csv"));
    written.push(out.join("eval_summary.csv"));
    for (k, name) in LVIndicators::NAMES.iter().enumerate() {
        let truth: Vec<f64> = report.rows.iter().map(|r| r.gt[k]).collect();
        let pred: Vec<f64> = report.rows.iter().map(|r| r.pred[k]).collect();
        let path = out.join(format!("scatter_{name}.png"));
        save_png(&plot::scatter(&truth, &pred, 480), &path)?;
        written.push(path);
    }
    Ok(written)
}
