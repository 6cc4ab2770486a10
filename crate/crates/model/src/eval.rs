//! Evaluation on the generator path: thresholded masks, heatmap peaks, and
//! clinical indicators measured from both predictions and ground truth.

use std::fmt::Write as _;
use std::path::Path;

use autosame_core::heatmap::{extract_peak, pck, HeatmapError};
use autosame_core::metrics::{dice_coefficient, pearson_or_nan};
use autosame_core::quant::{QuantError, DEFAULT_DISKS};
use autosame_core::{measure_study, LVIndicators, Landmarks, Point, StudyQuad, ViewEntry, ViewMask};
use ndarray::{Array2, Array3, Axis};

use crate::data::{study_samples, DataError, Sample};
use crate::network::{Network, NetworkError, Prediction};

pub const MASK_THRESHOLD: f32 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Heatmap(#[from] HeatmapError),
    #[error("no studies to evaluate")]
    Empty,
}

/// Prediction for one frame, post-processed.
#[derive(Debug, Clone)]
pub struct FramePrediction {
    pub sample: Sample,
    pub raw: Prediction,
    pub mask: Array2<u8>,
    pub landmarks: [Point; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub id: String,
    /// Mean Dice over the four frames.
    pub dice: f64,
    /// Fraction of the twelve landmarks within threshold.
    pub pck: f64,
    /// EDL, ESL, EDV, ESV, EF; NaN where measurement failed.
    pub pred: [f64; 5],
    pub gt: [f64; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub dc: f64,
    pub pck: f64,
    /// Pearson r per indicator, NaN when undefined.
    pub corr: [f64; 5],
    /// Studies whose predicted or true indicators could not be measured.
    pub failed: usize,
    pub rows: Vec<StudyRow>,
}

fn binarize(prob: &Array2<f32>) -> Array2<u8> {
    prob.mapv(|p| (p > MASK_THRESHOLD) as u8)
}

/// Runs the network on the four frames of a study.
pub fn predict_study(net: &Network<f32>, study: &StudyQuad) -> Result<Vec<FramePrediction>, EvalError> {
    let samples = study_samples(study, net.config().input_size)?;
    let size = net.config().input_size;
    let mut images = Array3::zeros((samples.len(), size, size));
    for (i, s) in samples.iter().enumerate() {
        images.index_axis_mut(Axis(0), i).assign(&s.image);
    }
    let preds = net.predict(&images)?;
    samples
        .into_iter()
        .zip(preds)
        .map(|(sample, raw)| {
            let mut landmarks = [Point::default(); 3];
            for (k, slot) in landmarks.iter_mut().enumerate() {
                let (x, y) = extract_peak(raw.heatmaps.index_axis(Axis(0), k))?;
                *slot = Point::new(x, y);
            }
            Ok(FramePrediction {
                mask: binarize(&raw.mask_prob),
                sample,
                raw,
                landmarks,
            })
        })
        .collect()
}

fn indicators(
    id: &str,
    frames: &[FramePrediction],
    pick: impl Fn(&FramePrediction) -> (Array2<u8>, [Point; 3]),
) -> Result<LVIndicators, QuantError> {
    let entries = frames
        .iter()
        .map(|f| {
            let (grid, pts) = pick(f);
            let mask = ViewMask::new(grid, f.sample.view, f.sample.phase, f.sample.spacing_mm)?;
            ViewEntry::new(mask, Landmarks::from_points(pts)?, None)
        })
        .collect::<Result<Vec<_>, _>>()?;
    measure_study(&StudyQuad::new(id, entries)?, DEFAULT_DISKS)
}

fn nan_row(r: Result<LVIndicators, QuantError>, id: &str, what: &str) -> [f64; 5] {
    match r {
        Ok(ind) => ind.to_array(),
        Err(e) => {
            log::warn!("{id}: {what} indicators unavailable: {e}");
            [f64::NAN; 5]
        }
    }
}

pub fn study_row(id: &str, frames: &[FramePrediction]) -> Result<StudyRow, EvalError> {
    let dice = frames
        .iter()
        .map(|f| dice_coefficient(f.mask.view(), f.sample.mask.view()))
        .sum::<f64>()
        / frames.len() as f64;
    let size = frames[0].sample.mask.nrows();
    let pred_lm = frames
        .iter()
        .map(|f| Landmarks::from_points(f.landmarks))
        .collect::<Result<Vec<_>, _>>();
    let gt_lm: Vec<Landmarks> = frames.iter().map(|f| f.sample.landmarks).collect();
    let pck = match pred_lm {
        Ok(p) => pck(&p, &gt_lm, size)?,
        Err(_) => 0.0,
    };
    let pred = nan_row(indicators(id, frames, |f| (f.mask.clone(), f.landmarks)), id, "predicted");
    let gt = nan_row(
        indicators(id, frames, |f| (f.sample.mask.clone(), f.sample.landmarks.points())),
        id,
        "ground-truth",
    );
    Ok(StudyRow {
        id: id.to_string(),
        dice,
        pck,
        pred,
        gt,
    })
}

/// Aggregates per-study rows. Studies with any non-finite indicator are
/// left out of the correlations.
pub fn summarize(rows: Vec<StudyRow>) -> Result<EvalReport, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = rows.len() as f64;
    let dc = rows.iter().map(|r| r.dice).sum::<f64>() / n;
    let pck = rows.iter().map(|r| r.pck).sum::<f64>() / n;
    let ok: Vec<&StudyRow> = rows
        .iter()
        .filter(|r| r.pred.iter().chain(&r.gt).all(|v| v.is_finite()))
        .collect();
    let mut corr = [f64::NAN; 5];
    for (k, c) in corr.iter_mut().enumerate() {
        let x: Vec<f64> = ok.iter().map(|r| r.gt[k]).collect();
        let y: Vec<f64> = ok.iter().map(|r| r.pred[k]).collect();
        *c = pearson_or_nan(LVIndicators::NAMES[k], &x, &y);
    }
    Ok(EvalReport {
        dc,
        pck,
        corr,
        failed: rows.len() - ok.len(),
        rows,
    })
}

pub fn evaluate(net: &Network<f32>, studies: &[StudyQuad]) -> Result<EvalReport, EvalError> {
    let rows = studies
        .iter()
        .map(|s| study_row(s.id(), &predict_study(net, s)?))
        .collect::<Result<Vec<_>, _>>()?;
    summarize(rows)
}

impl EvalReport {
    pub fn rows_csv(&self) -> String {
        let names = LVIndicators::NAMES;
        let mut s = String::from("study_id,dice,pck");
        for p in ["pred", "gt"] {
            for n in names {
                write!(s, ",{p}_{n}").expect("string");
            }
        }
        s.push('\n');
        for r in &self.rows {
            write!(s, "{},{},{}", r.id, r.dice, r.pck).expect("string");
            for v in r.pred.iter().chain(&r.gt) {
                write!(s, ",{v}").expect("string");
            }
            s.push('\n');
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        writeln!(s, "DC,{}", self.dc).expect("string");
        writeln!(s, "PCK,{}", self.pck).expect("string");
        for (n, c) in LVIndicators::NAMES.iter().zip(self.corr) {
            writeln!(s, "corr_{n},{c}").expect("string");
        }
        writeln!(s, "failed_studies,{}", self.failed).expect("string");
        s
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("eval_studies.csv"), self.rows_csv())?;
        std::fs::write(dir.join("eval_summary.csv"), self.summary_csv())
    }
}
