//! On-disk study bundles.
//!
//! One directory per study, named by study id. Each of the four frames is
//! stored as `<VIEW>_<PHASE>_mask.png` (single channel, 0/255), an optional
//! `<VIEW>_<PHASE>_image.png` (8-bit grayscale) and a JSON sidecar
//! `<VIEW>_<PHASE>.json`:
//!
//! ```json
//! {"view": "A4C", "phase": "ED", "P_A": [x, y], "P_L": [x, y], "P_R": [x, y], "spacing_mm": 0.6}
//! ```
//!
//! `spacing_mm` may also be an `[x, y]` pair, which must be isotropic.
//! Phantom studies additionally carry `reference.json` with the analytic
//! indicators.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageReader, Luma};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::geometry::{Landmarks, Phase, Point, View, VIEW_PHASES};
use crate::quant::{LVIndicators, QuantError, StudyQuad, ViewEntry, ViewMask};

pub const REFERENCE_FILE: &str = "reference.json";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{path}: {msg}")]
    Image { path: PathBuf, msg: String },
    #[error("{path}: malformed JSON: {msg}")]
    MalformedJson { path: PathBuf, msg: String },
    #[error("{path}: anisotropic spacing {x} x {y} mm is not supported")]
    Anisotropic { path: PathBuf, x: f64, y: f64 },
    #[error("{path}: {view} ED spacing {ed} mm differs from ES spacing {es} mm")]
    InconsistentSpacing { path: PathBuf, view: View, ed: f64, es: f64 },
    #[error("{path}: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: QuantError,
    },
    #[error("{path}: sidecar says {found_view}/{found_phase}, file name says {view}/{phase}")]
    FrameMismatch {
        path: PathBuf,
        view: View,
        phase: Phase,
        found_view: View,
        found_phase: Phase,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Spacing {
    Isotropic(f64),
    PerAxis([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    view: View,
    phase: Phase,
    #[serde(rename = "P_A")]
    apex: [f64; 2],
    #[serde(rename = "P_L")]
    left: [f64; 2],
    #[serde(rename = "P_R")]
    right: [f64; 2],
    spacing_mm: Spacing,
}

pub fn frame_stem(view: View, phase: Phase) -> String {
    format!("{view}_{phase}")
}

pub fn mask_path(dir: &Path, view: View, phase: Phase) -> PathBuf {
    dir.join(format!("{}_mask.png", frame_stem(view, phase)))
}

pub fn image_path(dir: &Path, view: View, phase: Phase) -> PathBuf {
    dir.join(format!("{}_image.png", frame_stem(view, phase)))
}

pub fn sidecar_path(dir: &Path, view: View, phase: Phase) -> PathBuf {
    dir.join(format!("{}.json", frame_stem(view, phase)))
}

/// Writes `study` under `root/<id>` and returns that directory.
pub fn save_study(study: &StudyQuad, root: &Path) -> Result<PathBuf, DatasetError> {
    let dir = root.join(study.id());
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for entry in study.entries() {
        let (view, phase) = (entry.view(), entry.phase());
        let mp = mask_path(&dir, view, phase);
        save_gray(&mp, entry.mask.grid().mapv(|v| if v == 1 { 255 } else { 0 }))?;
        if let Some(img) = &entry.image {
            let ip = image_path(&dir, view, phase);
            save_gray(&ip, img.mapv(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))?;
        }
        let sidecar = Sidecar {
            view,
            phase,
            apex: entry.landmarks.apex().into(),
            left: entry.landmarks.left().into(),
            right: entry.landmarks.right().into(),
            spacing_mm: Spacing::Isotropic(entry.mask.spacing_mm()),
        };
        let jp = sidecar_path(&dir, view, phase);
        let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        fs::write(&jp, text).map_err(io_err(&jp))?;
    }
    Ok(dir)
}

pub fn save_reference(dir: &Path, indicators: &LVIndicators) -> Result<(), DatasetError> {
    let path = dir.join(REFERENCE_FILE);
    let text = serde_json::to_string_pretty(indicators).expect("indicators serialize");
    fs::write(&path, text).map_err(io_err(&path))
}

/// Reference indicators stored next to a study, if any.
pub fn load_reference(dir: &Path) -> Result<Option<LVIndicators>, DatasetError> {
    let path = dir.join(REFERENCE_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| DatasetError::MalformedJson {
            path,
            msg: e.to_string(),
        })
}

fn save_gray(path: &Path, data: Array2<u8>) -> Result<(), DatasetError> {
    let (h, w) = data.dim();
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| Luma([data[[y as usize, x as usize]]]));
    img.save(path).map_err(|e| DatasetError::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn load_gray(path: &Path) -> Result<Array2<u8>, DatasetError> {
    if !path.exists() {
        return Err(DatasetError::MissingFile(path.to_path_buf()));
    }
    let img_err = |msg: String| DatasetError::Image {
        path: path.to_path_buf(),
        msg,
    };
    let img = ImageReader::open(path)
        .map_err(io_err(path))?
        .decode()
        .map_err(|e| img_err(e.to_string()))?
        .to_luma8();
    let (w, h) = img.dimensions();
    Ok(Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
        img.get_pixel(c as u32, r as u32).0[0]
    }))
}

fn load_sidecar(path: &Path) -> Result<Sidecar, DatasetError> {
    if !path.exists() {
        return Err(DatasetError::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| DatasetError::MalformedJson {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn load_frame(dir: &Path, view: View, phase: Phase) -> Result<ViewEntry, DatasetError> {
    let jp = sidecar_path(dir, view, phase);
    let side = load_sidecar(&jp)?;
    if (side.view, side.phase) != (view, phase) {
        return Err(DatasetError::FrameMismatch {
            path: jp,
            view,
            phase,
            found_view: side.view,
            found_phase: side.phase,
        });
    }
    let spacing = match side.spacing_mm {
        Spacing::Isotropic(s) => s,
        Spacing::PerAxis([x, y]) if x == y => x,
        Spacing::PerAxis([x, y]) => return Err(DatasetError::Anisotropic { path: jp, x, y }),
    };
    let mp = mask_path(dir, view, phase);
    let raw = load_gray(&mp)?;
    if let Some(v) = raw.iter().find(|&&v| v != 0 && v != 255) {
        return Err(DatasetError::Image {
            path: mp,
            msg: format!("mask value {v} is neither 0 nor 255"),
        });
    }
    let invalid = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DatasetError::Invalid { path, source }
    };
    let mask = ViewMask::new(raw.mapv(|v| (v == 255) as u8), view, phase, spacing).map_err(invalid(&mp))?;
    let landmarks = Landmarks::new(
        Point::from(side.apex),
        Point::from(side.left),
        Point::from(side.right),
    )
    .map_err(|e| DatasetError::Invalid {
        path: jp.clone(),
        source: e.into(),
    })?;
    let ip = image_path(dir, view, phase);
    let image = if ip.exists() {
        Some(load_gray(&ip)?.mapv(|v| v as f32 / 255.0))
    } else {
        None
    };
    ViewEntry::new(mask, landmarks, image).map_err(invalid(&jp))
}

/// Loads one study directory; the study id is the directory name.
pub fn load_study(dir: &Path) -> Result<StudyQuad, DatasetError> {
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let entries = VIEW_PHASES
        .iter()
        .map(|&(v, p)| load_frame(dir, v, p))
        .collect::<Result<Vec<_>, _>>()?;
    StudyQuad::new(id, entries).map_err(|e| match e {
        QuantError::InconsistentSpacing { view, ed, es } => DatasetError::InconsistentSpacing {
            path: sidecar_path(dir, view, Phase::ES),
            view,
            ed,
            es,
        },
        other => DatasetError::Invalid {
            path: dir.to_path_buf(),
            source: other,
        },
    })
}

/// Study directories under `root`, sorted by name.
pub fn study_dirs(root: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let path = entry.map_err(io_err(root))?.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

pub fn load_dataset(root: &Path) -> Result<Vec<StudyQuad>, DatasetError> {
    study_dirs(root)?.iter().map(|d| load_study(d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_phantom_study, PhantomParams};
    use rand::SeedableRng;

    fn phantom() -> StudyQuad {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let params = PhantomParams::random(&mut rng, 99);
        generate_phantom_study(&params, "study_a").unwrap().0
    }

    #[test]
    fn round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let study = phantom();
        let dir = save_study(&study, tmp.path()).unwrap();
        assert_eq!(dir, tmp.path().join("study_a"));
        let back = load_study(&dir).unwrap();
        assert_eq!(back, study);
        assert_eq!(load_dataset(tmp.path()).unwrap(), vec![study]);
    }

    #[test]
    fn missing_mask_is_named() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = save_study(&phantom(), tmp.path()).unwrap();
        let gone = mask_path(&dir, View::A2C, Phase::ES);
        fs::remove_file(&gone).unwrap();
        let err = load_study(&dir).unwrap_err();
        assert!(matches!(&err, DatasetError::MissingFile(p) if *p == gone));
        assert!(err.to_string().contains("A2C_ES_mask.png"));
    }

    #[test]
    fn inconsistent_spacing() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = save_study(&phantom(), tmp.path()).unwrap();
        let jp = sidecar_path(&dir, View::A4C, Phase::ES);
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&jp).unwrap()).unwrap();
        v["spacing_mm"] = serde_json::json!(0.123);
        fs::write(&jp, v.to_string()).unwrap();
        assert!(matches!(
            load_study(&dir),
            Err(DatasetError::InconsistentSpacing { view: View::A4C, .. })
        ));
    }

    #[test]
    fn anisotropic_and_malformed() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = save_study(&phantom(), tmp.path()).unwrap();
        let jp = sidecar_path(&dir, View::A2C, Phase::ED);
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&jp).unwrap()).unwrap();
        v["spacing_mm"] = serde_json::json!([0.5, 0.6]);
        fs::write(&jp, v.to_string()).unwrap();
        assert!(matches!(load_study(&dir), Err(DatasetError::Anisotropic { .. })));
        v["spacing_mm"] = serde_json::json!([0.5, 0.5]);
        fs::write(&jp, v.to_string()).unwrap();
        // Spacing differs from ES now; fix ES too by loading the frame alone.
        assert!(load_frame(&dir, View::A2C, Phase::ED).is_ok());
        fs::write(&jp, "{ not json").unwrap();
        let err = load_study(&dir).unwrap_err();
        assert!(matches!(err, DatasetError::MalformedJson { .. }));
        assert!(err.to_string().contains("A2C_ED.json"));
    }

    #[test]
    fn reference_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        assert_eq!(load_reference(tmp.path()).unwrap(), None);
        let ind = LVIndicators::from_volumes(80.0, 70.0, 120.0, 50.0).unwrap();
        save_reference(tmp.path(), &ind).unwrap();
        assert_eq!(load_reference(tmp.path()).unwrap(), Some(ind));
    }
}
