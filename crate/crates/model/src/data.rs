//! Frames as network samples: resizing to the input size, augmentation and
//! batch assembly.

use autosame_core::augment::{augment, bilinear, AugmentConfig, AugmentError};
use autosame_core::geometry::LandmarkError;
use autosame_core::heatmap::{HeatmapError, HeatmapSet};
use autosame_core::{Landmarks, Phase, Point, StudyQuad, View};
use autosame_tensor::Float;
use ndarray::{s, Array2, Array3, Array4};
use rand::Rng;

use crate::prompting::{PromptEncoder, PromptError};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("study {study} {view}/{phase} has no image")]
    MissingImage { study: String, view: View, phase: Phase },
    #[error("study {study} frame is {h}x{w}; only square frames can be resized isotropically")]
    NonSquare { study: String, h: usize, w: usize },
    #[error(transparent)]
    Landmark(#[from] LandmarkError),
    #[error(transparent)]
    Heatmap(#[from] HeatmapError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("empty batch")]
    EmptyBatch,
}

/// One frame at the network's input size.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub study: String,
    pub view: View,
    pub phase: Phase,
    pub image: Array2<f32>,
    pub mask: Array2<u8>,
    pub landmarks: Landmarks,
    /// Pixel spacing after resizing.
    pub spacing_mm: f64,
}

/// Maps pixel centers of an `n_in` grid onto an `n_out` grid.
fn rescale(v: f64, n_in: usize, n_out: usize) -> f64 {
    (v + 0.5) * n_out as f64 / n_in as f64 - 0.5
}

/// Bilinear image, nearest-neighbour mask, landmarks moved with the pixel
/// centers.
pub fn resize_frame(
    image: &Array2<f32>,
    mask: &Array2<u8>,
    lm: &Landmarks,
    size: usize,
) -> Result<(Array2<f32>, Array2<u8>, Landmarks), LandmarkError> {
    let (h, w) = image.dim();
    if (h, w) == (size, size) {
        return Ok((image.clone(), mask.clone(), *lm));
    }
    let src = |r: usize, c: usize| Point::new(rescale(c as f64, size, w), rescale(r as f64, size, h));
    let img = Array2::from_shape_fn((size, size), |(r, c)| bilinear(image, src(r, c)));
    let msk = Array2::from_shape_fn((size, size), |(r, c)| {
        let p = src(r, c);
        let rr = (p.y.round().max(0.0) as usize).min(h - 1);
        let cc = (p.x.round().max(0.0) as usize).min(w - 1);
        mask[[rr, cc]]
    });
    let lm = lm.map(|p| Point::new(rescale(p.x, w, size), rescale(p.y, h, size)))?;
    Ok((img, msk, lm))
}

/// The four frames of a study, resized to `size`.
pub fn study_samples(study: &StudyQuad, size: usize) -> Result<Vec<Sample>, DataError> {
    study
        .entries()
        .iter()
        .map(|e| {
            let image = e.image.as_ref().ok_or_else(|| DataError::MissingImage {
                study: study.id().to_string(),
                view: e.view(),
                phase: e.phase(),
            })?;
            let (h, w) = image.dim();
            if h != w {
                return Err(DataError::NonSquare {
                    study: study.id().to_string(),
                    h,
                    w,
                });
            }
            let (image, mask, landmarks) = resize_frame(image, e.mask.grid(), &e.landmarks, size)?;
            Ok(Sample {
                study: study.id().to_string(),
                view: e.view(),
                phase: e.phase(),
                image,
                mask,
                landmarks,
                spacing_mm: e.mask.spacing_mm() * w as f64 / size as f64,
            })
        })
        .collect()
}

/// Augments a sample; if no draw keeps the landmarks in frame or the box
/// vanishes, the sample is used unchanged.
pub fn augment_sample<R: Rng + ?Sized>(sample: &Sample, rng: &mut R, cfg: &AugmentConfig) -> Sample {
    match augment(&sample.image, &sample.mask, &sample.landmarks, rng, cfg) {
        Ok(a) if a.mask.iter().any(|&v| v != 0) => Sample {
            image: a.image,
            mask: a.mask,
            landmarks: a.landmarks,
            ..sample.clone()
        },
        Ok(_) | Err(AugmentError::SkipSample { .. }) => {
            log::debug!("augmentation skipped for {} {}/{}", sample.study, sample.view, sample.phase);
            sample.clone()
        }
        Err(e) => panic!("augmenting consistent shapes failed: {e}"),
    }
}

/// Arrays for one batch of `b` samples.
#[derive(Debug, Clone)]
pub struct BatchArrays<T> {
    /// (b, 1, S, S).
    pub images: Array4<T>,
    /// (b, 1, S, S).
    pub masks: Array4<T>,
    /// (b, 3, S, S).
    pub heatmaps: Array4<T>,
    /// (b, 2, d) and (b, 3, d) prompt-encoder tokens of the true box and
    /// points.
    pub pe_seg: Array3<T>,
    pub pe_hr: Array3<T>,
}

pub fn make_batch<T: Float>(samples: &[Sample], sigma: f64, pe: &PromptEncoder<T>) -> Result<BatchArrays<T>, DataError> {
    let first = samples.first().ok_or(DataError::EmptyBatch)?;
    let size = first.image.nrows();
    let (b, d) = (samples.len(), pe.dim());
    let mut out = BatchArrays {
        images: Array4::zeros((b, 1, size, size)),
        masks: Array4::zeros((b, 1, size, size)),
        heatmaps: Array4::zeros((b, 3, size, size)),
        pe_seg: Array3::zeros((b, 2, d)),
        pe_hr: Array3::zeros((b, 3, d)),
    };
    for (i, s) in samples.iter().enumerate() {
        out.images
            .slice_mut(s![i, 0, .., ..])
            .assign(&s.image.mapv(|v| T::of(v as f64)));
        out.masks
            .slice_mut(s![i, 0, .., ..])
            .assign(&s.mask.mapv(|v| if v != 0 { T::one() } else { T::zero() }));
        let hm = HeatmapSet::from_landmarks(&s.landmarks, sigma, (size, size))?;
        out.heatmaps
            .slice_mut(s![i, .., .., ..])
            .assign(&hm.maps.mapv(|v| T::of(v as f64)));
        out.pe_seg.slice_mut(s![i, .., ..]).assign(&pe.encode_box_grid(&s.mask)?.tokens);
        out.pe_hr
            .slice_mut(s![i, .., ..])
            .assign(&pe.encode_points(&s.landmarks, (size, size))?.tokens);
    }
    Ok(out)
}
