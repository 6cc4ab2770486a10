//! Measurement side of the dual-task LV pipeline: biplane Simpson's
//! quantification, landmark heatmaps, evaluation metrics, and synthetic echo
//! phantoms with analytically known volumes.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a as f64, $b as f64, $tol as f64);
        assert!((a - b).abs() <= tol, "{} vs {} (tol {})", a, b, tol);
    }};
}

pub mod augment;
pub mod dataset;
pub mod geometry;
pub mod heatmap;
pub mod metrics;
pub mod phantom;
pub mod quant;
pub mod split;

pub use geometry::{Landmarks, Phase, Point, View, VIEW_PHASES};
pub use quant::{
    diameter_profile, ejection_fraction, long_axis, measure_study, mitral_midpoint, simpson_biplane, DiskProfile,
    LVIndicators, QuantError, StudyQuad, ViewEntry, ViewMask,
};
