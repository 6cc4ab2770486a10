//! Gaussian landmark heatmaps, peak decoding, the sigma annealing schedule
//! and the PCK metric.

use ndarray::{Array2, Array3, ArrayView2};

use crate::geometry::{Landmarks, Point};

pub const SIGMA_START: f64 = 20.0;
pub const SIGMA_END: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HeatmapError {
    #[error("point ({x}, {y}) is outside the {w}x{h} grid")]
    OutOfGrid { x: f64, y: f64, w: usize, h: usize },
    #[error("sigma must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("epoch {epoch} invalid for {total} epochs with {warmup} warm-up epochs")]
    InvalidEpoch { epoch: usize, warmup: usize, total: usize },
    #[error("heatmap is constant; no peak to extract")]
    ConstantMap,
    #[error("prediction list has {pred} items but ground truth has {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("input size must be positive")]
    ZeroInputSize,
}

/// Amplitude-1 Gaussian centered at `point`, evaluated at pixel centers.
pub fn make_heatmap(point: Point, sigma_px: f64, (h, w): (usize, usize)) -> Result<Array2<f32>, HeatmapError> {
    if !(sigma_px > 0.0 && sigma_px.is_finite()) {
        return Err(HeatmapError::InvalidSigma(sigma_px));
    }
    if !(point.x >= 0.0 && point.x < w as f64 && point.y >= 0.0 && point.y < h as f64) {
        return Err(HeatmapError::OutOfGrid {
            x: point.x,
            y: point.y,
            w,
            h,
        });
    }
    let inv = 1.0 / (2.0 * sigma_px * sigma_px);
    // Separable: exp(-(dx^2 + dy^2) k) = exp(-dx^2 k) exp(-dy^2 k).
    let gx: Vec<f64> = (0..w).map(|c| (-(c as f64 - point.x).powi(2) * inv).exp()).collect();
    let gy: Vec<f64> = (0..h).map(|r| (-(r as f64 - point.y).powi(2) * inv).exp()).collect();
    Ok(Array2::from_shape_fn((h, w), |(r, c)| (gy[r] * gx[c]) as f32))
}

/// One channel per landmark, in `P_A, P_L, P_R` order.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapSet {
    pub maps: Array3<f32>,
    pub sigma_px: f64,
}

impl HeatmapSet {
    pub fn from_landmarks(lm: &Landmarks, sigma_px: f64, shape: (usize, usize)) -> Result<Self, HeatmapError> {
        let mut maps = Array3::zeros((3, shape.0, shape.1));
        for (k, p) in lm.points().into_iter().enumerate() {
            maps.index_axis_mut(ndarray::Axis(0), k).assign(&make_heatmap(p, sigma_px, shape)?);
        }
        Ok(Self { maps, sigma_px })
    }

    /// Peak positions of the three channels.
    pub fn peaks(&self) -> Result<[Point; 3], HeatmapError> {
        let mut out = [Point::default(); 3];
        for (k, slot) in out.iter_mut().enumerate() {
            let (x, y) = extract_peak(self.maps.index_axis(ndarray::Axis(0), k))?;
            *slot = Point::new(x, y);
        }
        Ok(out)
    }
}

/// Heatmap width for `epoch`: constant through warm-up, then linear decay to
/// the final value at the last epoch.
pub fn sigma_schedule(epoch: usize, warmup_epochs: usize, total_epochs: usize) -> Result<f64, HeatmapError> {
    if epoch >= total_epochs || warmup_epochs >= total_epochs {
        return Err(HeatmapError::InvalidEpoch {
            epoch,
            warmup: warmup_epochs,
            total: total_epochs,
        });
    }
    if epoch < warmup_epochs {
        return Ok(SIGMA_START);
    }
    let span = (total_epochs - 1 - warmup_epochs) as f64;
    if span == 0.0 {
        return Ok(SIGMA_END);
    }
    let frac = (epoch - warmup_epochs) as f64 / span;
    Ok(SIGMA_START + (SIGMA_END - SIGMA_START) * frac)
}

/// Argmax with a per-axis three-point quadratic refinement clamped to half a
/// pixel. Returns `(x, y)`.
pub fn extract_peak(map: ArrayView2<'_, f32>) -> Result<(f64, f64), HeatmapError> {
    let (h, w) = map.dim();
    let mut best = (0, 0);
    let mut max = f32::NEG_INFINITY;
    let mut min = f32::INFINITY;
    for ((r, c), &v) in map.indexed_iter() {
        if v > max {
            max = v;
            best = (r, c);
        }
        min = min.min(v);
    }
    if !(max > min) {
        return Err(HeatmapError::ConstantMap);
    }
    let (r, c) = best;
    let refine = |lo: f32, mid: f32, hi: f32| -> f64 {
        let (lo, mid, hi) = (lo as f64, mid as f64, hi as f64);
        let denom = lo - 2.0 * mid + hi;
        if denom >= 0.0 {
            return 0.0;
        }
        (0.5 * (lo - hi) / denom).clamp(-0.5, 0.5)
    };
    let dx = if c > 0 && c + 1 < w {
        refine(map[[r, c - 1]], map[[r, c]], map[[r, c + 1]])
    } else {
        0.0
    };
    let dy = if r > 0 && r + 1 < h {
        refine(map[[r - 1, c]], map[[r, c]], map[[r + 1, c]])
    } else {
        0.0
    };
    Ok((c as f64 + dx, r as f64 + dy))
}

/// Fraction of landmarks within `input_size / 20` pixels of ground truth
/// (inclusive).
pub fn pck(pred: &[Landmarks], gt: &[Landmarks], input_size: usize) -> Result<f64, HeatmapError> {
    if pred.len() != gt.len() {
        return Err(HeatmapError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    if input_size == 0 {
        return Err(HeatmapError::ZeroInputSize);
    }
    if gt.is_empty() {
        return Ok(1.0);
    }
    let threshold = pck_threshold(input_size);
    let hits = pred
        .iter()
        .zip(gt)
        .flat_map(|(p, g)| p.points().into_iter().zip(g.points()))
        .filter(|(p, g)| within_threshold(p.distance(*g), threshold))
        .count();
    Ok(hits as f64 / (3 * gt.len()) as f64)
}

pub fn pck_threshold(input_size: usize) -> f64 {
    input_size as f64 / 20.0
}

// Inclusive, with a few ulps of slack so an offset of exactly the threshold
// survives coordinate round-off.
fn within_threshold(distance: f64, threshold: f64) -> bool {
    distance <= threshold * (1.0 + 4.0 * f64::EPSILON)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lm(a: (f64, f64), l: (f64, f64), r: (f64, f64)) -> Landmarks {
        Landmarks::new(Point::new(a.0, a.1), Point::new(l.0, l.1), Point::new(r.0, r.1)).unwrap()
    }

    #[test]
    fn heatmap_peak_and_width() {
        let m = make_heatmap(Point::new(40.0, 30.0), 7.0, (64, 64)).unwrap();
        assert_eq!(m[[30, 40]], 1.0);
        assert_close!(m[[30, 47]], (-0.5f64).exp(), 1e-6);
        assert_close!(m[[23, 40]], (-0.5f64).exp(), 1e-6);
    }

    #[test]
    fn heatmap_mass_grows_with_sigma() {
        let p = Point::new(64.0, 64.0);
        let wide: f32 = make_heatmap(p, 20.0, (128, 128)).unwrap().sum();
        let narrow: f32 = make_heatmap(p, 10.0, (128, 128)).unwrap().sum();
        assert!(wide > narrow);
    }

    #[test]
    fn heatmap_errors() {
        assert!(matches!(
            make_heatmap(Point::new(64.0, 3.0), 5.0, (64, 64)),
            Err(HeatmapError::OutOfGrid { .. })
        ));
        assert!(matches!(
            make_heatmap(Point::new(3.0, 3.0), 0.0, (64, 64)),
            Err(HeatmapError::InvalidSigma(_))
        ));
    }

    #[test]
    fn sigma_schedule_examples() {
        assert_eq!(sigma_schedule(0, 10, 60).unwrap(), 20.0);
        assert_eq!(sigma_schedule(9, 10, 60).unwrap(), 20.0);
        assert_eq!(sigma_schedule(59, 10, 60).unwrap(), 10.0);
        // Post-warm-up span 10..=30 has its midpoint at epoch 20.
        assert_eq!(sigma_schedule(20, 10, 31).unwrap(), 15.0);
        assert!(sigma_schedule(60, 10, 60).is_err());
        assert!(sigma_schedule(0, 60, 60).is_err());
        assert_eq!(sigma_schedule(4, 4, 5).unwrap(), 10.0);
    }

    #[test]
    fn sigma_schedule_is_nonincreasing() {
        for total in [2usize, 5, 30, 60] {
            for warmup in 0..total {
                let s: Vec<f64> = (0..total).map(|e| sigma_schedule(e, warmup, total).unwrap()).collect();
                assert!(s.windows(2).all(|w| w[1] <= w[0]));
                assert_eq!(*s.last().unwrap(), SIGMA_END);
            }
        }
    }

    #[test]
    fn peak_round_trip_examples() {
        let m = make_heatmap(Point::new(64.0, 64.0), 10.0, (128, 128)).unwrap();
        let (x, y) = extract_peak(m.view()).unwrap();
        assert_close!(x, 64.0, 1e-9);
        assert_close!(y, 64.0, 1e-9);
        let m = make_heatmap(Point::new(64.3, 64.7), 10.0, (128, 128)).unwrap();
        let (x, y) = extract_peak(m.view()).unwrap();
        assert!((x - 64.3).abs() <= 0.5 && (y - 64.7).abs() <= 0.5);
        assert_eq!(
            extract_peak(Array2::<f32>::zeros((8, 8)).view()),
            Err(HeatmapError::ConstantMap)
        );
    }

    #[test]
    fn pck_examples() {
        let gt = vec![lm((100.0, 20.0), (80.0, 200.0), (160.0, 200.0)); 4];
        assert_eq!(pck(&gt, &gt, 256).unwrap(), 1.0);
        let shifted: Vec<Landmarks> = gt
            .iter()
            .map(|g| g.map(|p| Point::new(p.x + 12.8, p.y)).unwrap())
            .collect();
        assert_eq!(pck(&shifted, &gt, 256).unwrap(), 1.0);
        let diag: Vec<Landmarks> = gt
            .iter()
            .map(|g| g.map(|p| Point::new(p.x - 12.8 * 0.6, p.y + 12.8 * 0.8)).unwrap())
            .collect();
        assert_eq!(pck(&diag, &gt, 256).unwrap(), 1.0);
        let far: Vec<Landmarks> = gt
            .iter()
            .map(|g| g.map(|p| Point::new(p.x, p.y + 256.0)).unwrap())
            .collect();
        assert_eq!(pck(&far, &gt, 256).unwrap(), 0.0);
        assert!(matches!(
            pck(&far[..2], &gt, 256),
            Err(HeatmapError::LengthMismatch { pred: 2, gt: 4 })
        ));
    }

    proptest! {
        #[test]
        fn peak_round_trip(x in 0.0f64..=127.0, y in 0.0f64..=127.0, sigma in 5.0f64..30.0) {
            let m = make_heatmap(Point::new(x, y), sigma, (128, 128)).unwrap();
            let (px, py) = extract_peak(m.view()).unwrap();
            prop_assert!((px - x).abs() <= 0.5 && (py - y).abs() <= 0.5, "({px},{py}) vs ({x},{y})");
        }

        #[test]
        fn pck_rigid_invariance(
            pts in proptest::collection::vec((20.0f64..230.0, 20.0f64..230.0), 12),
            noise in proptest::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 12),
            angle in -3.2f64..3.2,
            tx in -50.0f64..50.0,
            ty in -50.0f64..50.0,
        ) {
            let build = |f: &dyn Fn(usize, Point) -> Point| -> Option<Vec<Landmarks>> {
                (0..4)
                    .map(|i| {
                        let p = |k: usize| f(3 * i + k, Point::new(pts[3 * i + k].0, pts[3 * i + k].1));
                        Landmarks::new(p(0), p(1), p(2)).ok()
                    })
                    .collect()
            };
            let gt = build(&|_, p| p);
            let pred = build(&|k, p| Point::new(p.x + noise[k].0, p.y + noise[k].1));
            prop_assume!(gt.is_some() && pred.is_some());
            let (gt, pred) = (gt.unwrap(), pred.unwrap());
            let rigid = |p: Point| p.rotate_about(Point::new(128.0, 128.0), angle) + Point::new(tx, ty);
            let gt_t: Vec<Landmarks> = gt.iter().map(|l| l.map(rigid).unwrap()).collect();
            let pred_t: Vec<Landmarks> = pred.iter().map(|l| l.map(rigid).unwrap()).collect();
            // Skip draws that sit on the threshold, where round-off decides.
            let thr = pck_threshold(256);
            let near = pred.iter().zip(&gt).flat_map(|(p, g)| p.points().into_iter().zip(g.points()))
                .any(|(p, g)| (p.distance(g) - thr).abs() < 1e-9);
            prop_assume!(!near);
            prop_assert_eq!(pck(&pred, &gt, 256).unwrap(), pck(&pred_t, &gt_t, 256).unwrap());
        }
    }
}
