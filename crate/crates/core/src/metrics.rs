//! Segmentation overlap and indicator agreement metrics.

use ndarray::{ArrayView2, Zip};

/// `2|A ∩ B| / (|A| + |B|)` over binary grids. Two empty masks agree perfectly.
pub fn dice_coefficient(pred: ArrayView2<'_, u8>, gt: ArrayView2<'_, u8>) -> f64 {
    assert_eq!(pred.dim(), gt.dim(), "dice over mismatched grids");
    let mut inter = 0usize;
    let mut total = 0usize;
    Zip::from(pred).and(gt).for_each(|&p, &g| {
        let (p, g) = ((p != 0) as usize, (g != 0) as usize);
        inter += p & g;
        total += p + g;
    });
    if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    }
}

/// Pearson correlation; `None` when either side has zero variance or the
/// inputs are shorter than two samples.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "pearson over mismatched lengths");
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Like [`pearson`], but reports the zero-variance case as NaN with a warning.
pub fn pearson_or_nan(name: &str, x: &[f64], y: &[f64]) -> f64 {
    pearson(x, y).unwrap_or_else(|| {
        log::warn!("{name}: zero variance, correlation undefined");
        f64::NAN
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    #[test]
    fn dice_examples() {
        let a = Array2::from_shape_fn((4, 4), |(r, _)| (r < 2) as u8);
        let b = Array2::from_shape_fn((4, 4), |(r, _)| (r >= 2) as u8);
        assert_eq!(dice_coefficient(a.view(), a.view()), 1.0);
        assert_eq!(dice_coefficient(a.view(), b.view()), 0.0);
        let z = Array2::<u8>::zeros((4, 4));
        assert_eq!(dice_coefficient(z.view(), z.view()), 1.0);
        let half = Array2::from_shape_fn((4, 4), |(r, _)| (r < 1) as u8);
        assert_close!(dice_coefficient(half.view(), a.view()), 2.0 * 4.0 / 12.0, 1e-12);
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 4.0, 7.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert_close!(pearson(&x, &y).unwrap(), 1.0, 1e-12);
        assert_eq!(pearson(&x, &[3.0; 4]), None);
        assert!(pearson_or_nan("EF", &x, &[3.0; 4]).is_nan());
    }

    proptest! {
        #[test]
        fn pearson_affine(x in proptest::collection::vec(-100.0f64..100.0, 3..40), a in 0.1f64..10.0, b in -50.0f64..50.0) {
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            prop_assume!(x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() > 1e-6);
            let up: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let down: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
            prop_assert!((pearson(&x, &up).unwrap() - 1.0).abs() < 1e-9);
            prop_assert!((pearson(&x, &down).unwrap() + 1.0).abs() < 1e-9);
        }
    }
}
