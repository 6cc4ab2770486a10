use std::f64::consts::PI;

/// Per-step learning rate: a linear ramp reaching `peak` on the last step of
/// warm-up, then cosine decay reaching 0 on the last step of training.
pub fn lr_schedule(step: usize, steps_per_epoch: usize, peak: f64, warmup_epochs: usize, epochs: usize) -> f64 {
    let w = warmup_epochs * steps_per_epoch;
    let t = epochs * steps_per_epoch;
    let s = step + 1;
    if s <= w {
        peak * s as f64 / w as f64
    } else if s >= t {
        0.0
    } else {
        peak * 0.5 * (1.0 + (PI * (s - w) as f64 / (t - w) as f64).cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn landmarks_of_the_curve() {
        let (spe, peak) = (16, 2e-4);
        assert_eq!(lr_schedule(10 * spe - 1, spe, peak, 10, 60), peak);
        assert!(lr_schedule(0, spe, peak, 10, 60) <= peak / 100.0);
        assert_eq!(lr_schedule(60 * spe - 1, spe, peak, 10, 60), 0.0);
        let boundary = lr_schedule(10 * spe, spe, peak, 10, 60);
        assert!((boundary - peak).abs() < 1e-6 * peak * 100.0);
    }

    #[test]
    fn nonnegative_and_monotone_pieces() {
        let (spe, peak) = (3, 1.0);
        let lrs: Vec<f64> = (0..30 * spe).map(|s| lr_schedule(s, spe, peak, 5, 30)).collect();
        assert!(lrs.iter().all(|&l| (0.0..=peak).contains(&l)));
        assert!(lrs[..5 * spe].windows(2).all(|w| w[0] < w[1]));
        assert!(lrs[5 * spe..].windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn no_warmup_starts_at_peak() {
        assert!((lr_schedule(0, 10, 1.0, 0, 5) - 1.0).abs() < 1e-3);
    }
}
