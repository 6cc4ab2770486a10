use autosame_tensor::{Float, Var};
use ndarray::Array2;

/// Linear-interpolation matrix (out × in) on pixel centers, edge-clamped.
pub fn interp_matrix<T: Float>(n_in: usize, n_out: usize) -> Array2<T> {
    let mut m = Array2::zeros((n_out, n_in));
    let scale = n_in as f64 / n_out as f64;
    for i in 0..n_out {
        let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
        let lo = src.floor() as usize;
        let hi = (lo + 1).min(n_in - 1);
        let f = src - lo as f64;
        m[[i, lo]] += T::of(1.0 - f);
        m[[i, hi]] += T::of(f);
    }
    m
}

/// Bilinear resize of the last two axes to `(h, w)`.
pub fn resize<T: Float>(x: &Var<T>, h: usize, w: usize) -> Var<T> {
    let s = x.shape();
    let (h0, w0) = (s[s.len() - 2], s[s.len() - 1]);
    if (h0, w0) == (h, w) {
        return x.clone();
    }
    let left = interp_matrix::<T>(h0, h);
    let right = interp_matrix::<T>(w0, w).t().to_owned();
    x.sandwich(&left, &right)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_convex_weights() {
        for (a, b) in [(4, 16), (16, 64), (64, 256), (7, 3)] {
            let m = interp_matrix::<f64>(a, b);
            for row in m.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn identity_and_doubling() {
        let m = interp_matrix::<f64>(5, 5);
        assert_eq!(m, Array2::<f64>::eye(5));
        let d = interp_matrix::<f64>(2, 4);
        // Centers at -0.25, 0.25, 0.75, 1.25 in source pixels.
        let expected = [[1.0, 0.0], [0.75, 0.25], [0.25, 0.75], [0.0, 1.0]];
        for (r, e) in d.rows().into_iter().zip(expected) {
            assert_eq!(r.to_vec(), e.to_vec());
        }
    }
}
