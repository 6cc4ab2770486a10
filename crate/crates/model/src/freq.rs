//! Frequency-filtered cross-branch attention.
//!
//! Encoder features are split into a low band (the central half of the
//! centered spectrum along each axis) and the complementary high band. The
//! CNN features then attend to each band separately and the two results are
//! mixed through a learned logistic gate.
//!
//! The split is available twice: through the FFT on plain arrays
//! ([`decompose`]) and as a pair of real matrix products that the tape can
//! differentiate ([`LowPassOperator`]). Both compute the same linear map.

use std::f64::consts::PI;

use autosame_tensor::{Float, Var};
use ndarray::{Array2, Array3, Axis};
use rustfft::num_complex::Complex;
use rustfft::{FftNum, FftPlanner};

use crate::nn::{attend, to_grid, to_tokens, Ctx, Init};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FreqError {
    #[error("feature grid {h}x{w} is not divisible by 4")]
    Divisibility { h: usize, w: usize },
    #[error("feature map has non-finite entries")]
    NonFinite,
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
}

/// Binary masks over the centered spectrum; `low + high == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMasks {
    pub low: Array2<u8>,
    pub high: Array2<u8>,
}

pub fn build_masks(h: usize, w: usize) -> Result<FrequencyMasks, FreqError> {
    check_grid(h, w)?;
    let low = Array2::from_shape_fn((h, w), |(r, c)| {
        ((h / 4..3 * h / 4).contains(&r) && (w / 4..3 * w / 4).contains(&c)) as u8
    });
    let high = low.mapv(|v| 1 - v);
    Ok(FrequencyMasks { low, high })
}

fn check_grid(h: usize, w: usize) -> Result<(), FreqError> {
    if h == 0 || w == 0 || h % 4 != 0 || w % 4 != 0 {
        Err(FreqError::Divisibility { h, w })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Encoder,
    Cnn,
    LowPass,
    HighPass,
    Fused,
}

/// A c×h×w feature map tagged with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    pub data: Array3<T>,
    pub role: Role,
}

impl<T: Float> FeatureMap<T> {
    pub fn new(data: Array3<T>, role: Role) -> Result<Self, FreqError> {
        let (_, h, w) = data.dim();
        check_grid(h, w)?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FreqError::NonFinite);
        }
        Ok(Self { data, role })
    }
}

/// Output of [`decompose_detailed`].
#[derive(Debug, Clone)]
pub struct Decomposition<T> {
    pub low: FeatureMap<T>,
    pub high: FeatureMap<T>,
    /// Largest imaginary magnitude over both inverse transforms, discarded
    /// when taking the real part.
    pub max_imag: f64,
}

pub fn decompose<T: Float + FftNum>(f: &FeatureMap<T>) -> Result<(FeatureMap<T>, FeatureMap<T>), FreqError> {
    decompose_detailed(f).map(|d| (d.low, d.high))
}

/// Per channel: 2-D FFT, center, mask, un-center, inverse FFT, real part.
pub fn decompose_detailed<T: Float + FftNum>(f: &FeatureMap<T>) -> Result<Decomposition<T>, FreqError> {
    let (c, h, w) = f.data.dim();
    check_grid(h, w)?;
    if f.data.iter().any(|v| !v.is_finite()) {
        return Err(FreqError::NonFinite);
    }
    let masks = build_masks(h, w)?;
    let mut planner = FftPlanner::<T>::new();
    let mut low = Array3::zeros((c, h, w));
    let mut high = Array3::zeros((c, h, w));
    let mut max_imag = 0.0f64;
    let norm = T::of((h * w) as f64);
    for ch in 0..c {
        let mut spec = f.data.index_axis(Axis(0), ch).mapv(|v| Complex::new(v, T::zero()));
        fft2(&mut planner, &mut spec, false);
        let centered = shift(&spec, h / 2, w / 2);
        for (mask, out) in [(&masks.low, &mut low), (&masks.high, &mut high)] {
            let masked = ndarray::Zip::from(&centered)
                .and(mask)
                .map_collect(|&z, &m| if m == 1 { z } else { Complex::new(T::zero(), T::zero()) });
            let mut back = shift(&masked, h - h / 2, w - w / 2);
            fft2(&mut planner, &mut back, true);
            let mut plane = out.index_axis_mut(Axis(0), ch);
            for (o, z) in plane.iter_mut().zip(back.iter()) {
                *o = z.re / norm;
                max_imag = max_imag.max((z.im / norm).abs().as_f64());
            }
        }
    }
    Ok(Decomposition {
        low: FeatureMap {
            data: low,
            role: Role::LowPass,
        },
        high: FeatureMap {
            data: high,
            role: Role::HighPass,
        },
        max_imag,
    })
}

/// Circular shift by (dr, dc): `out[(r + dr) % h, (c + dc) % w] = x[r, c]`.
fn shift<T: Copy + Default>(x: &Array2<T>, dr: usize, dc: usize) -> Array2<T> {
    let (h, w) = x.dim();
    Array2::from_shape_fn((h, w), |(r, c)| x[[(r + h - dr % h) % h, (c + w - dc % w) % w]])
}

/// Unnormalized 2-D transform in place.
fn fft2<T: FftNum>(planner: &mut FftPlanner<T>, x: &mut Array2<Complex<T>>, inverse: bool) {
    let (h, w) = x.dim();
    let plan = |p: &mut FftPlanner<T>, n| if inverse { p.plan_fft_inverse(n) } else { p.plan_fft_forward(n) };
    let rows = plan(planner, w);
    for mut row in x.rows_mut() {
        let mut buf = row.to_vec();
        rows.process(&mut buf);
        row.iter_mut().zip(buf).for_each(|(o, v)| *o = v);
    }
    let cols = plan(planner, h);
    for mut col in x.columns_mut() {
        let mut buf = col.to_vec();
        cols.process(&mut buf);
        col.iter_mut().zip(buf).for_each(|(o, v)| *o = v);
    }
}

/// The low-pass map `X -> Re(P_h X P_wᵀ)` as real matrices, where
/// `P = F⁻¹ diag(m) F` and `m` keeps the frequencies inside the central
/// band after centering.
#[derive(Debug, Clone)]
pub struct LowPassOperator<T> {
    re_h: Array2<T>,
    im_h: Array2<T>,
    re_w_t: Array2<T>,
    im_w_t: Array2<T>,
}

fn projector(n: usize) -> (Array2<f64>, Array2<f64>) {
    let kept: Vec<usize> = (0..n).filter(|&k| (n / 4..3 * n / 4).contains(&((k + n / 2) % n))).collect();
    let mut re = Array2::zeros((n, n));
    let mut im = Array2::zeros((n, n));
    for j in 0..n {
        for l in 0..n {
            let (mut sr, mut si) = (0.0, 0.0);
            for &k in &kept {
                let phase = 2.0 * PI * (k as f64) * (j as f64 - l as f64) / n as f64;
                sr += phase.cos();
                si += phase.sin();
            }
            re[[j, l]] = sr / n as f64;
            im[[j, l]] = si / n as f64;
        }
    }
    (re, im)
}

impl<T: Float> LowPassOperator<T> {
    pub fn new(h: usize, w: usize) -> Result<Self, FreqError> {
        check_grid(h, w)?;
        let (re_h, im_h) = projector(h);
        let (re_w, im_w) = projector(w);
        let cast = |a: Array2<f64>| a.mapv(T::of);
        Ok(Self {
            re_h: cast(re_h),
            im_h: cast(im_h),
            re_w_t: cast(re_w.t().to_owned()),
            im_w_t: cast(im_w.t().to_owned()),
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.re_h.nrows(), self.re_w_t.nrows())
    }

    /// Low band of (…, h, w) features.
    pub fn low(&self, x: &Var<T>) -> Var<T> {
        x.sandwich(&self.re_h, &self.re_w_t)
            .sub(&x.sandwich(&self.im_h, &self.im_w_t))
    }

    /// `(low, x - low)`.
    pub fn split(&self, x: &Var<T>) -> (Var<T>, Var<T>) {
        let low = self.low(x);
        let high = x.sub(&low);
        (low, high)
    }
}

/// Channel projections shared by both bands.
#[derive(Clone)]
pub struct AttnWeights<T: Float> {
    pub w_q: Var<T>,
    pub w_k: Var<T>,
    pub w_v: Var<T>,
}

#[derive(Clone)]
pub struct FcbaParams<T: Float> {
    pub weights: AttnWeights<T>,
    /// Gate logit; the low band gets `σ(α)`.
    pub alpha: Var<T>,
}

impl<T: Float> AttnWeights<T> {
    pub fn init(init: &mut Init<'_, T>, prefix: &str, c: usize) {
        let std = (1.0 / c as f64).sqrt();
        for p in ["w_q", "w_k", "w_v"] {
            init.normal(&format!("{prefix}.{p}"), &[c, c], std);
        }
    }

    pub fn bind(ctx: &Ctx<'_, T>, prefix: &str) -> Self {
        Self {
            w_q: ctx.p(&format!("{prefix}.w_q")),
            w_k: ctx.p(&format!("{prefix}.w_k")),
            w_v: ctx.p(&format!("{prefix}.w_v")),
        }
    }
}

impl<T: Float> FcbaParams<T> {
    pub fn init(init: &mut Init<'_, T>, prefix: &str, c: usize) {
        AttnWeights::init(init, prefix, c);
        init.constant(&format!("{prefix}.alpha"), &[1], 0.0);
    }

    pub fn bind(ctx: &Ctx<'_, T>, prefix: &str) -> Self {
        Self {
            weights: AttnWeights::bind(ctx, prefix),
            alpha: ctx.p(&format!("{prefix}.alpha")),
        }
    }
}

fn same_shape<T: Float>(a: &Var<T>, b: &Var<T>) -> Result<(), FreqError> {
    if a.shape() != b.shape() || a.ndim() != 4 {
        return Err(FreqError::ShapeMismatch(a.shape().to_vec(), b.shape().to_vec()));
    }
    Ok(())
}

/// Single-head attention from `query` positions to `kv` positions over
/// (b, c, h, w) maps, scale `1/sqrt(c)`.
pub fn cross_attention<T: Float>(query: &Var<T>, kv: &Var<T>, p: &AttnWeights<T>) -> Result<Var<T>, FreqError> {
    same_shape(query, kv)?;
    let (h, w) = (query.shape()[2], query.shape()[3]);
    let kv_tokens = to_tokens(kv);
    let q = to_tokens(query).matmul(&p.w_q);
    let k = kv_tokens.matmul(&p.w_k);
    let v = kv_tokens.matmul(&p.w_v);
    Ok(to_grid(&attend(&q, &k, &v), h, w))
}

/// `F_HC + σ(α)·A_L + (1 − σ(α))·A_H`, with `A_L`, `A_H` the attention of
/// `f_hc` over the two bands of `f_ie`.
pub fn fcba_forward<T: Float>(
    f_ie: &Var<T>,
    f_hc: &Var<T>,
    p: &FcbaParams<T>,
    op: &LowPassOperator<T>,
) -> Result<Var<T>, FreqError> {
    same_shape(f_ie, f_hc)?;
    if op.shape() != (f_ie.shape()[2], f_ie.shape()[3]) {
        return Err(FreqError::ShapeMismatch(
            vec![op.shape().0, op.shape().1],
            f_ie.shape()[2..].to_vec(),
        ));
    }
    let (low, high) = op.split(f_ie);
    let a_l = cross_attention(f_hc, &low, &p.weights)?;
    let a_h = cross_attention(f_hc, &high, &p.weights)?;
    let gate = p.alpha.sigmoid();
    Ok(f_hc.add(&a_l.mul(&gate)).add(&a_h.mul(&gate.affine(-1.0, 1.0))))
}

/// `F_SC + attention(F_SC → F_IE)`, no band split.
pub fn cba_forward<T: Float>(f_ie: &Var<T>, f_sc: &Var<T>, p: &AttnWeights<T>) -> Result<Var<T>, FreqError> {
    Ok(f_sc.add(&cross_attention(f_sc, f_ie, p)?))
}
