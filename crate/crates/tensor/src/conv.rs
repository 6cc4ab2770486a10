use std::rc::Rc;

use ndarray::{Array2, Array3, ArrayD, ArrayView3, Axis, Ix4, IxDyn};

use crate::linalg::gemm;
use crate::{Float, Var};

#[derive(Debug, Clone, Copy)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geom {
    fn source(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        (o * self.stride + k).checked_sub(self.pad).filter(|&i| i < limit)
    }
}

/// Unfolds one image (c, h, w) into (c·kh·kw, ho·wo) patch columns.
fn im2col<T: Float>(x: ArrayView3<'_, T>, g: &Geom) -> Array2<T> {
    let mut cols = Array2::zeros((g.c * g.kh * g.kw, g.ho * g.wo));
    for c in 0..g.c {
        let plane = x.index_axis(Axis(0), c);
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let mut row = cols.row_mut((c * g.kh + ki) * g.kw + kj);
                for oh in 0..g.ho {
                    let Some(ih) = g.source(oh, ki, g.h) else { continue };
                    for ow in 0..g.wo {
                        if let Some(iw) = g.source(ow, kj, g.w) {
                            row[oh * g.wo + ow] = plane[[ih, iw]];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters columns back onto an image.
fn col2im<T: Float>(cols: &Array2<T>, g: &Geom) -> Array3<T> {
    let mut x = Array3::zeros((g.c, g.h, g.w));
    for c in 0..g.c {
        let mut plane = x.index_axis_mut(Axis(0), c);
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = cols.row((c * g.kh + ki) * g.kw + kj);
                for oh in 0..g.ho {
                    let Some(ih) = g.source(oh, ki, g.h) else { continue };
                    for ow in 0..g.wo {
                        if let Some(iw) = g.source(ow, kj, g.w) {
                            plane[[ih, iw]] += row[oh * g.wo + ow];
                        }
                    }
                }
            }
        }
    }
    x
}

impl<T: Float> Var<T> {
    /// 2-D cross-correlation of `self` (b, c, h, w) with `weight`
    /// (o, c, kh, kw), zero padding on all sides; no bias.
    pub fn conv2d(&self, weight: &Var<T>, stride: usize, pad: usize) -> Var<T> {
        let (b, c, h, w) = self.value.view().into_dimensionality::<Ix4>().expect("conv input is 4-d").dim();
        let (o, wc, kh, kw) = weight.value.view().into_dimensionality::<Ix4>().expect("conv weight is 4-d").dim();
        assert_eq!(c, wc, "conv channels: input {c}, weight {wc}");
        assert!(stride >= 1 && h + 2 * pad >= kh && w + 2 * pad >= kw, "conv kernel larger than padded input");
        let g = Geom {
            c,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (w + 2 * pad - kw) / stride + 1,
        };
        let x = self.value.view().into_dimensionality::<Ix4>().expect("4-d");
        let wmat = Rc::new(
            weight
                .value
                .view()
                .into_shape_with_order((o, c * kh * kw))
                .expect("standard layout")
                .to_owned(),
        );
        let cols: Vec<Array2<T>> = (0..b).map(|i| im2col(x.index_axis(Axis(0), i), &g)).collect();
        let mut out = Array3::zeros((b, o, g.ho * g.wo));
        for (i, col) in cols.iter().enumerate() {
            out.index_axis_mut(Axis(0), i).assign(&gemm(wmat.view(), col.view()));
        }
        let value = out.into_shape_with_order(IxDyn(&[b, o, g.ho, g.wo])).expect("size").into_dyn();
        let wshape = [o, c, kh, kw];
        let keep_cols = weight.requires_grad;
        let cols = if keep_cols { cols } else { Vec::new() };
        self.graph.push(value, &[self, weight], move |grad, need| {
            let g3 = grad.view().into_shape_with_order((b, o, g.ho * g.wo)).expect("standard layout");
            let gx = need[0].then(|| {
                let mut gx = ArrayD::zeros(IxDyn(&[b, c, h, w]));
                for i in 0..b {
                    let gc = gemm(wmat.t(), g3.index_axis(Axis(0), i));
                    gx.index_axis_mut(Axis(0), i).assign(&col2im(&gc, &g));
                }
                gx
            });
            let gw = need[1].then(|| {
                let mut gw = Array2::zeros((o, c * kh * kw));
                for (i, col) in cols.iter().enumerate() {
                    gw += &gemm(g3.index_axis(Axis(0), i), col.t());
                }
                gw.into_shape_with_order(IxDyn(&wshape)).expect("size").into_dyn()
            });
            vec![gx, gw]
        })
    }
}
