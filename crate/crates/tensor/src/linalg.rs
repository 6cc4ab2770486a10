use std::rc::Rc;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array3, ArrayD, ArrayView2, ArrayView3, Axis, Ix2, IxDyn};

use crate::{Float, Var};

pub(crate) fn gemm<T: Float>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>) -> Array2<T> {
    let mut c = Array2::zeros((a.nrows(), b.ncols()));
    general_mat_mul(T::one(), &a, &b, T::zero(), &mut c);
    c
}

fn as2<T: Float>(a: &ArrayD<T>, rows: usize, cols: usize) -> ArrayView2<'_, T> {
    a.view().into_shape_with_order((rows, cols)).expect("standard layout")
}

fn as3<T: Float>(a: &ArrayD<T>, n: usize, rows: usize, cols: usize) -> ArrayView3<'_, T> {
    a.view().into_shape_with_order((n, rows, cols)).expect("standard layout")
}

fn batched<T: Float>(
    a: ArrayView3<'_, T>,
    b: ArrayView3<'_, T>,
    f: impl Fn(ArrayView2<'_, T>, ArrayView2<'_, T>) -> Array2<T>,
) -> Array3<T> {
    let n = a.len_of(Axis(0)).max(b.len_of(Axis(0)));
    let mut out: Option<Array3<T>> = None;
    for i in 0..n {
        let ai = a.index_axis(Axis(0), if a.len_of(Axis(0)) == 1 { 0 } else { i });
        let bi = b.index_axis(Axis(0), if b.len_of(Axis(0)) == 1 { 0 } else { i });
        let c = f(ai, bi);
        let o = out.get_or_insert_with(|| Array3::zeros((n, c.nrows(), c.ncols())));
        o.index_axis_mut(Axis(0), i).assign(&c);
    }
    out.expect("nonempty batch")
}

impl<T: Float> Var<T> {
    /// Matrix product over the last two axes.
    ///
    /// Either both operands have the same leading axes, or one of them is
    /// a plain matrix that is shared across the other's leading axes.
    pub fn matmul(&self, other: &Var<T>) -> Var<T> {
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        assert!(sa.len() >= 2 && sb.len() >= 2, "matmul needs matrices, got {sa:?} @ {sb:?}");
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        assert_eq!(k, k2, "matmul inner dims {sa:?} @ {sb:?}");
        let (a, b) = (Rc::clone(&self.value), Rc::clone(&other.value));

        if sb.len() == 2 {
            // Fold every leading axis of `a` into the row dimension.
            let rows = a.len() / k;
            let c = gemm(as2(&a, rows, k), b.view().into_dimensionality::<Ix2>().expect("2d"));
            let mut shape = sa.clone();
            *shape.last_mut().expect("2d") = n;
            let value = c.into_shape_with_order(IxDyn(&shape)).expect("size").into_dyn();
            return self.graph.push(value, &[self, other], move |g, need| {
                let g2 = as2(g, rows, n);
                let b2 = b.view().into_dimensionality::<Ix2>().expect("2d");
                vec![
                    need[0].then(|| {
                        gemm(g2, b2.t()).into_shape_with_order(IxDyn(&sa)).expect("size").into_dyn()
                    }),
                    need[1].then(|| gemm(as2(&a, rows, k).t(), g2).into_dyn()),
                ]
            });
        }

        let lead_a: usize = sa[..sa.len() - 2].iter().product();
        let lead_b: usize = sb[..sb.len() - 2].iter().product();
        let shared_a = sa.len() == 2;
        assert!(
            shared_a || sa[..sa.len() - 2] == sb[..sb.len() - 2],
            "matmul leading axes differ: {sa:?} @ {sb:?}"
        );
        let batch = lead_a.max(lead_b);
        let c = batched(as3(&a, lead_a, m, k), as3(&b, lead_b, k, n), |x, y| gemm(x, y));
        let mut shape = sb[..sb.len() - 2].to_vec();
        shape.extend([m, n]);
        let value = c.into_shape_with_order(IxDyn(&shape)).expect("size").into_dyn();
        self.graph.push(value, &[self, other], move |g, need| {
            let g3 = as3(g, batch, m, n);
            let ga = need[0].then(|| {
                let per = batched(g3.view(), as3(&b, lead_b, k, n), |gi, bi| gemm(gi, bi.t()));
                if shared_a {
                    per.sum_axis(Axis(0)).into_dyn()
                } else {
                    per.into_shape_with_order(IxDyn(&sa)).expect("size").into_dyn()
                }
            });
            let gb = need[1].then(|| {
                batched(as3(&a, lead_a, m, k), g3.view(), |ai, gi| gemm(ai.t(), gi))
                    .into_shape_with_order(IxDyn(&sb))
                    .expect("size")
                    .into_dyn()
            });
            vec![ga, gb]
        })
    }

    /// `left · X · right` on every matrix in the last two axes, with
    /// constant `left` (p×h) and `right` (w×q).
    pub fn sandwich(&self, left: &Array2<T>, right: &Array2<T>) -> Var<T> {
        let s = self.shape().to_vec();
        let nd = s.len();
        assert!(nd >= 2, "sandwich needs matrices");
        let (h, w) = (s[nd - 2], s[nd - 1]);
        assert_eq!(left.ncols(), h, "left factor {:?} vs rows {h}", left.dim());
        assert_eq!(right.nrows(), w, "right factor {:?} vs cols {w}", right.dim());
        let (p, q) = (left.nrows(), right.ncols());
        let lead = self.value.len() / (h * w);
        let apply = move |x: &ArrayD<T>, l: ArrayView2<'_, T>, r: ArrayView2<'_, T>, rows: usize, cols: usize| {
            // X·R as one tall product, then L on each matrix.
            let xr = gemm(as2(x, lead * rows, cols), r);
            let xr3 = xr.into_shape_with_order((lead, rows, r.ncols())).expect("size");
            let mut out = Array3::zeros((lead, l.nrows(), r.ncols()));
            for (i, mut o) in out.outer_iter_mut().enumerate() {
                general_mat_mul(T::one(), &l, &xr3.index_axis(Axis(0), i), T::zero(), &mut o);
            }
            out
        };
        let value = apply(&self.value, left.view(), right.view(), h, w);
        let mut shape = s[..nd - 2].to_vec();
        shape.extend([p, q]);
        let value = value.into_shape_with_order(IxDyn(&shape)).expect("size").into_dyn();
        let (lt, rt) = (left.t().to_owned(), right.t().to_owned());
        self.graph.push(value, &[self], move |g, _| {
            let gx = apply(g, lt.view(), rt.view(), p, q);
            vec![Some(gx.into_shape_with_order(IxDyn(&s)).expect("size").into_dyn())]
        })
    }
}
