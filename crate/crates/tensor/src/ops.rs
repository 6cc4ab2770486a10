use std::rc::Rc;

use ndarray::{concatenate, ArrayD, ArrayViewD, Axis, IxDyn, Slice, Zip};

use crate::{Float, Var};

/// Sums `g` down to `shape` after numpy-style broadcasting.
pub(crate) fn reduce_to<T: Float>(g: &ArrayD<T>, shape: &[usize]) -> ArrayD<T> {
    if g.shape() == shape {
        return g.clone();
    }
    let mut r = g.clone();
    while r.ndim() > shape.len() {
        r = r.sum_axis(Axis(0));
    }
    for (ax, &d) in shape.iter().enumerate() {
        if d == 1 && r.shape()[ax] != 1 {
            r = r.sum_axis(Axis(ax)).insert_axis(Axis(ax));
        }
    }
    r
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| {
            let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
            let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
            assert!(da == db || da == 1 || db == 1, "cannot broadcast {a:?} with {b:?}");
            da.max(db)
        })
        .collect()
}

fn zip_broadcast<T: Float>(a: &ArrayD<T>, b: &ArrayD<T>, f: impl Fn(T, T) -> T) -> ArrayD<T> {
    if a.shape() == b.shape() {
        return Zip::from(a).and(b).map_collect(|&x, &y| f(x, y));
    }
    let shape = broadcast_shape(a.shape(), b.shape());
    let av = a.broadcast(IxDyn(&shape)).expect("broadcastable");
    let bv = b.broadcast(IxDyn(&shape)).expect("broadcastable");
    Zip::from(&av).and(&bv).map_collect(|&x, &y| f(x, y))
}

fn broadcast_to<T: Float>(g: &ArrayD<T>, shape: &[usize]) -> ArrayD<T> {
    g.broadcast(IxDyn(shape)).expect("broadcastable").to_owned()
}

impl<T: Float> Var<T> {
    fn unary(&self, value: ArrayD<T>, df: impl Fn(T, T) -> T + 'static) -> Var<T> {
        let x = Rc::clone(&self.value);
        let value = Rc::new(value);
        let y = Rc::clone(&value);
        self.graph.push_rc(value, &[self], move |g, _| {
            vec![Some(
                Zip::from(g).and(&*x).and(&*y).map_collect(|&g, &x, &y| g * df(x, y)),
            )]
        })
    }

    pub fn add(&self, other: &Var<T>) -> Var<T> {
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        let value = zip_broadcast(&self.value, &other.value, |x, y| x + y);
        self.graph.push(value, &[self, other], move |g, need| {
            vec![
                need[0].then(|| reduce_to(g, &sa)),
                need[1].then(|| reduce_to(g, &sb)),
            ]
        })
    }

    pub fn sub(&self, other: &Var<T>) -> Var<T> {
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        let value = zip_broadcast(&self.value, &other.value, |x, y| x - y);
        self.graph.push(value, &[self, other], move |g, need| {
            vec![
                need[0].then(|| reduce_to(g, &sa)),
                need[1].then(|| -reduce_to(g, &sb)),
            ]
        })
    }

    pub fn mul(&self, other: &Var<T>) -> Var<T> {
        let (a, b) = (Rc::clone(&self.value), Rc::clone(&other.value));
        let value = zip_broadcast(&a, &b, |x, y| x * y);
        self.graph.push(value, &[self, other], move |g, need| {
            vec![
                need[0].then(|| reduce_to(&zip_broadcast(g, &b, |g, y| g * y), a.shape())),
                need[1].then(|| reduce_to(&zip_broadcast(g, &a, |g, x| g * x), b.shape())),
            ]
        })
    }

    pub fn div(&self, other: &Var<T>) -> Var<T> {
        let (a, b) = (Rc::clone(&self.value), Rc::clone(&other.value));
        let out = Rc::new(zip_broadcast(&a, &b, |x, y| x / y));
        let q = Rc::clone(&out);
        self.graph.push_rc(out, &[self, other], move |g, need| {
            vec![
                need[0].then(|| reduce_to(&zip_broadcast(g, &b, |g, y| g / y), a.shape())),
                need[1].then(|| {
                    let gq = Zip::from(g).and(&*q).map_collect(|&g, &q| -g * q);
                    reduce_to(&zip_broadcast(&gq, &b, |v, y| v / y), b.shape())
                }),
            ]
        })
    }

    /// `a * x + b`.
    pub fn affine(&self, a: f64, b: f64) -> Var<T> {
        let (a, b) = (T::of(a), T::of(b));
        let value = self.value.mapv(|x| a * x + b);
        self.graph.push(value, &[self], move |g, _| vec![Some(g.mapv(|g| g * a))])
    }

    pub fn scale(&self, a: f64) -> Var<T> {
        self.affine(a, 0.0)
    }

    pub fn neg(&self) -> Var<T> {
        self.affine(-1.0, 0.0)
    }

    pub fn sqr(&self) -> Var<T> {
        let two = T::of(2.0);
        self.unary(self.value.mapv(|x| x * x), move |x, _| two * x)
    }

    pub fn sqrt(&self) -> Var<T> {
        let half = T::of(0.5);
        self.unary(self.value.mapv(|x| x.sqrt()), move |_, y| half / y)
    }

    pub fn exp(&self) -> Var<T> {
        self.unary(self.value.mapv(|x| x.exp()), |_, y| y)
    }

    pub fn ln(&self) -> Var<T> {
        self.unary(self.value.mapv(|x| x.ln()), |x, _| T::one() / x)
    }

    pub fn recip(&self) -> Var<T> {
        self.unary(self.value.mapv(|x| T::one() / x), |_, y| -y * y)
    }

    pub fn tanh(&self) -> Var<T> {
        self.unary(self.value.mapv(|x| x.tanh()), |_, y| T::one() - y * y)
    }

    pub fn relu(&self) -> Var<T> {
        self.unary(self.value.mapv(|x| x.max(T::zero())), |x, _| {
            if x > T::zero() {
                T::one()
            } else {
                T::zero()
            }
        })
    }

    /// Logistic function, evaluated as `(tanh(x/2) + 1) / 2` for stability.
    pub fn sigmoid(&self) -> Var<T> {
        let half = T::of(0.5);
        self.unary(self.value.mapv(|x| half * ((x * half).tanh() + T::one())), |_, y| y * (T::one() - y))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&self) -> Var<T> {
        let c = T::of((2.0 / std::f64::consts::PI).sqrt());
        let k = T::of(0.044715);
        let half = T::of(0.5);
        let three = T::of(3.0);
        let value = self.value.mapv(|x| half * x * (T::one() + (c * (x + k * x * x * x)).tanh()));
        self.unary(value, move |x, _| {
            let t = (c * (x + k * x * x * x)).tanh();
            half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * k * x * x)
        })
    }

    pub fn sum_all(&self) -> Var<T> {
        let shape = self.shape().to_vec();
        let value = ArrayD::from_elem(IxDyn(&[]), self.value.sum());
        self.graph.push(value, &[self], move |g, _| {
            let s = *g.iter().next().expect("scalar");
            vec![Some(ArrayD::from_elem(IxDyn(&shape), s))]
        })
    }

    pub fn mean_all(&self) -> Var<T> {
        let n = self.value.len() as f64;
        self.sum_all().scale(1.0 / n)
    }

    /// Sum over `axis`, keeping it with length 1.
    pub fn sum_axis(&self, axis: usize) -> Var<T> {
        let shape = self.shape().to_vec();
        let value = self.value.sum_axis(Axis(axis)).insert_axis(Axis(axis));
        self.graph.push(value, &[self], move |g, _| vec![Some(broadcast_to(g, &shape))])
    }

    pub fn mean_axis(&self, axis: usize) -> Var<T> {
        let n = self.shape()[axis] as f64;
        self.sum_axis(axis).scale(1.0 / n)
    }

    /// Copies a broadcastable value out to `shape`.
    pub fn expand(&self, shape: &[usize]) -> Var<T> {
        let src = self.shape().to_vec();
        let value = broadcast_to(&self.value, shape);
        self.graph.push(value, &[self], move |g, _| vec![Some(reduce_to(g, &src))])
    }

    pub fn reshape(&self, shape: &[usize]) -> Var<T> {
        let src = self.shape().to_vec();
        let value = (*self.value)
            .clone()
            .into_shape_with_order(IxDyn(shape))
            .unwrap_or_else(|e| panic!("reshape {src:?} -> {shape:?}: {e}"));
        self.graph.push(value, &[self], move |g, _| {
            vec![Some(g.clone().into_shape_with_order(IxDyn(&src)).expect("same size"))]
        })
    }

    pub fn permute(&self, axes: &[usize]) -> Var<T> {
        let mut inverse = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        let value = self.value.view().permuted_axes(IxDyn(axes)).as_standard_layout().into_owned();
        self.graph.push(value, &[self], move |g, _| {
            vec![Some(g.view().permuted_axes(IxDyn(&inverse)).as_standard_layout().into_owned())]
        })
    }

    /// Swaps the last two axes.
    pub fn t(&self) -> Var<T> {
        let n = self.ndim();
        let mut axes: Vec<usize> = (0..n).collect();
        axes.swap(n - 2, n - 1);
        self.permute(&axes)
    }

    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Var<T> {
        let shape = self.shape().to_vec();
        let slice = Slice::from(start..start + len);
        let value = self.value.slice_axis(Axis(axis), slice).to_owned();
        self.graph.push(value, &[self], move |g, _| {
            let mut full = ArrayD::zeros(IxDyn(&shape));
            full.slice_axis_mut(Axis(axis), slice).assign(g);
            vec![Some(full)]
        })
    }

    pub fn cat(vars: &[Var<T>], axis: usize) -> Var<T> {
        assert!(!vars.is_empty(), "cat of nothing");
        let views: Vec<ArrayViewD<'_, T>> = vars.iter().map(|v| v.value.view()).collect();
        let value = concatenate(Axis(axis), &views).expect("cat shapes agree");
        let lens: Vec<usize> = vars.iter().map(|v| v.shape()[axis]).collect();
        let refs: Vec<&Var<T>> = vars.iter().collect();
        vars[0].graph.push(value, &refs, move |g, need| {
            let mut start = 0;
            lens.iter()
                .zip(need)
                .map(|(&len, &n)| {
                    let s = start;
                    start += len;
                    n.then(|| g.slice_axis(Axis(axis), Slice::from(s..s + len)).to_owned())
                })
                .collect()
        })
    }

    /// Softmax over the last axis.
    pub fn softmax_last(&self) -> Var<T> {
        let last = Axis(self.ndim() - 1);
        let mut y = (*self.value).clone();
        for mut lane in y.lanes_mut(last) {
            let m = lane.fold(T::neg_infinity(), |m, &v| m.max(v));
            lane.mapv_inplace(|v| (v - m).exp());
            let s = lane.sum();
            lane.mapv_inplace(|v| v / s);
        }
        let y = Rc::new(y);
        let y_rc = Rc::clone(&y);
        self.graph.push_rc(y, &[self], move |g, _| {
            let mut gx = g.clone();
            Zip::from(gx.lanes_mut(last))
                .and(y_rc.lanes(last))
                .for_each(|mut gl, yl| {
                    let dot: T = gl.iter().zip(yl.iter()).map(|(&a, &b)| a * b).sum();
                    Zip::from(&mut gl).and(&yl).for_each(|gv, &yv| *gv = yv * (*gv - dot));
                });
            vec![Some(gx)]
        })
    }

    /// `(x - mean) / sqrt(var + eps)` over the last axis, no affine part.
    pub fn layer_norm_last(&self, eps: f64) -> Var<T> {
        let last = Axis(self.ndim() - 1);
        let n = T::of(self.shape()[self.ndim() - 1] as f64);
        let eps = T::of(eps);
        let mut y = (*self.value).clone();
        let mut inv_std = Vec::with_capacity(y.len() / self.shape()[self.ndim() - 1].max(1));
        for mut lane in y.lanes_mut(last) {
            let mean = lane.sum() / n;
            lane.mapv_inplace(|v| v - mean);
            let var = lane.iter().map(|&v| v * v).sum::<T>() / n;
            let inv = T::one() / (var + eps).sqrt();
            lane.mapv_inplace(|v| v * inv);
            inv_std.push(inv);
        }
        let y = Rc::new(y);
        let y_rc = Rc::clone(&y);
        self.graph.push_rc(y, &[self], move |g, _| {
            let mut gx = g.clone();
            for ((mut gl, yl), &inv) in gx.lanes_mut(last).into_iter().zip(y_rc.lanes(last)).zip(&inv_std) {
                let mg = gl.sum() / n;
                let mgy = gl.iter().zip(yl.iter()).map(|(&a, &b)| a * b).sum::<T>() / n;
                Zip::from(&mut gl).and(&yl).for_each(|gv, &yv| *gv = inv * (*gv - mg - yv * mgy));
            }
            vec![Some(gx)]
        })
    }
}
