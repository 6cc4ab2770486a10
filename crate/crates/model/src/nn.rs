//! Parameter registration and the small layer vocabulary shared by all
//! sub-networks.

use autosame_tensor::{Float, Graph, ParamStore, Var};
use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Registers parameters under a name prefix, drawing from one seeded stream.
pub struct Init<'a, T: Float> {
    pub store: &'a mut ParamStore<T>,
    pub rng: &'a mut ChaCha8Rng,
}

impl<T: Float> Init<'_, T> {
    fn put(&mut self, name: &str, value: ArrayD<T>, trainable: bool) {
        self.store
            .insert(name, value, trainable)
            .unwrap_or_else(|e| panic!("{e}"));
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) {
        let dist = Normal::new(0.0, std).expect("finite std");
        let rng = &mut *self.rng;
        let value = ArrayD::from_shape_simple_fn(IxDyn(shape), || T::of(dist.sample(rng)));
        self.put(name, value, true);
    }

    pub fn frozen_normal(&mut self, name: &str, shape: &[usize], std: f64) {
        self.normal(name, shape, std);
        self.store.get_mut(name).expect("just inserted").trainable = false;
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], v: f64) {
        self.put(name, ArrayD::from_elem(IxDyn(shape), T::of(v)), true);
    }

    /// `{name}.weight` (in, out) with fan-in scaling and zero `{name}.bias`.
    pub fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) {
        self.normal(&format!("{name}.weight"), &[fan_in, fan_out], (1.0 / fan_in as f64).sqrt());
        self.constant(&format!("{name}.bias"), &[fan_out], 0.0);
    }

    /// A linear layer whose output starts at exactly zero.
    pub fn zero_linear(&mut self, name: &str, fan_in: usize, fan_out: usize) {
        self.constant(&format!("{name}.weight"), &[fan_in, fan_out], 0.0);
        self.constant(&format!("{name}.bias"), &[fan_out], 0.0);
    }

    /// `{name}.weight` (out, in, k, k) with He scaling and zero bias.
    pub fn conv(&mut self, name: &str, c_in: usize, c_out: usize, k: usize) {
        let fan_in = c_in * k * k;
        self.normal(&format!("{name}.weight"), &[c_out, c_in, k, k], (2.0 / fan_in as f64).sqrt());
        self.constant(&format!("{name}.bias"), &[c_out], 0.0);
    }

    pub fn layer_norm(&mut self, name: &str, dim: usize) {
        self.constant(&format!("{name}.gamma"), &[dim], 1.0);
        self.constant(&format!("{name}.beta"), &[dim], 0.0);
    }

    /// Single-head attention projections of width `dim`.
    pub fn attention(&mut self, name: &str, dim: usize) {
        for p in ["q", "k", "v", "out"] {
            self.linear(&format!("{name}.{p}"), dim, dim);
        }
    }

    pub fn seed(&mut self) -> u64 {
        self.rng.random()
    }
}

/// Binds parameters by name for one forward pass.
#[derive(Clone)]
pub struct Ctx<'a, T: Float> {
    pub graph: &'a Graph<T>,
    pub store: &'a ParamStore<T>,
}

impl<'a, T: Float> Ctx<'a, T> {
    pub fn new(graph: &'a Graph<T>, store: &'a ParamStore<T>) -> Self {
        Self { graph, store }
    }

    pub fn p(&self, name: &str) -> Var<T> {
        self.graph.param(self.store, name)
    }

    /// `x · W + b` over the last axis.
    pub fn linear(&self, name: &str, x: &Var<T>) -> Var<T> {
        x.matmul(&self.p(&format!("{name}.weight")))
            .add(&self.p(&format!("{name}.bias")))
    }

    pub fn layer_norm(&self, name: &str, x: &Var<T>) -> Var<T> {
        x.layer_norm_last(1e-5)
            .mul(&self.p(&format!("{name}.gamma")))
            .add(&self.p(&format!("{name}.beta")))
    }

    /// Convolution plus per-channel bias on (b, c, h, w).
    pub fn conv(&self, name: &str, x: &Var<T>, stride: usize, pad: usize) -> Var<T> {
        let w = self.p(&format!("{name}.weight"));
        let out_c = w.shape()[0];
        let b = self.p(&format!("{name}.bias")).reshape(&[1, out_c, 1, 1]);
        x.conv2d(&w, stride, pad).add(&b)
    }

    /// Single-head scaled dot-product attention with learned projections.
    /// `q`: (b, n, d), `k` and `v`: (b, m, d).
    pub fn attention(&self, name: &str, q: &Var<T>, k: &Var<T>, v: &Var<T>) -> Var<T> {
        let q = self.linear(&format!("{name}.q"), q);
        let k = self.linear(&format!("{name}.k"), k);
        let v = self.linear(&format!("{name}.v"), v);
        let out = attend(&q, &k, &v);
        self.linear(&format!("{name}.out"), &out)
    }
}

/// `softmax(q kᵀ / sqrt(d)) v` over the last two axes.
pub fn attend<T: Float>(q: &Var<T>, k: &Var<T>, v: &Var<T>) -> Var<T> {
    let d = *q.shape().last().expect("nonscalar") as f64;
    q.matmul(&k.t()).scale(1.0 / d.sqrt()).softmax_last().matmul(v)
}

/// (b, c, h, w) to (b, h·w, c).
pub fn to_tokens<T: Float>(x: &Var<T>) -> Var<T> {
    let s = x.shape().to_vec();
    x.reshape(&[s[0], s[1], s[2] * s[3]]).permute(&[0, 2, 1])
}

/// (b, h·w, c) to (b, c, h, w).
pub fn to_grid<T: Float>(x: &Var<T>, h: usize, w: usize) -> Var<T> {
    let s = x.shape().to_vec();
    assert_eq!(s[1], h * w, "token count {} vs grid {h}x{w}", s[1]);
    x.permute(&[0, 2, 1]).reshape(&[s[0], s[2], h, w])
}
