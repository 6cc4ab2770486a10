//! Prompt embeddings: the frozen point/box encoder, the auto prompt
//! generators that replace it at inference, and the cosine alignment loss
//! that ties the two together during warm-up.

use autosame_core::geometry::LandmarkError;
use autosame_core::{Landmarks, Point, ViewMask};
use autosame_tensor::{Float, Graph, ParamStore, Var};
use ndarray::{Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{Ctx, Init};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error(transparent)]
    OutOfGrid(#[from] LandmarkError),
    #[error("mask is empty; no bounding box")]
    EmptyMask,
    #[error("zero embedding vector at token {token}; cosine undefined")]
    ZeroVector { token: usize },
    #[error("prompt embeddings differ: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Seg,
    Hr,
}

impl Task {
    /// Box corners for segmentation, one token per landmark for HR.
    pub fn n_tokens(self) -> usize {
        match self {
            Task::Seg => 2,
            Task::Hr => 3,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Task::Seg => "seg",
            Task::Hr => "hr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Apg,
    PromptEncoder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptEmbedding<T> {
    /// n_tokens × d.
    pub tokens: Array2<T>,
    pub source: Source,
    pub task: Task,
}

/// Point-type rows of the frozen type-embedding table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointType {
    Apex = 0,
    Left = 1,
    Right = 2,
    BoxTopLeft = 3,
    BoxBottomRight = 4,
}

const GAUSSIAN: &str = "prompt.gaussian";
const TYPES: &str = "prompt.type_embed";

/// Frozen random-Fourier point encoder.
#[derive(Debug, Clone)]
pub struct PromptEncoder<T> {
    /// 2 × d/2 projection of normalized coordinates.
    gaussian: Array2<T>,
    /// 5 × d, rows indexed by [`PointType`].
    types: Array2<T>,
}

impl<T: Float> PromptEncoder<T> {
    /// Registers the frozen tables, drawn from their own seed so they do not
    /// depend on the rest of the initialization.
    pub fn init(store: &mut ParamStore<T>, dim: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init { store, rng: &mut rng };
        init.frozen_normal(GAUSSIAN, &[2, dim / 2], 1.0);
        init.frozen_normal(TYPES, &[5, dim], 1.0);
    }

    pub fn from_store(store: &ParamStore<T>) -> Self {
        let get = |n: &str| -> Array2<T> {
            store
                .value(n)
                .unwrap_or_else(|| panic!("{n} missing"))
                .clone()
                .into_dimensionality()
                .expect("2-d table")
        };
        Self {
            gaussian: get(GAUSSIAN),
            types: get(TYPES),
        }
    }

    pub fn dim(&self) -> usize {
        self.types.ncols()
    }

    pub fn type_embedding(&self, kind: PointType) -> ArrayView1<'_, T> {
        self.types.row(kind as usize)
    }

    /// `[sin(2π u), cos(2π u)]`, `u = (2·(x/w, y/h) − 1) · G`.
    pub fn positional(&self, p: Point, (h, w): (usize, usize)) -> Vec<T> {
        let cx = 2.0 * p.x / w as f64 - 1.0;
        let cy = 2.0 * p.y / h as f64 - 1.0;
        let half = self.gaussian.ncols();
        let mut out = vec![T::zero(); 2 * half];
        for j in 0..half {
            let u = cx * self.gaussian[[0, j]].as_f64() + cy * self.gaussian[[1, j]].as_f64();
            let (s, c) = (2.0 * std::f64::consts::PI * u).sin_cos();
            out[j] = T::of(s);
            out[half + j] = T::of(c);
        }
        out
    }

    fn token(&self, p: Point, kind: PointType, grid: (usize, usize)) -> Vec<T> {
        let mut t = self.positional(p, grid);
        for (v, e) in t.iter_mut().zip(self.types.row(kind as usize)) {
            *v += *e;
        }
        t
    }

    fn embedding(&self, tokens: Vec<Vec<T>>, task: Task) -> PromptEmbedding<T> {
        let d = self.dim();
        let n = tokens.len();
        PromptEmbedding {
            tokens: Array2::from_shape_vec((n, d), tokens.concat()).expect("n × d"),
            source: Source::PromptEncoder,
            task,
        }
    }

    /// One token per landmark, in apex, left, right order.
    pub fn encode_points(&self, lm: &Landmarks, grid: (usize, usize)) -> Result<PromptEmbedding<T>, PromptError> {
        lm.check_in_grid(grid)?;
        let kinds = [PointType::Apex, PointType::Left, PointType::Right];
        let tokens = lm.points().iter().zip(kinds).map(|(&p, k)| self.token(p, k, grid)).collect();
        Ok(self.embedding(tokens, Task::Hr))
    }

    pub fn encode_box(&self, mask: &ViewMask) -> Result<PromptEmbedding<T>, PromptError> {
        self.encode_box_grid(mask.grid())
    }

    /// Tight bounding box of the nonzero pixels; corners (x_min, y_min) and
    /// (x_max, y_max).
    pub fn encode_box_grid(&self, mask: &Array2<u8>) -> Result<PromptEmbedding<T>, PromptError> {
        let (tl, br) = bounding_box(mask).ok_or(PromptError::EmptyMask)?;
        let grid = mask.dim();
        let tokens = vec![
            self.token(tl, PointType::BoxTopLeft, grid),
            self.token(br, PointType::BoxBottomRight, grid),
        ];
        Ok(self.embedding(tokens, Task::Seg))
    }

    /// Positional encoding at every token center of a `g × g` grid over a
    /// `size` px image; (g², d), row-major.
    pub fn dense_pe(&self, g: usize, size: usize) -> Array2<T> {
        let patch = size as f64 / g as f64;
        let d = self.dim();
        let mut out = Array2::zeros((g * g, d));
        for i in 0..g {
            for j in 0..g {
                let center = Point::new((j as f64 + 0.5) * patch - 0.5, (i as f64 + 0.5) * patch - 0.5);
                let pe = self.positional(center, (size, size));
                out.row_mut(i * g + j).assign(&ArrayView1::from(&pe));
            }
        }
        out
    }
}

pub fn bounding_box(mask: &Array2<u8>) -> Option<(Point, Point)> {
    let mut bb: Option<(usize, usize, usize, usize)> = None;
    for ((r, c), &v) in mask.indexed_iter() {
        if v != 0 {
            bb = Some(match bb {
                None => (c, r, c, r),
                Some((x0, y0, x1, y1)) => (x0.min(c), y0.min(r), x1.max(c), y1.max(r)),
            });
        }
    }
    bb.map(|(x0, y0, x1, y1)| (Point::new(x0 as f64, y0 as f64), Point::new(x1 as f64, y1 as f64)))
}

/// Width of the generator's hidden MLP relative to `d`.
const APG_MLP_RATIO: usize = 2;

pub fn apg_prefix(task: Task) -> String {
    format!("apg_{}", task.key())
}

/// Registers one generator: a task token, per-slot embeddings, two
/// cross-attention blocks, an MLP and an output projection.
pub fn init_apg<T: Float>(init: &mut Init<'_, T>, task: Task, d: usize) {
    let p = apg_prefix(task);
    init.normal(&format!("{p}.task_token"), &[1, d], 1.0);
    init.normal(&format!("{p}.slots"), &[task.n_tokens(), d], 1.0);
    for i in 0..2 {
        init.attention(&format!("{p}.block{i}.attn"), d);
        init.layer_norm(&format!("{p}.block{i}.norm"), d);
    }
    init.linear(&format!("{p}.mlp.fc1"), d, APG_MLP_RATIO * d);
    init.linear(&format!("{p}.mlp.fc2"), APG_MLP_RATIO * d, d);
    init.layer_norm(&format!("{p}.mlp.norm"), d);
    init.linear(&format!("{p}.out"), d, d);
}

/// Generates prompt tokens (b, n_tokens, d) from image embedding tokens
/// (b, N, d) with dense positional encoding `pe` (N, d). `mask_token` (1, d)
/// is the decoder's mask token, detached by the caller.
pub fn apg_forward<T: Float>(
    ctx: &Ctx<'_, T>,
    task: Task,
    image_embedding: &Var<T>,
    pe: &Var<T>,
    mask_token: &Var<T>,
) -> Result<Var<T>, PromptError> {
    let p = apg_prefix(task);
    let es = image_embedding.shape();
    let d = ctx.store.value(&format!("{p}.slots")).map_or(0, |v| v.shape()[1]);
    if es.len() != 3 || es[2] != d || pe.shape() != [es[1], d] || mask_token.shape() != [1, d] {
        return Err(PromptError::Mismatch(format!(
            "generator width {d}: image embedding {es:?}, positional encoding {:?}, mask token {:?}",
            pe.shape(),
            mask_token.shape()
        )));
    }
    let b = es[0];
    let n = task.n_tokens();
    let mut q = ctx
        .p(&format!("{p}.slots"))
        .add(&ctx.p(&format!("{p}.task_token")))
        .add(mask_token)
        .expand(&[b, n, d]);
    let keys = image_embedding.add(pe);
    for i in 0..2 {
        let a = ctx.attention(&format!("{p}.block{i}.attn"), &q, &keys, image_embedding);
        q = ctx.layer_norm(&format!("{p}.block{i}.norm"), &q.add(&a));
    }
    let hidden = ctx.linear(&format!("{p}.mlp.fc1"), &q).gelu();
    let m = ctx.linear(&format!("{p}.mlp.fc2"), &hidden);
    q = ctx.layer_norm(&format!("{p}.mlp.norm"), &q.add(&m));
    Ok(ctx.linear(&format!("{p}.out"), &q))
}

/// Mean over tokens of `1 − cos(apg_i, pe_i)`; inputs (…, n, d).
pub fn alignment_loss<T: Float>(apg: &Var<T>, pe: &Var<T>) -> Result<Var<T>, PromptError> {
    if apg.shape() != pe.shape() {
        return Err(PromptError::Mismatch(format!("shapes {:?} vs {:?}", apg.shape(), pe.shape())));
    }
    for v in [apg, pe] {
        let last = Axis(v.ndim() - 1);
        if let Some(token) = v.value().lanes(last).into_iter().position(|l| l.iter().all(|x| *x == T::zero())) {
            return Err(PromptError::ZeroVector { token });
        }
    }
    let last = apg.ndim() - 1;
    let dot = apg.mul(pe).sum_axis(last);
    let na = apg.sqr().sum_axis(last).sqrt();
    let nb = pe.sqr().sum_axis(last).sqrt();
    let cos = dot.div(&na.mul(&nb));
    Ok(cos.neg().affine(1.0, 1.0).mean_all())
}

/// [`alignment_loss`] on plain embeddings.
pub fn alignment_loss_value<T: Float>(apg: &PromptEmbedding<T>, pe: &PromptEmbedding<T>) -> Result<f64, PromptError> {
    if apg.task != pe.task {
        return Err(PromptError::Mismatch(format!("tasks {:?} vs {:?}", apg.task, pe.task)));
    }
    let g = Graph::no_grad();
    let loss = alignment_loss(&g.constant(apg.tokens.clone().into_dyn()), &g.constant(pe.tokens.clone().into_dyn()))?;
    Ok(loss.item().as_f64())
}
