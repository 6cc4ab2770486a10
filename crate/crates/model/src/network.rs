//! Full network assembly.

use autosame_tensor::{Float, Graph, ParamStore, Var};
use ndarray::{Array2, Array3, Array4, ArrayD, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::branch;
use crate::config::{ConfigError, ModelConfig};
use crate::decoder::{self, OUTPUT_TOKENS};
use crate::encoder::{self, EncoderError, EncoderOutput};
use crate::freq::{FreqError, LowPassOperator};
use crate::nn::{Ctx, Init};
use crate::prompting::{apg_forward, init_apg, PromptEncoder, PromptError, Source, Task};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Freq(#[from] FreqError),
    #[error("{task:?} prompts have shape {got:?}, expected {expected:?}")]
    PromptShape {
        task: Task,
        got: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("parameter store does not match the config: {0}")]
    Store(String),
}

/// Prompt-encoder tokens supplied in place of the generators' output.
#[derive(Debug, Clone)]
pub struct ExternalPrompts<T> {
    /// (b, 2, d) box-corner tokens.
    pub seg: Array3<T>,
    /// (b, 3, d) landmark tokens.
    pub hr: Array3<T>,
}

pub struct TaskOutput<T: Float> {
    /// (b, 1, S, S) mask logits or (b, 3, S, S) heatmaps in P_A, P_L, P_R order.
    pub maps: Var<T>,
    /// Generator output (b, n, d), whether or not it fed the decoder.
    pub apg: Var<T>,
    pub source: Source,
}

pub struct ForwardOutput<T: Float> {
    pub seg: TaskOutput<T>,
    pub hr: TaskOutput<T>,
}

/// Plain per-image predictions.
#[derive(Debug, Clone)]
pub struct Prediction {
    /// Logistic of the mask logits, S×S.
    pub mask_prob: Array2<f32>,
    /// 3×S×S.
    pub heatmaps: Array3<f32>,
}

pub struct Network<T: Float> {
    cfg: ModelConfig,
    store: ParamStore<T>,
    ops: Vec<Option<LowPassOperator<T>>>,
    prompt_encoder: PromptEncoder<T>,
    pe: ArrayD<T>,
}

/// Draws every parameter from `seed`; the frozen prompt tables come from
/// `cfg.prompt_seed`.
pub fn init_params<T: Float>(cfg: &ModelConfig, seed: u64) -> Result<ParamStore<T>, ConfigError> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    {
        let mut init = Init {
            store: &mut store,
            rng: &mut rng,
        };
        encoder::init(&mut init, cfg);
        branch::init(&mut init, cfg, Task::Seg);
        branch::init(&mut init, cfg, Task::Hr);
        decoder::init(&mut init, cfg);
        init_apg(&mut init, Task::Seg, cfg.decoder_dim);
        init_apg(&mut init, Task::Hr, cfg.decoder_dim);
    }
    PromptEncoder::init(&mut store, cfg.decoder_dim, cfg.prompt_seed);
    Ok(store)
}

impl<T: Float> Network<T> {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self, NetworkError> {
        let store = init_params(&cfg, seed)?;
        Self::from_store(cfg, store)
    }

    pub fn from_store(cfg: ModelConfig, store: ParamStore<T>) -> Result<Self, NetworkError> {
        cfg.validate()?;
        let reference = init_params::<T>(&cfg, 0)?;
        for (name, p) in reference.iter() {
            match store.get(name) {
                None => return Err(NetworkError::Store(format!("missing {name}"))),
                Some(q) if q.value.shape() != p.value.shape() => {
                    return Err(NetworkError::Store(format!(
                        "{name} has shape {:?}, expected {:?}",
                        q.value.shape(),
                        p.value.shape()
                    )))
                }
                _ => {}
            }
        }
        if store.len() != reference.len() {
            return Err(NetworkError::Store(format!("{} tensors, expected {}", store.len(), reference.len())));
        }
        let ops = branch::operators(&cfg)?;
        let prompt_encoder = PromptEncoder::from_store(&store);
        let pe = prompt_encoder.dense_pe(cfg.grid(), cfg.input_size).into_dyn();
        Ok(Self {
            cfg,
            store,
            ops,
            prompt_encoder,
            pe,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn into_store(self) -> ParamStore<T> {
        self.store
    }

    pub fn prompt_encoder(&self) -> &PromptEncoder<T> {
        &self.prompt_encoder
    }

    /// Encoder alone on (b, 1, S, S) images.
    pub fn encode(&self, graph: &Graph<T>, images: &Var<T>, adapters: bool) -> Result<EncoderOutput<T>, NetworkError> {
        let ctx = Ctx::new(graph, &self.store);
        Ok(encoder::forward(&ctx, &self.cfg, images, adapters)?)
    }

    /// Both task passes on (b, 1, S, S) images. Without external prompts the
    /// generators' tokens feed the decoder.
    pub fn forward(
        &self,
        graph: &Graph<T>,
        images: &Var<T>,
        prompts: Option<&ExternalPrompts<T>>,
    ) -> Result<ForwardOutput<T>, NetworkError> {
        let ctx = Ctx::new(graph, &self.store);
        let enc = encoder::forward(&ctx, &self.cfg, images, true)?;
        let b = images.shape()[0];
        let d = self.cfg.decoder_dim;
        let pe = graph.constant(self.pe.clone());
        // The generators read the mask token but never train it.
        let mask_token = ctx.p(OUTPUT_TOKENS).narrow(0, 0, 1).detach();

        let run = |task: Task| -> Result<TaskOutput<T>, NetworkError> {
            let apg = apg_forward(&ctx, task, &enc.embedding, &pe, &mask_token)?;
            let (used, source) = match prompts {
                None => (apg.clone(), Source::Apg),
                Some(p) => {
                    let tokens = match task {
                        Task::Seg => &p.seg,
                        Task::Hr => &p.hr,
                    };
                    let expected = vec![b, task.n_tokens(), d];
                    if tokens.shape() != expected.as_slice() {
                        return Err(NetworkError::PromptShape {
                            task,
                            got: tokens.shape().to_vec(),
                            expected,
                        });
                    }
                    (graph.constant(tokens.clone().into_dyn()), Source::PromptEncoder)
                }
            };
            let branch_out = branch::forward(&ctx, &self.cfg, task, images, &enc.levels, &self.ops)?;
            let maps = decoder::forward(&ctx, &self.cfg, task, &enc.embedding, &pe, &used, &branch_out);
            Ok(TaskOutput { maps, apg, source })
        };
        let seg = run(Task::Seg)?;
        let hr = run(Task::Hr)?;
        Ok(ForwardOutput { seg, hr })
    }

    /// Generator path only, without recording gradients. `images`: (b, S, S).
    pub fn predict(&self, images: &Array3<f32>) -> Result<Vec<Prediction>, NetworkError> {
        let g = Graph::no_grad();
        let (b, h, w) = images.dim();
        let x: Array4<T> = images.mapv(|v| T::of(v as f64)).into_shape_with_order((b, 1, h, w)).expect("contiguous");
        let out = self.forward(&g, &g.input(x.into_dyn()), None)?;
        let seg = out.seg.maps.value();
        let hr = out.hr.maps.value();
        let f = |v: T| v.as_f64() as f32;
        Ok((0..b)
            .map(|i| Prediction {
                mask_prob: seg
                    .index_axis(Axis(0), i)
                    .index_axis(Axis(0), 0)
                    .mapv(|v| (1.0 / (1.0 + (-v.as_f64()).exp())) as f32)
                    .into_dimensionality()
                    .expect("2-d"),
                heatmaps: hr.index_axis(Axis(0), i).mapv(f).into_dimensionality().expect("3-d"),
            })
            .collect())
    }
}
