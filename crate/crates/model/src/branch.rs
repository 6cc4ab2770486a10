//! Task CNN branches. Each has a patchifying stem and three stages of two
//! 3×3 convolutions; the trailing `fcba_levels` stages are fused with
//! encoder features, by plain cross-branch attention for segmentation and
//! by the frequency-filtered variant for heatmap regression.

use autosame_tensor::{Float, Var};

use crate::config::ModelConfig;
use crate::encoder::level_map;
use crate::freq::{cba_forward, fcba_forward, AttnWeights, FcbaParams, FreqError, LowPassOperator};
use crate::nn::{Ctx, Init};
use crate::prompting::Task;
use crate::resize::resize;

pub fn prefix(task: Task) -> String {
    format!("{}_cnn", task.key())
}

pub struct BranchOutput<T: Float> {
    /// (b, ch[0], 4g, 4g).
    pub stem: Var<T>,
    /// (b, ch[1], 2g, 2g).
    pub stage0: Var<T>,
    /// (b, ch[3], g, g).
    pub out: Var<T>,
}

pub fn init<T: Float>(init: &mut Init<'_, T>, cfg: &ModelConfig, task: Task) {
    let p = prefix(task);
    let ch = cfg.cnn_channels;
    init.conv(&format!("{p}.stem.patch"), 1, ch[0], cfg.patch_size / 4);
    init.conv(&format!("{p}.stem.conv"), ch[0], ch[0], 3);
    init.linear(&format!("{p}.to_decoder"), ch[3], cfg.decoder_dim);
    for s in 0..3 {
        init.conv(&format!("{p}.stage{s}.conv1"), ch[s], ch[s + 1], 3);
        init.conv(&format!("{p}.stage{s}.conv2"), ch[s + 1], ch[s + 1], 3);
        if cfg.fused(s) {
            init.linear(&format!("{p}.stage{s}.proj"), cfg.embed_dim, ch[s + 1]);
            let f = format!("{p}.stage{s}.fuse");
            match task {
                Task::Seg => AttnWeights::init(init, &f, ch[s + 1]),
                Task::Hr => FcbaParams::init(init, &f, ch[s + 1]),
            }
        }
    }
}

/// Low-pass operators for the fused stages, indexed by stage.
pub fn operators<T: Float>(cfg: &ModelConfig) -> Result<Vec<Option<LowPassOperator<T>>>, FreqError> {
    (0..3)
        .map(|s| {
            if cfg.fused(s) {
                let n = cfg.stage_size(Some(s));
                LowPassOperator::new(n, n).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect()
}

/// `image`: (b, 1, S, S); `levels`: encoder block outputs (b, g², E).
pub fn forward<T: Float>(
    ctx: &Ctx<'_, T>,
    cfg: &ModelConfig,
    task: Task,
    image: &Var<T>,
    levels: &[Var<T>],
    ops: &[Option<LowPassOperator<T>>],
) -> Result<BranchOutput<T>, FreqError> {
    let p = prefix(task);
    let k = cfg.patch_size / 4;
    let mut x = ctx.conv(&format!("{p}.stem.patch"), image, k, 0).gelu();
    x = ctx.conv(&format!("{p}.stem.conv"), &x, 1, 1).gelu();
    let stem = x.clone();
    let mut stage0 = None;
    for s in 0..3 {
        let stride = if s < 2 { 2 } else { 1 };
        x = ctx.conv(&format!("{p}.stage{s}.conv1"), &x, stride, 1).gelu();
        x = ctx.conv(&format!("{p}.stage{s}.conv2"), &x, 1, 1).gelu();
        if cfg.fused(s) {
            let n = cfg.stage_size(Some(s));
            let tokens = ctx.linear(&format!("{p}.stage{s}.proj"), &levels[cfg.encoder_level(s)]);
            let f_ie = resize(&level_map(&tokens, cfg.grid()), n, n);
            let f = format!("{p}.stage{s}.fuse");
            x = match task {
                Task::Seg => cba_forward(&f_ie, &x, &AttnWeights::bind(ctx, &f))?,
                Task::Hr => {
                    let op = ops[s].as_ref().expect("operator for fused stage");
                    fcba_forward(&f_ie, &x, &FcbaParams::bind(ctx, &f), op)?
                }
            };
        }
        if s == 0 {
            stage0 = Some(x.clone());
        }
    }
    Ok(BranchOutput {
        stem,
        stage0: stage0.expect("stage 0 ran"),
        out: x,
    })
}
