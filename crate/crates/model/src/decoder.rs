//! Shared two-way mask decoder.
//!
//! Four output tokens (row 0 is the mask token used by segmentation, rows
//! 1..=3 produce the three heatmaps) are concatenated with the prompt
//! tokens. Tokens and image features then attend to each other, the
//! features are upscaled ×4 with skips from the task branch, and per-task
//! hypernetwork heads turn output tokens into per-pixel linear readouts.

use autosame_tensor::{Float, Var};

use crate::branch::{self, BranchOutput};
use crate::config::ModelConfig;
use crate::nn::{to_grid, to_tokens, Ctx, Init};
use crate::prompting::Task;
use crate::resize::resize;

pub const OUTPUT_TOKENS: &str = "decoder.output_tokens";

fn head(task: Task) -> String {
    format!("decoder.head_{}", task.key())
}

/// Output-token rows read by each task.
fn token_rows(task: Task) -> (usize, usize) {
    match task {
        Task::Seg => (0, 1),
        Task::Hr => (1, 3),
    }
}

pub fn init<T: Float>(init: &mut Init<'_, T>, cfg: &ModelConfig) {
    let d = cfg.decoder_dim;
    let ch = cfg.cnn_channels;
    init.normal(OUTPUT_TOKENS, &[4, d], 1.0);
    for l in 0..cfg.decoder_depth {
        let n = format!("decoder.layer{l}");
        init.attention(&format!("{n}.self_attn"), d);
        init.layer_norm(&format!("{n}.norm1"), d);
        init.attention(&format!("{n}.token_to_image"), d);
        init.layer_norm(&format!("{n}.norm2"), d);
        init.linear(&format!("{n}.mlp.fc1"), d, 2 * d);
        init.linear(&format!("{n}.mlp.fc2"), 2 * d, d);
        init.layer_norm(&format!("{n}.norm3"), d);
        init.attention(&format!("{n}.image_to_token"), d);
        init.layer_norm(&format!("{n}.norm4"), d);
    }
    init.attention("decoder.final_attn", d);
    init.layer_norm("decoder.final_norm", d);
    init.conv("decoder.up1", d, d / 2, 3);
    init.conv("decoder.skip1", ch[1], d / 2, 1);
    init.conv("decoder.up2", d / 2, d / 4, 3);
    init.conv("decoder.skip2", ch[0], d / 4, 1);
    for task in [Task::Seg, Task::Hr] {
        init.linear(&format!("{}.fc1", head(task)), d, d);
        init.linear(&format!("{}.fc2", head(task)), d, d / 4);
    }
}

/// Decodes one task. `embedding`: encoder neck tokens (b, g², d); `pe`:
/// dense positional encoding (g², d); `prompts`: (b, n, d).
/// Returns (b, k, S, S) with k = 1 for segmentation and 3 for heatmaps.
pub fn forward<T: Float>(
    ctx: &Ctx<'_, T>,
    cfg: &ModelConfig,
    task: Task,
    embedding: &Var<T>,
    pe: &Var<T>,
    prompts: &Var<T>,
    branch_out: &BranchOutput<T>,
) -> Var<T> {
    let b = embedding.shape()[0];
    let d = cfg.decoder_dim;
    let g = cfg.grid();

    let dense = ctx.linear(&format!("{}.to_decoder", branch::prefix(task)), &to_tokens(&branch_out.out));
    let mut src = embedding.add(&dense);
    let out_tokens = ctx.p(OUTPUT_TOKENS).expand(&[b, 4, d]);
    let query_pe = Var::cat(&[out_tokens, prompts.clone()], 1);
    let mut tokens = query_pe.clone();

    for l in 0..cfg.decoder_depth {
        let n = format!("decoder.layer{l}");
        let q = tokens.add(&query_pe);
        let a = ctx.attention(&format!("{n}.self_attn"), &q, &q, &tokens);
        tokens = ctx.layer_norm(&format!("{n}.norm1"), &tokens.add(&a));
        let keys = src.add(pe);
        let q = tokens.add(&query_pe);
        let a = ctx.attention(&format!("{n}.token_to_image"), &q, &keys, &src);
        tokens = ctx.layer_norm(&format!("{n}.norm2"), &tokens.add(&a));
        let h = ctx.linear(&format!("{n}.mlp.fc1"), &tokens).gelu();
        let m = ctx.linear(&format!("{n}.mlp.fc2"), &h);
        tokens = ctx.layer_norm(&format!("{n}.norm3"), &tokens.add(&m));
        let q = tokens.add(&query_pe);
        let a = ctx.attention(&format!("{n}.image_to_token"), &keys, &q, &tokens);
        src = ctx.layer_norm(&format!("{n}.norm4"), &src.add(&a));
    }
    let q = tokens.add(&query_pe);
    let a = ctx.attention("decoder.final_attn", &q, &src.add(pe), &src);
    tokens = ctx.layer_norm("decoder.final_norm", &tokens.add(&a));

    let map = to_grid(&src, g, g);
    let x = resize(&map, 2 * g, 2 * g);
    let x = ctx
        .conv("decoder.up1", &x, 1, 1)
        .add(&ctx.conv("decoder.skip1", &branch_out.stage0, 1, 0))
        .gelu();
    let x = resize(&x, 4 * g, 4 * g);
    let x = ctx
        .conv("decoder.up2", &x, 1, 1)
        .add(&ctx.conv("decoder.skip2", &branch_out.stem, 1, 0))
        .gelu();

    let (start, k) = token_rows(task);
    let h = head(task);
    let hyper = tokens.narrow(1, start, k);
    let hyper = ctx.linear(&format!("{h}.fc1"), &hyper).gelu();
    let hyper = ctx.linear(&format!("{h}.fc2"), &hyper);
    let side = 4 * g;
    let pixels = x.reshape(&[b, d / 4, side * side]);
    let out = hyper.matmul(&pixels).reshape(&[b, k, side, side]);
    resize(&out, cfg.input_size, cfg.input_size)
}
