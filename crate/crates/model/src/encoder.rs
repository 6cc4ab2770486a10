//! Mini ViT image encoder with position and feature adapters.

use autosame_tensor::{Float, Var};

use crate::config::ModelConfig;
use crate::nn::{attend, to_grid, to_tokens, Ctx, Init};
use crate::resize::resize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EncoderError {
    #[error("expected input (b, 1, {size}, {size}), got {got:?}")]
    WrongSize { size: usize, got: Vec<usize> },
}

pub struct EncoderOutput<T: Float> {
    /// Token features (b, g², E) after each block.
    pub levels: Vec<Var<T>>,
    /// Neck output (b, g², d).
    pub embedding: Var<T>,
}

pub fn init<T: Float>(init: &mut Init<'_, T>, cfg: &ModelConfig) {
    let e = cfg.embed_dim;
    let p = cfg.patch_size;
    init.linear("encoder.patch", cfg.in_chans * p * p, e);
    init.normal("encoder.pos_embed", &[1, e, cfg.pos_grid, cfg.pos_grid], 0.02);
    init.zero_linear("encoder.pos_adapter", e, e);
    for i in 0..cfg.depth {
        let b = format!("encoder.block{i}");
        init.layer_norm(&format!("{b}.norm1"), e);
        init.attention(&format!("{b}.attn"), e);
        init.layer_norm(&format!("{b}.norm2"), e);
        init.linear(&format!("{b}.mlp.fc1"), e, cfg.mlp_ratio * e);
        init.linear(&format!("{b}.mlp.fc2"), cfg.mlp_ratio * e, e);
        init.linear(&format!("{b}.adapter.down"), e, cfg.adapter_dim);
        init.zero_linear(&format!("{b}.adapter.up"), cfg.adapter_dim, e);
    }
    init.layer_norm("encoder.neck.norm", e);
    init.linear("encoder.neck.proj", e, cfg.decoder_dim);
}

/// Multi-head self-attention over (b, n, e) with `heads` heads.
fn self_attention<T: Float>(ctx: &Ctx<'_, T>, name: &str, x: &Var<T>, heads: usize) -> Var<T> {
    let s = x.shape().to_vec();
    let (b, n, e) = (s[0], s[1], s[2]);
    let dh = e / heads;
    let split = |v: Var<T>| v.reshape(&[b, n, heads, dh]).permute(&[0, 2, 1, 3]);
    let q = split(ctx.linear(&format!("{name}.q"), x));
    let k = split(ctx.linear(&format!("{name}.k"), x));
    let v = split(ctx.linear(&format!("{name}.v"), x));
    let out = attend(&q, &k, &v).permute(&[0, 2, 1, 3]).reshape(&[b, n, e]);
    ctx.linear(&format!("{name}.out"), &out)
}

/// Runs the encoder on grayscale images (b, 1, S, S). With `adapters` off,
/// the position and feature adapters are skipped entirely.
pub fn forward<T: Float>(
    ctx: &Ctx<'_, T>,
    cfg: &ModelConfig,
    image: &Var<T>,
    adapters: bool,
) -> Result<EncoderOutput<T>, EncoderError> {
    let s = image.shape().to_vec();
    let size = cfg.input_size;
    if s.len() != 4 || s[1] != 1 || s[2] != size || s[3] != size {
        return Err(EncoderError::WrongSize { size, got: s });
    }
    let (b, c, p, g, e) = (s[0], cfg.in_chans, cfg.patch_size, cfg.grid(), cfg.embed_dim);

    let patches = image
        .expand(&[b, c, size, size])
        .reshape(&[b, c, g, p, g, p])
        .permute(&[0, 2, 4, 1, 3, 5])
        .reshape(&[b, g * g, c * p * p]);
    let mut x = ctx.linear("encoder.patch", &patches);

    let mut pos = to_tokens(&resize(&ctx.p("encoder.pos_embed"), g, g));
    if adapters {
        pos = pos.add(&ctx.linear("encoder.pos_adapter", &pos));
    }
    x = x.add(&pos);

    let mut levels = Vec::with_capacity(cfg.depth);
    for i in 0..cfg.depth {
        let n = format!("encoder.block{i}");
        let h = ctx.layer_norm(&format!("{n}.norm1"), &x);
        x = x.add(&self_attention(ctx, &format!("{n}.attn"), &h, cfg.heads));
        let h = ctx.layer_norm(&format!("{n}.norm2"), &x);
        let h = ctx.linear(&format!("{n}.mlp.fc1"), &h).gelu();
        x = x.add(&ctx.linear(&format!("{n}.mlp.fc2"), &h));
        if adapters {
            let a = ctx.linear(&format!("{n}.adapter.down"), &x).gelu();
            x = x.add(&ctx.linear(&format!("{n}.adapter.up"), &a));
        }
        levels.push(x.clone());
    }
    debug_assert_eq!(x.shape(), &[b, g * g, e]);
    let embedding = ctx.linear("encoder.neck.proj", &ctx.layer_norm("encoder.neck.norm", &x));
    Ok(EncoderOutput { levels, embedding })
}

/// Token features (b, g², E) as a map (b, E, g, g).
pub fn level_map<T: Float>(tokens: &Var<T>, g: usize) -> Var<T> {
    to_grid(tokens, g, g)
}
