use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid model config: {0}")]
pub struct ConfigError(pub String);

/// Network shape. Stage `i` of each CNN branch has `cnn_channels[i + 1]`
/// channels; `cnn_channels[0]` is the stem width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_size: usize,
    pub in_chans: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub adapter_dim: usize,
    /// Side of the stored positional-embedding grid; resampled to the token
    /// grid by the position adapter.
    pub pos_grid: usize,
    pub cnn_channels: [usize; 4],
    pub decoder_dim: usize,
    pub decoder_depth: usize,
    /// Number of trailing CNN stages (1..=3) fused with encoder features.
    pub fcba_levels: usize,
    /// Seed of the frozen prompt-encoder weights.
    pub prompt_seed: u64,
}

impl ModelConfig {
    /// Default desk-scale network for 256 px inputs.
    pub fn desk() -> Self {
        Self {
            input_size: 256,
            in_chans: 3,
            patch_size: 16,
            embed_dim: 64,
            depth: 2,
            heads: 2,
            mlp_ratio: 2,
            adapter_dim: 16,
            pos_grid: 8,
            cnn_channels: [8, 16, 32, 32],
            decoder_dim: 32,
            decoder_depth: 1,
            fcba_levels: 2,
            prompt_seed: 0x5eed,
        }
    }

    /// Larger encoder: depth 4, width 128.
    pub fn large() -> Self {
        Self {
            embed_dim: 128,
            depth: 4,
            heads: 4,
            mlp_ratio: 4,
            adapter_dim: 32,
            cnn_channels: [16, 32, 64, 64],
            decoder_dim: 64,
            decoder_depth: 2,
            ..Self::desk()
        }
    }

    /// Smallest useful network, for gradient checks.
    pub fn tiny() -> Self {
        Self {
            input_size: 32,
            in_chans: 1,
            patch_size: 8,
            embed_dim: 16,
            depth: 2,
            heads: 2,
            mlp_ratio: 2,
            adapter_dim: 4,
            pos_grid: 2,
            cnn_channels: [4, 4, 8, 8],
            decoder_dim: 8,
            decoder_depth: 1,
            fcba_levels: 3,
            prompt_seed: 3,
        }
    }

    /// Token grid side.
    pub fn grid(&self) -> usize {
        self.input_size / self.patch_size
    }

    /// Spatial side of CNN stage `i` (0-based over the three stages), and
    /// of the stem for `None`.
    pub fn stage_size(&self, stage: Option<usize>) -> usize {
        let g = self.grid();
        match stage {
            None => 4 * g,
            Some(0) => 2 * g,
            Some(_) => g,
        }
    }

    /// Whether CNN stage `i` is fused with encoder features.
    pub fn fused(&self, stage: usize) -> bool {
        stage + self.fcba_levels >= 3
    }

    /// Encoder block whose output feeds stage `i`.
    pub fn encoder_level(&self, stage: usize) -> usize {
        ((stage + 1) * self.depth).div_ceil(3).max(1) - 1
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError(m));
        let dims = [
            ("input_size", self.input_size),
            ("in_chans", self.in_chans),
            ("patch_size", self.patch_size),
            ("embed_dim", self.embed_dim),
            ("depth", self.depth),
            ("heads", self.heads),
            ("mlp_ratio", self.mlp_ratio),
            ("adapter_dim", self.adapter_dim),
            ("pos_grid", self.pos_grid),
            ("decoder_dim", self.decoder_dim),
            ("decoder_depth", self.decoder_depth),
        ];
        if let Some((n, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return bad(format!("{n} must be positive"));
        }
        if self.cnn_channels.contains(&0) {
            return bad("cnn_channels must be positive".into());
        }
        if self.input_size % self.patch_size != 0 {
            return bad(format!(
                "input_size {} is not divisible by patch_size {}",
                self.input_size, self.patch_size
            ));
        }
        if self.patch_size % 4 != 0 {
            return bad(format!("patch_size {} must be divisible by 4", self.patch_size));
        }
        if self.embed_dim % self.heads != 0 {
            return bad(format!("embed_dim {} is not divisible by heads {}", self.embed_dim, self.heads));
        }
        if self.decoder_dim % 4 != 0 {
            return bad(format!("decoder_dim {} must be divisible by 4", self.decoder_dim));
        }
        if !(1..=3).contains(&self.fcba_levels) {
            return bad(format!("fcba_levels {} must be in 1..=3", self.fcba_levels));
        }
        for stage in 0..3 {
            let s = self.stage_size(Some(stage));
            if self.fused(stage) && s % 4 != 0 {
                return bad(format!("fused stage {stage} has side {s}, not divisible by 4"));
            }
        }
        Ok(())
    }
}
