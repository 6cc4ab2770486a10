//! Training objective: Dice on the mask, MSE on the heatmaps, and the
//! prompt-alignment term during warm-up.

use autosame_tensor::{Float, Var};
use serde::{Deserialize, Serialize};

use crate::network::ForwardOutput;
use crate::prompting::{alignment_loss, PromptError};

pub const DICE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub dice: f64,
    pub mse: f64,
    pub align: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            dice: 1.0,
            mse: 20.0,
            align: 1.0,
        }
    }
}

impl LossWeights {
    /// The alignment weight applies only while `epoch < warmup_epochs`.
    pub fn for_epoch(&self, epoch: usize, warmup_epochs: usize) -> Self {
        Self {
            align: if epoch < warmup_epochs { self.align } else { 0.0 },
            ..*self
        }
    }

    pub fn combine(&self, dice: f64, mse: f64, align: f64) -> f64 {
        self.dice * dice + self.mse * mse + self.align * align
    }
}

/// `1 − (2Σpg + ε)/(Σp + Σg + ε)` per leading index, averaged; the last
/// two axes are the image.
pub fn dice_loss<T: Float>(prob: &Var<T>, gt: &Var<T>) -> Var<T> {
    let n = prob.ndim();
    let per_image = |v: &Var<T>| v.sum_axis(n - 1).sum_axis(n - 2);
    let inter = per_image(&prob.mul(gt)).affine(2.0, DICE_EPS);
    let union = per_image(prob).add(&per_image(gt)).affine(1.0, DICE_EPS);
    inter.div(&union).neg().affine(1.0, 1.0).mean_all()
}

pub fn mse_loss<T: Float>(pred: &Var<T>, target: &Var<T>) -> Var<T> {
    pred.sub(target).sqr().mean_all()
}

/// Supervision for one batch.
pub struct Targets<T: Float> {
    /// (b, 1, S, S), values 0 or 1.
    pub mask: Var<T>,
    /// (b, 3, S, S).
    pub heatmaps: Var<T>,
    /// Prompt-encoder tokens of the true box (b, 2, d) and points (b, 3, d).
    pub pe_seg: Var<T>,
    pub pe_hr: Var<T>,
}

pub struct LossTerms<T: Float> {
    pub total: Var<T>,
    pub dice: f64,
    pub mse: f64,
    /// `L_A_seg + L_A_hr`, or 0 when the weight is 0.
    pub align: f64,
}

/// `w_dice·dice + w_mse·mse + w_align·(L_A_seg + L_A_hr)`. The alignment
/// terms are not built at all when their weight is 0.
pub fn total_loss<T: Float>(
    out: &ForwardOutput<T>,
    targets: &Targets<T>,
    weights: &LossWeights,
) -> Result<LossTerms<T>, PromptError> {
    let dice = dice_loss(&out.seg.maps.sigmoid(), &targets.mask);
    let mse = mse_loss(&out.hr.maps, &targets.heatmaps);
    let mut total = dice.scale(weights.dice).add(&mse.scale(weights.mse));
    let mut align = 0.0;
    if weights.align != 0.0 {
        let a = alignment_loss(&out.seg.apg, &targets.pe_seg)?.add(&alignment_loss(&out.hr.apg, &targets.pe_hr)?);
        align = a.item().as_f64();
        total = total.add(&a.scale(weights.align));
    }
    Ok(LossTerms {
        dice: dice.item().as_f64(),
        mse: mse.item().as_f64(),
        align,
        total,
    })
}
