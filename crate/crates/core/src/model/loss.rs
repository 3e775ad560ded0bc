use alloc::vec;
use alloc::vec::Vec;

use super::GaussianLatent;
use crate::data::{ConditionVector, ItemConditionMatrix};
use crate::error::{Error, Result};

/// Per-example loss terms. `total = neg_ll + beta · kl`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub neg_ll: f64,
    pub kl: f64,
    pub beta: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(neg_ll: f64, kl: f64, beta: f64) -> Self {
        Self {
            neg_ll,
            kl,
            beta,
            total: neg_ll + beta * kl,
        }
    }
}

/// Which items count in the reconstruction term: the active category's
/// column of `g`, or all ones for an unconditioned example.
pub fn condition_mask(c: &ConditionVector, g: Option<&ItemConditionMatrix>, m: usize) -> Result<Vec<f64>> {
    let Some(j) = c.active() else {
        return Ok(vec![1.0; m]);
    };
    let g = g.ok_or_else(|| Error::InvalidConfig("conditioned example without an item-condition matrix".into()))?;
    if g.n_items() != m {
        return Err(Error::DimensionMismatch {
            op: "condition_mask",
            left: (m, c.dim()),
            right: (g.n_items(), g.n_categories()),
        });
    }
    if j >= g.n_categories() {
        return Err(Error::ConditionOutOfRange {
            index: j,
            categories: g.n_categories(),
        });
    }
    let mut mask = vec![0.0; m];
    for &i in g.items_in(j) {
        mask[i as usize] = 1.0;
    }
    Ok(mask)
}

/// `-Σ_i mask_i · r_ui · log π_i` over the rated `items`.
pub fn conditioned_nll(log_probs: &[f64], items: &[u32], mask: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0.0;
    for &i in items {
        let w = mask[i as usize];
        if w != 0.0 {
            total -= w * log_probs[i as usize];
            count += w;
        }
    }
    if count == 0.0 {
        return Err(Error::EmptyTarget);
    }
    Ok(total)
}

/// `KL(N(mu, exp(logvar)) || N(0, I)) = -½ Σ (1 + logvar - mu² - exp(logvar))`.
pub fn kl_divergence(latent: &GaussianLatent) -> f64 {
    -0.5 * latent
        .mu
        .iter()
        .zip(&latent.logvar)
        .map(|(&mu, &lv)| 1.0 + lv - mu * mu - libm::exp(lv))
        .sum::<f64>()
}
