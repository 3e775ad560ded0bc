//! Binary-relevance recall@k and nDCG@k.

use alloc::collections::BTreeSet;

use crate::error::{Error, Result};

fn discount(rank: usize) -> f64 {
    // rank is 1-based
    1.0 / libm::log2(rank as f64 + 1.0)
}

/// `|top-k ∩ heldout| / min(k, |heldout|)`.
pub fn recall_at_k(ranking: &[u32], heldout: &[u32], k: usize) -> Result<f64> {
    if heldout.is_empty() {
        return Err(Error::EmptyHeldout);
    }
    let relevant: BTreeSet<u32> = heldout.iter().copied().collect();
    let hits = ranking.iter().take(k).filter(|i| relevant.contains(i)).count();
    Ok(hits as f64 / k.min(relevant.len()) as f64)
}

/// DCG of the top-k hits over the DCG of `min(k, |heldout|)` hits at the
/// top.
pub fn ndcg_at_k(ranking: &[u32], heldout: &[u32], k: usize) -> Result<f64> {
    if heldout.is_empty() {
        return Err(Error::EmptyHeldout);
    }
    let relevant: BTreeSet<u32> = heldout.iter().copied().collect();
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.contains(i))
        .map(|(r, _)| discount(r + 1))
        .sum();
    let ideal: f64 = (1..=k.min(relevant.len())).map(discount).sum();
    Ok(dcg / ideal)
}
