use alloc::format;
use alloc::vec::Vec;

use super::InteractionMatrix;
use crate::error::{Error, Result};
use crate::rng::{purpose, RngStream};

/// Held-out split configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    pub n_heldout_val: usize,
    pub n_heldout_test: usize,
    pub foldin_fraction: f64,
    pub min_user_interactions: usize,
    pub min_item_interactions: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self, n_users: usize) -> Result<()> {
        if !(self.foldin_fraction > 0.0 && self.foldin_fraction < 1.0) {
            return Err(Error::InvalidSplit(format!(
                "fold-in fraction {} outside (0, 1)",
                self.foldin_fraction
            )));
        }
        if self.n_heldout_val + self.n_heldout_test >= n_users {
            return Err(Error::InvalidSplit(format!(
                "{} + {} held-out users leave no training users out of {n_users}",
                self.n_heldout_val, self.n_heldout_test
            )));
        }
        Ok(())
    }
}

/// A validation or test user: the model sees `foldin`, metrics are computed
/// against `heldout`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeldoutUser {
    pub user: u32,
    pub foldin: Vec<u32>,
    pub heldout: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train_users: Vec<u32>,
    pub validation: Vec<HeldoutUser>,
    pub test: Vec<HeldoutUser>,
}

/// Number of fold-in items for a row of `len` items (`len >= 2`).
pub fn foldin_count(len: usize, fraction: f64) -> usize {
    // The epsilon keeps e.g. 0.29 * 100 from flooring to 28.
    let raw = libm::floor(fraction * len as f64 + 1e-9) as usize;
    raw.clamp(1, len - 1)
}

fn partition_user(matrix: &InteractionMatrix, user: u32, spec: &SplitSpec) -> HeldoutUser {
    let mut items = matrix.row(user as usize).to_vec();
    let mut rng = RngStream::derived(spec.seed, &[purpose::SPLIT_ITEMS, user as u64]);
    rng.shuffle(&mut items);
    let k = foldin_count(items.len(), spec.foldin_fraction);
    let mut heldout = items.split_off(k);
    items.sort_unstable();
    heldout.sort_unstable();
    HeldoutUser {
        user,
        foldin: items,
        heldout,
    }
}

/// Draws validation and test users uniformly (under `spec.seed`) among users
/// with at least two items and partitions each one into fold-in and held-out
/// items. All remaining users train.
pub fn split_heldout(matrix: &InteractionMatrix, spec: &SplitSpec) -> Result<Split> {
    spec.validate(matrix.n_users())?;
    let mut candidates: Vec<u32> = (0..matrix.n_users() as u32)
        .filter(|&u| matrix.row(u as usize).len() >= 2)
        .collect();
    let needed = spec.n_heldout_val + spec.n_heldout_test;
    if candidates.len() < needed {
        return Err(Error::InvalidSplit(format!(
            "{needed} held-out users requested but only {} users have two or more items",
            candidates.len()
        )));
    }
    let mut rng = RngStream::derived(spec.seed, &[purpose::SPLIT_USERS]);
    rng.shuffle(&mut candidates);

    let mut val_users = candidates[..spec.n_heldout_val].to_vec();
    let mut test_users = candidates[spec.n_heldout_val..needed].to_vec();
    val_users.sort_unstable();
    test_users.sort_unstable();

    let mut heldout = alloc::vec![false; matrix.n_users()];
    for &u in val_users.iter().chain(&test_users) {
        heldout[u as usize] = true;
    }
    let train_users = (0..matrix.n_users() as u32).filter(|&u| !heldout[u as usize]).collect();

    Ok(Split {
        train_users,
        validation: val_users.iter().map(|&u| partition_user(matrix, u, spec)).collect(),
        test: test_users.iter().map(|&u| partition_user(matrix, u, spec)).collect(),
    })
}
