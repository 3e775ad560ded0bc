//! Interaction data, item categories and the training/evaluation splits.

mod conditions;
mod filter;
mod split;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub use conditions::{expand_conditions, satisfiable_categories};
pub use filter::filter_interactions;
pub use split::{split_heldout, HeldoutUser, Split, SplitSpec};

/// One line of a ratings file before binarization.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRating {
    pub user_id: String,
    pub item_id: String,
    pub value: f64,
    pub timestamp: Option<i64>,
}

/// Sparse binary user × item matrix with the external id maps.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionMatrix {
    rows: Vec<Vec<u32>>,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    item_lookup: BTreeMap<String, u32>,
}

impl InteractionMatrix {
    /// Builds the matrix from per-user item lists. Rows are sorted and
    /// deduplicated; every row must be non-empty and every index `< m`.
    pub fn new(mut rows: Vec<Vec<u32>>, user_ids: Vec<String>, item_ids: Vec<String>) -> Result<Self> {
        if rows.len() != user_ids.len() {
            return Err(Error::InvalidConfig(format!(
                "{} rows but {} user ids",
                rows.len(),
                user_ids.len()
            )));
        }
        let m = item_ids.len();
        for (u, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            if row.is_empty() {
                return Err(Error::InvalidConfig(format!("user {u} has no interactions")));
            }
            if let Some(&last) = row.last() {
                if last as usize >= m {
                    return Err(Error::InvalidConfig(format!("item index {last} out of range for {m} items")));
                }
            }
        }
        let item_lookup = item_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        Ok(Self {
            rows,
            user_ids,
            item_ids,
            item_lookup,
        })
    }

    pub fn n_users(&self) -> usize {
        self.rows.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn row(&self, user: usize) -> &[u32] {
        &self.rows[user]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn density(&self) -> f64 {
        self.nnz() as f64 / (self.n_users() as f64 * self.n_items() as f64)
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn item_index(&self, id: &str) -> Option<u32> {
        self.item_lookup.get(id).copied()
    }

    /// Users who interacted with `item`. Derived on demand, not stored.
    pub fn users_of(&self, item: u32) -> Vec<u32> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, row)| row.binary_search(&item).is_ok())
            .map(|(u, _)| u as u32)
            .collect()
    }
}

/// Binary item × category membership.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemConditionMatrix {
    rows: Vec<Vec<u32>>,
    columns: Vec<Vec<u32>>,
    category_names: Vec<String>,
}

impl ItemConditionMatrix {
    pub fn new(mut rows: Vec<Vec<u32>>, category_names: Vec<String>) -> Result<Self> {
        let s = category_names.len();
        if s == 0 {
            return Err(Error::InvalidConfig("item-condition matrix needs at least one category".into()));
        }
        let mut columns = alloc::vec![Vec::new(); s];
        for (item, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            for &c in row.iter() {
                if c as usize >= s {
                    return Err(Error::ConditionOutOfRange {
                        index: c as usize,
                        categories: s,
                    });
                }
                columns[c as usize].push(item as u32);
            }
        }
        Ok(Self {
            rows,
            columns,
            category_names,
        })
    }

    /// Builds the matrix from per-item label lists. Labels in `drop` are
    /// discarded; the remaining labels are indexed densely in sorted order.
    /// Items absent from `labels` get an empty row.
    pub fn from_labels<'a, I>(m: usize, labels: I, drop: &[String]) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, Vec<&'a str>)>,
    {
        let labels: Vec<(usize, Vec<&str>)> = labels.into_iter().collect();
        let mut names: Vec<String> = labels
            .iter()
            .flat_map(|(_, l)| l.iter())
            .filter(|l| !drop.iter().any(|d| d == *l))
            .map(|l| String::from(*l))
            .collect();
        names.sort();
        names.dedup();
        let index: BTreeMap<&str, u32> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i as u32))
            .collect();
        let mut rows = alloc::vec![Vec::new(); m];
        for (item, ls) in &labels {
            if *item >= m {
                return Err(Error::InvalidConfig(format!("item index {item} out of range for {m} items")));
            }
            rows[*item].extend(ls.iter().filter_map(|l| index.get(l).copied()));
        }
        Self::new(rows, names)
    }

    pub fn n_items(&self) -> usize {
        self.rows.len()
    }

    pub fn n_categories(&self) -> usize {
        self.category_names.len()
    }

    pub fn categories_of(&self, item: usize) -> &[u32] {
        &self.rows[item]
    }

    pub fn items_in(&self, category: usize) -> &[u32] {
        &self.columns[category]
    }

    pub fn contains(&self, item: usize, category: usize) -> bool {
        self.rows[item].binary_search(&(category as u32)).is_ok()
    }

    pub fn category_names(&self) -> &[String] {
        &self.category_names
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.category_names.iter().position(|n| n == name)
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }
}

/// A condition over `s` categories with at most one active bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConditionVector {
    s: usize,
    active: Option<usize>,
}

impl ConditionVector {
    pub fn unconditioned(s: usize) -> Self {
        Self { s, active: None }
    }

    pub fn category(s: usize, index: usize) -> Result<Self> {
        if index >= s {
            return Err(Error::ConditionOutOfRange { index, categories: s });
        }
        Ok(Self { s, active: Some(index) })
    }

    /// `-1` (or any negative) means unconditioned, the encoding used by
    /// example-list files.
    pub fn from_signed(s: usize, index: i64) -> Result<Self> {
        if index < 0 {
            Ok(Self::unconditioned(s))
        } else {
            Self::category(s, index as usize)
        }
    }

    pub fn dim(&self) -> usize {
        self.s
    }

    pub fn active(&self) -> Option<usize> {
        self.active
    }

    pub fn is_conditioned(&self) -> bool {
        self.active.is_some()
    }

    pub fn signed_index(&self) -> i64 {
        self.active.map_or(-1, |a| a as i64)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = alloc::vec![0.0; self.s];
        if let Some(a) = self.active {
            v[a] = 1.0;
        }
        v
    }
}

/// One (user, condition) pair fed to the trainer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct TrainingExample {
    pub user: u32,
    pub condition: ConditionVector,
}
