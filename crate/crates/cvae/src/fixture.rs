//! Seeded synthetic dataset with block-structured preferences.
//!
//! Items are split evenly into categories by `item % categories`; every
//! fifth item also carries a second, rotating label. Users fall
//! into clusters, one per unordered pair of categories, and draw most of
//! their positives from those two categories with a cluster-specific
//! popularity order, plus a few off-cluster positives and some sub-threshold
//! ratings. A coverage pass guarantees every item at least
//! `min_item_positives` positives, so with matching thresholds
//! preprocessing keeps every user and item and the recorded counts are
//! exact.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use cvae_core::rng::{purpose, RngStream};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::Result;
use crate::manifest::{write_atomic, write_json};

pub const CATEGORY_NAMES: [&str; 8] = ["Action", "Comedy", "Drama", "Horror", "Romance", "SciFi", "Thriller", "Western"];

/// Label present on some items and removed by the fixture config's
/// drop-list.
pub const DROPPED_LABEL: &str = "IMAX";

/// Lines with ids that match no item, to exercise skipping.
pub const GHOST_ITEMS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub users: usize,
    pub items: usize,
    pub categories: usize,
    pub seed: u64,
    /// Positives drawn from each preferred category, inclusive range.
    pub per_category: (usize, usize),
    /// Off-cluster positives per user, inclusive range.
    pub off_cluster: (usize, usize),
    /// Sub-threshold ratings per user, inclusive range.
    pub negatives: (usize, usize),
    pub min_item_positives: usize,
    pub rating_threshold: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            users: 1000,
            items: 200,
            categories: 5,
            seed: 0,
            per_category: (6, 12),
            off_cluster: (0, 2),
            negatives: (1, 4),
            min_item_positives: 5,
            rating_threshold: 3.5,
        }
    }
}

/// Counts the generator knows by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureTruth {
    pub n_users: usize,
    pub n_items: usize,
    pub n_categories: usize,
    /// Distinct (user, item) positives.
    pub n_interactions: usize,
    /// Lines in the ratings file, negatives included.
    pub n_rating_lines: usize,
    pub items_per_category: Vec<usize>,
    pub skipped_category_lines: usize,
    /// Conditions per user that the user's positives satisfy, summed, plus
    /// one unconditioned example per user.
    pub n_examples_all_users: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fixture {
    pub spec: FixtureSpec,
    /// `(user_id, item_id, rating)` in file order.
    pub ratings: Vec<(String, String, f64)>,
    /// Per item index: labels, before any drop-list.
    pub labels: Vec<Vec<String>>,
    pub truth: FixtureTruth,
}

pub fn item_id(i: usize) -> String {
    format!("m{i}")
}

pub fn user_id(u: usize) -> String {
    format!("u{u}")
}

fn item_categories(spec: &FixtureSpec, i: usize) -> Vec<usize> {
    let c = spec.categories;
    let mut v = vec![i % c];
    if i % 5 == 4 && c > 1 {
        v.push((i % c + 1 + (i / 5) % (c - 1)) % c);
    }
    v.sort_unstable();
    v
}

fn in_range(rng: &mut RngStream, (lo, hi): (usize, usize)) -> usize {
    lo + rng.below((hi - lo + 1) as u64) as usize
}

pub fn generate(spec: &FixtureSpec) -> Fixture {
    assert!(spec.categories >= 2 && spec.categories <= CATEGORY_NAMES.len());
    assert!(spec.items >= spec.categories);
    let c = spec.categories;
    let members: Vec<Vec<usize>> = (0..c).map(|k| (0..spec.items).filter(|&i| i % c == k).collect()).collect();
    let pairs: Vec<(usize, usize)> = (0..c).flat_map(|a| (a + 1..c).map(move |b| (a, b))).collect();
    // each cluster ranks a category's items in its own order; position p is
    // drawn with weight 1 / (p + 2)
    let orders: Vec<Vec<Vec<usize>>> = (0..pairs.len())
        .map(|k| {
            let mut rng = RngStream::derived(spec.seed, &[purpose::FIXTURE, 0, k as u64]);
            members
                .iter()
                .map(|m| {
                    let mut o = m.clone();
                    rng.shuffle(&mut o);
                    o
                })
                .collect()
        })
        .collect();
    let weighted_pick = |rng: &mut RngStream, order: &[usize], taken: &BTreeSet<usize>| -> Option<usize> {
        let free: Vec<(usize, f64)> = order
            .iter()
            .enumerate()
            .filter(|(_, i)| !taken.contains(i))
            .map(|(p, &i)| (i, 1.0 / (p as f64 + 2.0)))
            .collect();
        let total: f64 = free.iter().map(|(_, w)| w).sum();
        let mut t = rng.uniform() * total;
        for &(i, w) in &free {
            if t < w {
                return Some(i);
            }
            t -= w;
        }
        free.last().map(|&(i, _)| i)
    };

    let mut positives: Vec<BTreeSet<usize>> = Vec::with_capacity(spec.users);
    let mut negatives: Vec<Vec<usize>> = Vec::with_capacity(spec.users);
    for u in 0..spec.users {
        let mut rng = RngStream::derived(spec.seed, &[purpose::FIXTURE, 1, u as u64]);
        let cluster = u % pairs.len();
        let (a, b) = pairs[cluster];
        let mut pos = BTreeSet::new();
        for cat in [a, b] {
            for _ in 0..in_range(&mut rng, spec.per_category) {
                if let Some(i) = weighted_pick(&mut rng, &orders[cluster][cat], &pos) {
                    pos.insert(i);
                }
            }
        }
        let others: Vec<usize> = (0..spec.items).filter(|&i| i % c != a && i % c != b).collect();
        for _ in 0..in_range(&mut rng, spec.off_cluster) {
            if !others.is_empty() {
                pos.insert(others[rng.below(others.len() as u64) as usize]);
            }
        }
        let mut neg = Vec::new();
        for _ in 0..in_range(&mut rng, spec.negatives) {
            let i = rng.below(spec.items as u64) as usize;
            if !pos.contains(&i) && !neg.contains(&i) {
                neg.push(i);
            }
        }
        positives.push(pos);
        negatives.push(neg);
    }

    // coverage: top up rare items from users whose cluster prefers them
    let mut rng = RngStream::derived(spec.seed, &[purpose::FIXTURE, 2]);
    for i in 0..spec.items {
        let mut count = positives.iter().filter(|p| p.contains(&i)).count();
        let mut guard = 0;
        while count < spec.min_item_positives && guard < 100 * spec.users {
            guard += 1;
            let u = rng.below(spec.users as u64) as usize;
            let (a, b) = pairs[u % pairs.len()];
            let prefers = i % c == a || i % c == b;
            if (prefers || guard > 10 * spec.users) && positives[u].insert(i) {
                negatives[u].retain(|&n| n != i);
                count += 1;
            }
        }
    }

    let mut ratings = Vec::new();
    for u in 0..spec.users {
        let mut rng = RngStream::derived(spec.seed, &[purpose::FIXTURE, 3, u as u64]);
        let mut lines: Vec<(usize, f64)> = Vec::new();
        for &i in &positives[u] {
            lines.push((i, if rng.uniform() < 0.5 { 4.0 } else { 5.0 }));
        }
        for &i in &negatives[u] {
            lines.push((i, 1.0 + rng.below(3) as f64 * 0.5 + rng.below(2) as f64));
        }
        rng.shuffle(&mut lines);
        for (i, r) in lines {
            debug_assert!((r >= spec.rating_threshold) == positives[u].contains(&i));
            ratings.push((user_id(u), item_id(i), r));
        }
    }

    let labels: Vec<Vec<String>> = (0..spec.items)
        .map(|i| {
            let mut l: Vec<String> = item_categories(spec, i).into_iter().map(|k| CATEGORY_NAMES[k].to_string()).collect();
            if i % 7 == 3 {
                l.push(DROPPED_LABEL.to_string());
            }
            l
        })
        .collect();

    let n_examples_all_users = positives
        .iter()
        .map(|p| {
            let cats: BTreeSet<usize> = p.iter().flat_map(|&i| item_categories(spec, i)).collect();
            cats.len() + 1
        })
        .sum();
    let truth = FixtureTruth {
        n_users: spec.users,
        n_items: spec.items,
        n_categories: c,
        n_interactions: positives.iter().map(BTreeSet::len).sum(),
        n_rating_lines: ratings.len(),
        items_per_category: (0..c)
            .map(|k| (0..spec.items).filter(|&i| item_categories(spec, i).contains(&k)).count())
            .collect(),
        skipped_category_lines: GHOST_ITEMS,
        n_examples_all_users,
    };
    Fixture {
        spec: spec.clone(),
        ratings,
        labels,
        truth,
    }
}

/// Model and training settings sized for the fixture; everything else at
/// the defaults.
pub fn fixture_config(spec: &FixtureSpec) -> Config {
    let mut cfg = Config {
        seed: spec.seed,
        ..Config::default()
    };
    cfg.data.ratings = "ratings.csv".into();
    cfg.data.categories = "item_categories.csv".into();
    cfg.data.rating_threshold = spec.rating_threshold;
    cfg.data.min_user_interactions = 5;
    cfg.data.min_item_interactions = spec.min_item_positives;
    cfg.data.n_heldout_val = spec.users / 10;
    cfg.data.n_heldout_test = spec.users / 10;
    cfg.data.drop_categories = vec![DROPPED_LABEL.to_string()];
    cfg.model.hidden = 100;
    cfg.model.latent = 20;
    cfg.train.batch_size = 100;
    cfg.train.max_epochs = 30;
    cfg.eval.ks_ndcg = vec![20, 100];
    cfg.analyze.sample_users = 500;
    cfg.analyze.max_rank = 50;
    cfg.analyze.purity_k = 20;
    cfg.output.root = "artifacts".into();
    cfg
}

/// Writes `ratings.csv`, `item_categories.csv`, `ground_truth.json` and a
/// ready-to-run `config.toml` into `dir`.
pub fn write_fixture(dir: &Path, fixture: &Fixture) -> Result<()> {
    let mut r = String::from("user_id,item_id,rating,timestamp\n");
    for (k, (u, i, v)) in fixture.ratings.iter().enumerate() {
        writeln!(r, "{u},{i},{v},{}", 1_500_000_000 + k).unwrap();
    }
    let mut c = String::from("item_id,title,genres\n");
    for (i, l) in fixture.labels.iter().enumerate() {
        writeln!(c, "{},\"Title {i}, part {}\",{}", item_id(i), i % 3, l.join("|")).unwrap();
    }
    for g in 0..GHOST_ITEMS {
        writeln!(c, "ghost{g},Missing,{}", CATEGORY_NAMES[0]).unwrap();
    }
    write_atomic(&dir.join("ratings.csv"), r.as_bytes())?;
    write_atomic(&dir.join("item_categories.csv"), c.as_bytes())?;
    write_json(&dir.join("ground_truth.json"), &fixture.truth)?;
    write_atomic(&dir.join("config.toml"), fixture_config(&fixture.spec).to_toml().as_bytes())?;
    Ok(())
}
