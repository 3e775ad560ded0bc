//! Post-hoc analyses of a trained model: where target-category items land
//! in conditioned rankings, top-k purity, and the geometry of the
//! conditioned latent means.

mod pca;

use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{ConditionVector, HeldoutUser, InteractionMatrix, ItemConditionMatrix};
use crate::error::{Error, Result};
use crate::eval::{build_cases, rank_cvae, rank_filtered_baseline, ProtocolKind, RankingMode, Scorer};
use crate::exec::Executor;
use crate::model::Model;
use crate::rng::{purpose, RngStream};

pub use pca::{pca, PcaResult};

/// Per-position counts of target-category items over conditioned cases.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankHistogram {
    pub max_rank: usize,
    /// `bins[r]` counts cases whose item at 0-based position `r` satisfies
    /// the case's condition.
    pub bins: Vec<u64>,
    /// `slots[r]` counts cases whose ranking reaches position `r` at all.
    pub slots: Vec<u64>,
    pub cases: usize,
}

impl RankHistogram {
    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    /// Share of occupied top-`k` slots holding a satisfying item.
    pub fn purity(&self, k: usize) -> f64 {
        let k = k.min(self.max_rank);
        let hits: u64 = self.bins[..k].iter().sum();
        let slots: u64 = self.slots[..k].iter().sum();
        if slots == 0 {
            return f64::NAN;
        }
        hits as f64 / slots as f64
    }
}

/// Ranks every conditioned case of `users` and counts, per position up to
/// `max_rank`, how often the item there belongs to the requested category.
pub fn ranking_distribution<S: Scorer + ?Sized, E: Executor>(
    scorer: &S,
    mode: RankingMode,
    users: &[HeldoutUser],
    g: &ItemConditionMatrix,
    max_rank: usize,
    exec: &E,
) -> Result<RankHistogram> {
    let cases = build_cases(users, g, ProtocolKind::Conditioned);
    if cases.is_empty() {
        return Err(Error::NoCases);
    }
    let marks = exec.map(cases.len(), |idx| -> Result<Vec<bool>> {
        let case = &cases[idx];
        let ranked = match mode {
            RankingMode::Full => rank_cvae(scorer, case.user, case.foldin, &case.condition)?,
            RankingMode::Filtered => rank_filtered_baseline(scorer, case.user, case.foldin, &case.condition, g)?,
        };
        let j = case.condition.active().expect("conditioned case");
        Ok(ranked
            .item_order
            .iter()
            .take(max_rank)
            .map(|&i| g.contains(i as usize, j))
            .collect())
    });
    let mut hist = RankHistogram {
        max_rank,
        bins: alloc::vec![0; max_rank],
        slots: alloc::vec![0; max_rank],
        cases: cases.len(),
    };
    for m in marks {
        for (r, hit) in m?.into_iter().enumerate() {
            hist.slots[r] += 1;
            hist.bins[r] += hit as u64;
        }
    }
    Ok(hist)
}

/// Fraction of top-`k` slots, over all conditioned cases, that satisfy the
/// case's condition.
pub fn topk_purity<S: Scorer + ?Sized, E: Executor>(
    scorer: &S,
    mode: RankingMode,
    users: &[HeldoutUser],
    g: &ItemConditionMatrix,
    k: usize,
    exec: &E,
) -> Result<f64> {
    Ok(ranking_distribution(scorer, mode, users, g, k, exec)?.purity(k))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentRow {
    pub user: u32,
    /// Category index, or −1 for the unconditioned encoding.
    pub condition: i64,
    pub mu: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentTable {
    pub latent_dim: usize,
    pub category_names: Vec<String>,
    pub rows: Vec<LatentRow>,
}

impl LatentTable {
    pub fn n_categories(&self) -> usize {
        self.category_names.len()
    }

    pub fn condition_label(&self, condition: i64) -> &str {
        if condition < 0 {
            "unconditioned"
        } else {
            &self.category_names[condition as usize]
        }
    }

    /// Rows whose condition is not in `exclude`.
    pub fn without(&self, exclude: &[i64]) -> LatentTable {
        LatentTable {
            latent_dim: self.latent_dim,
            category_names: self.category_names.clone(),
            rows: self
                .rows
                .iter()
                .filter(|r| !exclude.contains(&r.condition))
                .cloned()
                .collect(),
        }
    }

    pub fn to_matrix(&self) -> crate::Matrix {
        let mut data = Vec::with_capacity(self.rows.len() * self.latent_dim);
        for r in &self.rows {
            data.extend_from_slice(&r.mu);
        }
        crate::Matrix::from_vec(self.rows.len(), self.latent_dim, data).expect("uniform row length")
    }
}

/// Draws `n` users from `pool` without replacement, returned sorted.
pub fn sample_users(pool: &[u32], n: usize, seed: u64) -> Vec<u32> {
    let mut v = pool.to_vec();
    RngStream::derived(seed, &[purpose::SAMPLE]).shuffle(&mut v);
    v.truncate(n);
    v.sort_unstable();
    v
}

/// Encoder means for every user under no condition and under each
/// category, in that order per user.
pub fn export_latents<E: Executor>(
    model: &Model,
    users: &[u32],
    matrix: &InteractionMatrix,
    category_names: &[String],
    exec: &E,
) -> Result<LatentTable> {
    let s = model.dims().categories;
    if category_names.len() != s {
        return Err(Error::InvalidConfig(alloc::format!(
            "{} category names for a model with {s} categories",
            category_names.len()
        )));
    }
    let per_user = exec.map(users.len(), |idx| -> Result<Vec<LatentRow>> {
        let u = users[idx];
        let history = matrix.row(u as usize);
        let mut rows = Vec::with_capacity(s + 1);
        for cond in -1..s as i64 {
            let c = ConditionVector::from_signed(s, cond)?;
            rows.push(LatentRow {
                user: u,
                condition: cond,
                mu: model.encode_mean(history, &c)?,
            });
        }
        Ok(rows)
    });
    let mut rows = Vec::with_capacity(users.len() * (s + 1));
    for r in per_user {
        rows.extend(r?);
    }
    Ok(LatentTable {
        latent_dim: model.dims().latent,
        category_names: category_names.to_vec(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Centroid {
    pub condition: i64,
    pub count: usize,
    pub coords: Vec<f64>,
}

/// Mean of each condition's rows, conditions ascending (−1 first).
pub fn centroids(conditions: &[i64], points: &crate::Matrix) -> Vec<Centroid> {
    let mut keys: Vec<i64> = conditions.to_vec();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|c| {
            let mut sum = alloc::vec![0.0; points.cols()];
            let mut count = 0;
            for (r, _) in conditions.iter().enumerate().filter(|(_, &x)| x == c) {
                crate::matrix::axpy(1.0, points.row(r), &mut sum);
                count += 1;
            }
            for v in &mut sum {
                *v /= count as f64;
            }
            Centroid {
                condition: c,
                count,
                coords: sum,
            }
        })
        .collect()
}

/// Per-condition centroids in the plane of two principal components.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentPairReport {
    /// 0-based component indices.
    pub pair: (usize, usize),
    pub centroids: Vec<Centroid>,
}

/// Centroids of the projected rows for each component pair. `result`
/// must have been fitted on `table`'s rows in order.
pub fn component_report(result: &PcaResult, table: &LatentTable, pairs: &[(usize, usize)]) -> Result<Vec<ComponentPairReport>> {
    let q = result.n_components();
    if result.projections.rows() != table.rows.len() {
        return Err(Error::DimensionMismatch {
            op: "component_report",
            left: result.projections.shape(),
            right: (table.rows.len(), table.latent_dim),
        });
    }
    let conditions: Vec<i64> = table.rows.iter().map(|r| r.condition).collect();
    pairs
        .iter()
        .map(|&(a, b)| {
            if a >= q || b >= q {
                return Err(Error::InvalidConfig(alloc::format!(
                    "component pair ({a}, {b}) out of range for {q} components"
                )));
            }
            let mut plane = crate::Matrix::zeros(table.rows.len(), 2);
            for r in 0..table.rows.len() {
                plane[(r, 0)] = result.projections[(r, a)];
                plane[(r, 1)] = result.projections[(r, b)];
            }
            Ok(ComponentPairReport {
                pair: (a, b),
                centroids: centroids(&conditions, &plane),
            })
        })
        .collect()
}

/// How PCA is fitted for the component report.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaOptions {
    pub components: usize,
    /// Conditions whose rows are removed before reporting.
    pub exclude: Vec<i64>,
    /// Refit on the remaining rows (true) or project them onto axes fitted
    /// with every row (false).
    pub recompute: bool,
    /// Leading components to discard from the reported result.
    pub drop_leading: usize,
}

impl Default for PcaOptions {
    fn default() -> Self {
        Self {
            components: 5,
            exclude: Vec::new(),
            recompute: true,
            drop_leading: 0,
        }
    }
}

/// Fits PCA per `opts` and returns the result together with the table its
/// projections refer to.
pub fn fit_pca(table: &LatentTable, opts: &PcaOptions) -> Result<(PcaResult, LatentTable)> {
    let kept = table.without(&opts.exclude);
    let q = opts.components + opts.drop_leading;
    let mut result = if opts.recompute {
        pca(&kept.to_matrix(), q)?
    } else {
        let full = pca(&table.to_matrix(), q)?;
        full.reproject(&kept.to_matrix())?
    };
    result.drop_leading(opts.drop_leading);
    Ok((result, kept))
}

/// Category spread in latent space: how far apart the category centroids
/// are relative to how tightly each category's rows cluster.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeparationReport {
    /// Mean Euclidean distance over all pairs of category centroids.
    pub mean_inter: f64,
    /// Mean over categories of the mean distance of a row to its centroid.
    pub mean_intra: f64,
    pub ratio: f64,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Separation of the conditioned rows; unconditioned rows are ignored.
pub fn latent_separation(table: &LatentTable) -> Result<SeparationReport> {
    let conditioned = table.without(&[-1]);
    let conditions: Vec<i64> = conditioned.rows.iter().map(|r| r.condition).collect();
    let points = conditioned.to_matrix();
    let cents = centroids(&conditions, &points);
    if cents.len() < 2 {
        return Err(Error::InvalidConfig("separation needs at least two categories".into()));
    }
    let mut inter = 0.0;
    let mut pairs = 0;
    for a in 0..cents.len() {
        for b in a + 1..cents.len() {
            inter += distance(&cents[a].coords, &cents[b].coords);
            pairs += 1;
        }
    }
    let mean_inter = inter / pairs as f64;
    let mut intra = 0.0;
    for c in &cents {
        let spread: f64 = conditioned
            .rows
            .iter()
            .filter(|r| r.condition == c.condition)
            .map(|r| distance(&r.mu, &c.coords))
            .sum();
        intra += spread / c.count as f64;
    }
    let mean_intra = intra / cents.len() as f64;
    Ok(SeparationReport {
        mean_inter,
        mean_intra,
        ratio: mean_inter / mean_intra,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Scorer;
    use crate::exec::Sequential;
    use alloc::vec;

    struct Random {
        m: usize,
        seed: u64,
    }

    impl Scorer for Random {
        fn n_items(&self) -> usize {
            self.m
        }

        fn scores(&self, user: u32, _h: &[u32], c: &ConditionVector) -> Result<Vec<f64>> {
            let mut rng = RngStream::derived(self.seed, &[user as u64, c.signed_index() as u64]);
            Ok((0..self.m).map(|_| rng.uniform()).collect())
        }
    }

    /// Scores items of the requested category above everything else.
    struct Perfect<'a> {
        g: &'a ItemConditionMatrix,
    }

    impl Scorer for Perfect<'_> {
        fn n_items(&self) -> usize {
            self.g.n_items()
        }

        fn scores(&self, _u: u32, _h: &[u32], c: &ConditionVector) -> Result<Vec<f64>> {
            Ok((0..self.g.n_items())
                .map(|i| match c.active() {
                    Some(j) if self.g.contains(i, j) => 1.0,
                    _ => 0.0,
                })
                .collect())
        }
    }

    fn setup(m: usize, n_users: u32) -> (ItemConditionMatrix, Vec<HeldoutUser>) {
        // category 0: every 4th item (prevalence 1/4); category 1: the rest
        let g = ItemConditionMatrix::new(
            (0..m).map(|i| vec![if i % 4 == 0 { 0 } else { 1 }]).collect(),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let users = (0..n_users)
            .map(|u| HeldoutUser {
                user: u,
                foldin: vec![u % m as u32],
                heldout: vec![0, 1],
            })
            .collect();
        (g, users)
    }

    #[test]
    fn perfect_scorer_fills_top_positions() {
        let (g, users) = setup(40, 6);
        let h = ranking_distribution(&Perfect { g: &g }, RankingMode::Full, &users, &g, 30, &Sequential).unwrap();
        assert_eq!(h.cases, 12);
        // category 0 has 10 items; fold-ins remove at most one of them.
        assert!(h.bins[..9].iter().all(|&b| b == h.cases as u64));
        assert_eq!(topk_purity(&Perfect { g: &g }, RankingMode::Full, &users, &g, 5, &Sequential).unwrap(), 1.0);
    }

    #[test]
    fn histogram_total_and_purity_identity() {
        let (g, users) = setup(40, 10);
        let scorer = Random { m: 40, seed: 4 };
        let h = ranking_distribution(&scorer, RankingMode::Full, &users, &g, 20, &Sequential).unwrap();
        assert_eq!(h.total(), h.bins.iter().sum::<u64>());
        for k in [1, 5, 20] {
            let direct = h.bins[..k].iter().sum::<u64>() as f64 / (k * h.cases) as f64;
            assert!((h.purity(k) - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn filtered_baseline_is_pure() {
        let (g, users) = setup(40, 8);
        let scorer = Random { m: 40, seed: 1 };
        let p = topk_purity(&scorer, RankingMode::Filtered, &users, &g, 20, &Sequential).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn random_scorer_purity_matches_prevalence() {
        // Monte Carlo oracle: uniform scores place a prevalence-p category at
        // each slot with probability ≈ p (here 0.25 for a, 0.75 for b).
        let m = 400;
        let (g, users) = setup(m, 400);
        let scorer = Random { m, seed: 9 };
        let h = ranking_distribution(&scorer, RankingMode::Full, &users, &g, 10, &Sequential).unwrap();
        let expected = 0.5 * (0.25 + 0.75);
        assert!((h.purity(10) - expected).abs() < 0.02, "{}", h.purity(10));
        for &b in &h.bins {
            let per_slot = b as f64 / h.cases as f64;
            assert!((per_slot - expected).abs() < 0.06);
        }
    }

    fn row(user: u32, condition: i64, mu: Vec<f64>) -> LatentRow {
        LatentRow { user, condition, mu }
    }

    #[test]
    fn centroid_of_single_row_is_the_row() {
        let pts = crate::Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 5.0], &[5.0, 7.0]]).unwrap();
        let c = centroids(&[0, 1, 1], &pts);
        assert_eq!(c[0].coords, vec![1.0, 2.0]);
        assert_eq!(c[1].coords, vec![4.0, 6.0]);
        assert_eq!(c[1].count, 2);
    }

    #[test]
    fn centroids_ignore_row_order() {
        let mut rng = RngStream::new(3);
        let rows: Vec<LatentRow> = (0..24)
            .map(|i| row(i, (i % 4) as i64 - 1, (0..3).map(|_| rng.standard_normal()).collect()))
            .collect();
        let table = LatentTable {
            latent_dim: 3,
            category_names: vec!["x".into(), "y".into(), "z".into()],
            rows,
        };
        let mut shuffled = table.clone();
        RngStream::new(8).shuffle(&mut shuffled.rows);
        let ca = centroids(&table.rows.iter().map(|r| r.condition).collect::<Vec<_>>(), &table.to_matrix());
        let cb = centroids(&shuffled.rows.iter().map(|r| r.condition).collect::<Vec<_>>(), &shuffled.to_matrix());
        for (a, b) in ca.iter().zip(&cb) {
            assert_eq!(a.condition, b.condition);
            for (x, y) in a.coords.iter().zip(&b.coords) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn separation_of_tight_clusters() {
        let rows = vec![
            row(0, 0, vec![0.0, 0.0]),
            row(1, 0, vec![0.0, 0.2]),
            row(0, 1, vec![4.0, 0.0]),
            row(1, 1, vec![4.0, 0.2]),
            row(0, -1, vec![100.0, 100.0]),
        ];
        let table = LatentTable {
            latent_dim: 2,
            category_names: vec!["a".into(), "b".into()],
            rows,
        };
        let s = latent_separation(&table).unwrap();
        assert!((s.mean_inter - 4.0).abs() < 1e-12);
        assert!((s.mean_intra - 0.1).abs() < 1e-12);
        assert!((s.ratio - 40.0).abs() < 1e-9);
    }

    #[test]
    fn component_report_checks_pairs() {
        let mut rng = RngStream::new(5);
        let rows: Vec<LatentRow> = (0..30)
            .map(|i| row(i, (i % 3) as i64 - 1, (0..4).map(|_| rng.standard_normal()).collect()))
            .collect();
        let table = LatentTable {
            latent_dim: 4,
            category_names: vec!["a".into(), "b".into()],
            rows,
        };
        let (res, kept) = fit_pca(
            &table,
            &PcaOptions {
                components: 3,
                ..PcaOptions::default()
            },
        )
        .unwrap();
        let rep = component_report(&res, &kept, &[(0, 2), (1, 2)]).unwrap();
        assert_eq!(rep.len(), 2);
        assert_eq!(rep[0].centroids.len(), 3);
        assert!(component_report(&res, &kept, &[(0, 3)]).is_err());
    }

    #[test]
    fn fit_pca_exclusion_modes() {
        let mut rng = RngStream::new(6);
        let rows: Vec<LatentRow> = (0..40)
            .map(|i| row(i, (i % 4) as i64 - 1, (0..5).map(|_| rng.standard_normal()).collect()))
            .collect();
        let table = LatentTable {
            latent_dim: 5,
            category_names: vec!["a".into(), "b".into(), "c".into()],
            rows,
        };
        let opts = PcaOptions {
            components: 2,
            exclude: vec![2],
            recompute: false,
            drop_leading: 1,
        };
        let (fixed, kept) = fit_pca(&table, &opts).unwrap();
        assert_eq!(kept.rows.len(), 30);
        assert_eq!(fixed.n_components(), 2);
        assert_eq!(fixed.projections.shape(), (30, 2));
        let full = pca(&table.to_matrix(), 3).unwrap();
        assert_eq!(fixed.components.row(0), full.components.row(1));
        let (refit, _) = fit_pca(&table, &PcaOptions { recompute: true, ..opts }).unwrap();
        assert_eq!(refit.projections.shape(), (30, 2));
    }

    #[test]
    fn sample_users_is_deterministic_subset() {
        let pool: Vec<u32> = (0..50).collect();
        let a = sample_users(&pool, 10, 7);
        assert_eq!(a, sample_users(&pool, 10, 7));
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(sample_users(&pool, 80, 7).len(), 50);
    }
}
