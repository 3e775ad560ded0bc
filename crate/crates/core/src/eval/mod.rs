//! Ranking construction and metrics under the total / normal / conditioned
//! protocols.
//!
//! A *case* is one (user, condition) pair with a held-out target. Normal
//! cases are unconditioned and target the whole held-out set; conditioned
//! cases exist for every category the held-out set covers and target only
//! the held-out items of that category. The total protocol is the union.
//!
//! Two ranking modes are supported: [`RankingMode::Full`] ranks every item
//! not in the fold-in history (how the conditioned model is used), and
//! [`RankingMode::Filtered`] ranks only items that satisfy the condition
//! (the post-hoc filtered baseline).

mod metrics;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::data::{ConditionVector, HeldoutUser, ItemConditionMatrix};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::model::Model;

pub use metrics::{ndcg_at_k, recall_at_k};

/// Anything that scores the whole catalogue for a history and a condition.
pub trait Scorer: Sync {
    fn n_items(&self) -> usize;

    fn scores(&self, user: u32, history: &[u32], c: &ConditionVector) -> Result<Vec<f64>>;
}

impl Scorer for Model {
    fn n_items(&self) -> usize {
        self.dims().items
    }

    fn scores(&self, _user: u32, history: &[u32], c: &ConditionVector) -> Result<Vec<f64>> {
        self.predict_scores(history, c)
    }
}

/// Upper-bound scorer that knows every user's held-out items: held-out
/// items of the requested category score 2, other held-out items 1, the
/// rest 0.
pub struct HeldoutOracle<'a> {
    heldout: BTreeMap<u32, &'a [u32]>,
    g: &'a ItemConditionMatrix,
}

impl<'a> HeldoutOracle<'a> {
    pub fn new(users: &'a [HeldoutUser], g: &'a ItemConditionMatrix) -> Self {
        Self {
            heldout: users.iter().map(|u| (u.user, u.heldout.as_slice())).collect(),
            g,
        }
    }
}

impl Scorer for HeldoutOracle<'_> {
    fn n_items(&self) -> usize {
        self.g.n_items()
    }

    fn scores(&self, user: u32, _history: &[u32], c: &ConditionVector) -> Result<Vec<f64>> {
        let mut s = alloc::vec![0.0; self.n_items()];
        for &i in self.heldout.get(&user).copied().unwrap_or(&[]) {
            let boost = c.active().is_some_and(|j| self.g.contains(i as usize, j));
            s[i as usize] = if boost { 2.0 } else { 1.0 };
        }
        Ok(s)
    }
}

/// Ordered candidates for one case.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    pub user: u32,
    pub condition: ConditionVector,
    pub item_order: Vec<u32>,
    pub scores: Vec<f64>,
    pub excluded: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankingMode {
    Full,
    Filtered,
}

/// Sorts candidates by descending score, ties by ascending item index.
fn rank_candidates(candidates: Vec<u32>, scores: &[f64]) -> (Vec<u32>, Vec<f64>) {
    let mut order = candidates;
    order.sort_by(|&a, &b| {
        scores[b as usize]
            .total_cmp(&scores[a as usize])
            .then_with(|| a.cmp(&b))
    });
    let s = order.iter().map(|&i| scores[i as usize]).collect();
    (order, s)
}

fn in_sorted(sorted: &[u32], item: u32) -> bool {
    sorted.binary_search(&item).is_ok()
}

fn sorted_copy(items: &[u32]) -> Vec<u32> {
    let mut v = items.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Ranks every item outside the fold-in history.
pub fn rank_cvae<S: Scorer + ?Sized>(scorer: &S, user: u32, foldin: &[u32], c: &ConditionVector) -> Result<RankedList> {
    let scores = scorer.scores(user, foldin, c)?;
    let excluded = sorted_copy(foldin);
    let candidates = (0..scorer.n_items() as u32).filter(|&i| !in_sorted(&excluded, i)).collect();
    let (item_order, scores) = rank_candidates(candidates, &scores);
    Ok(RankedList {
        user,
        condition: *c,
        item_order,
        scores,
        excluded,
    })
}

/// Ranks only items satisfying `c` (all items when unconditioned) with the
/// scorer's unconditioned output.
pub fn rank_filtered_baseline<S: Scorer + ?Sized>(
    scorer: &S,
    user: u32,
    foldin: &[u32],
    c: &ConditionVector,
    g: &ItemConditionMatrix,
) -> Result<RankedList> {
    let scores = scorer.scores(user, foldin, &ConditionVector::unconditioned(c.dim()))?;
    let excluded = sorted_copy(foldin);
    let candidates: Vec<u32> = match c.active() {
        Some(j) => g
            .items_in(j)
            .iter()
            .copied()
            .filter(|&i| !in_sorted(&excluded, i))
            .collect(),
        None => (0..scorer.n_items() as u32).filter(|&i| !in_sorted(&excluded, i)).collect(),
    };
    let (item_order, scores) = rank_candidates(candidates, &scores);
    Ok(RankedList {
        user,
        condition: *c,
        item_order,
        scores,
        excluded,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProtocolKind {
    Total,
    Normal,
    Conditioned,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [ProtocolKind::Total, ProtocolKind::Normal, ProtocolKind::Conditioned];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Total => "total",
            ProtocolKind::Normal => "normal",
            ProtocolKind::Conditioned => "conditioned",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalProtocol {
    pub kind: ProtocolKind,
    pub ks_recall: Vec<usize>,
    pub ks_ndcg: Vec<usize>,
}

impl EvalProtocol {
    pub fn new(kind: ProtocolKind) -> Self {
        Self {
            kind,
            ks_recall: alloc::vec![20, 50],
            ks_ndcg: alloc::vec![100],
        }
    }

    fn metrics(&self) -> Vec<(MetricKind, usize)> {
        let mut v: Vec<(MetricKind, usize)> = self.ks_recall.iter().map(|&k| (MetricKind::Recall, k)).collect();
        v.extend(self.ks_ndcg.iter().map(|&k| (MetricKind::Ndcg, k)));
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricKind {
    Recall,
    Ndcg,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Recall => "recall",
            MetricKind::Ndcg => "ndcg",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricSummary {
    pub metric: MetricKind,
    pub k: usize,
    pub mean: f64,
    pub std_err: f64,
    pub n_cases: usize,
}

/// One (user, condition, target) evaluation case.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalCase<'a> {
    pub user: u32,
    pub foldin: &'a [u32],
    pub condition: ConditionVector,
    pub target: Vec<u32>,
}

/// Enumerates cases per user: the normal case first, then one conditioned
/// case per category present in the held-out set (ascending).
pub fn build_cases<'a>(users: &'a [HeldoutUser], g: &ItemConditionMatrix, kind: ProtocolKind) -> Vec<EvalCase<'a>> {
    let s = g.n_categories();
    let mut out = Vec::new();
    for u in users {
        if kind != ProtocolKind::Conditioned {
            out.push(EvalCase {
                user: u.user,
                foldin: &u.foldin,
                condition: ConditionVector::unconditioned(s),
                target: u.heldout.clone(),
            });
        }
        if kind != ProtocolKind::Normal {
            for j in crate::data::satisfiable_categories(&u.heldout, g) {
                out.push(EvalCase {
                    user: u.user,
                    foldin: &u.foldin,
                    condition: ConditionVector::category(s, j).expect("j < s"),
                    target: u.heldout.iter().copied().filter(|&i| g.contains(i as usize, j)).collect(),
                });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseResult {
    pub user: u32,
    pub condition: ConditionVector,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub protocol: ProtocolKind,
    pub mode: RankingMode,
    pub summaries: Vec<MetricSummary>,
    pub cases: Vec<CaseResult>,
    /// Cases dropped because no item satisfied the condition (filtered mode).
    pub skipped: usize,
}

impl EvalReport {
    pub fn get(&self, metric: MetricKind, k: usize) -> Option<&MetricSummary> {
        self.summaries.iter().find(|s| s.metric == metric && s.k == k)
    }
}

/// Mean and standard error (`sample std / √n`, zero for a single value).
pub fn mean_and_std_err(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, libm::sqrt(var) / libm::sqrt(n as f64))
}

/// Ranks every case and reports mean ± standard error per metric.
pub fn evaluate<S: Scorer + ?Sized, E: Executor>(
    scorer: &S,
    mode: RankingMode,
    users: &[HeldoutUser],
    g: &ItemConditionMatrix,
    protocol: &EvalProtocol,
    exec: &E,
) -> Result<EvalReport> {
    let cases = build_cases(users, g, protocol.kind);
    if cases.is_empty() {
        return Err(Error::NoCases);
    }
    let metrics = protocol.metrics();
    let per_case: Vec<Result<Option<CaseResult>>> = exec.map(cases.len(), |idx| {
        let case = &cases[idx];
        let ranked = match mode {
            RankingMode::Full => rank_cvae(scorer, case.user, case.foldin, &case.condition)?,
            RankingMode::Filtered => rank_filtered_baseline(scorer, case.user, case.foldin, &case.condition, g)?,
        };
        if ranked.item_order.is_empty() {
            return Ok(None);
        }
        let values = metrics
            .iter()
            .map(|&(m, k)| match m {
                MetricKind::Recall => recall_at_k(&ranked.item_order, &case.target, k),
                MetricKind::Ndcg => ndcg_at_k(&ranked.item_order, &case.target, k),
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Some(CaseResult {
            user: case.user,
            condition: case.condition,
            values,
        }))
    });
    let mut results = Vec::with_capacity(per_case.len());
    let mut skipped = 0;
    for r in per_case {
        match r? {
            Some(c) => results.push(c),
            None => skipped += 1,
        }
    }
    if results.is_empty() {
        return Err(Error::NoCases);
    }
    let summaries = metrics
        .iter()
        .enumerate()
        .map(|(mi, &(metric, k))| {
            let vals: Vec<f64> = results.iter().map(|c| c.values[mi]).collect();
            let (mean, std_err) = mean_and_std_err(&vals);
            MetricSummary {
                metric,
                k,
                mean,
                std_err,
                n_cases: vals.len(),
            }
        })
        .collect();
    Ok(EvalReport {
        protocol: protocol.kind,
        mode,
        summaries,
        cases: results,
        skipped,
    })
}

/// Mean nDCG@k under `kind`, as used for model selection.
pub fn mean_ndcg<S: Scorer + ?Sized, E: Executor>(
    scorer: &S,
    mode: RankingMode,
    users: &[HeldoutUser],
    g: &ItemConditionMatrix,
    kind: ProtocolKind,
    k: usize,
    exec: &E,
) -> Result<f64> {
    let protocol = EvalProtocol {
        kind,
        ks_recall: Vec::new(),
        ks_ndcg: alloc::vec![k],
    };
    let report = evaluate(scorer, mode, users, g, &protocol, exec)?;
    Ok(report.summaries[0].mean)
}

/// Top-`n` unseen items with their scores, best first.
pub fn recommend<S: Scorer + ?Sized>(scorer: &S, history: &[u32], c: &ConditionVector, n: usize) -> Result<Vec<(u32, f64)>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let ranked = rank_cvae(scorer, u32::MAX, history, c)?;
    Ok(ranked
        .item_order
        .into_iter()
        .zip(ranked.scores)
        .take(n)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use alloc::string::String;
    use alloc::vec;

    struct Fixed(Vec<f64>);

    impl Scorer for Fixed {
        fn n_items(&self) -> usize {
            self.0.len()
        }
        fn scores(&self, _: u32, _: &[u32], _: &ConditionVector) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    fn g() -> ItemConditionMatrix {
        // 6 items, categories A = {0, 2, 4}, B = {1, 4, 5}, item 3 uncategorized.
        ItemConditionMatrix::new(
            vec![vec![0], vec![1], vec![0], vec![], vec![0, 1], vec![1]],
            vec![String::from("A"), String::from("B")],
        )
        .unwrap()
    }

    #[test]
    fn full_ranking_excludes_foldin_and_breaks_ties() {
        let s = Fixed(vec![0.5, 0.9, 0.5, 0.1, 0.9, 0.0]);
        let r = rank_cvae(&s, 0, &[1], &ConditionVector::unconditioned(2)).unwrap();
        assert_eq!(r.item_order, vec![4, 0, 2, 3, 5]);
        assert_eq!(r.excluded, vec![1]);
        assert_eq!(r, rank_cvae(&s, 0, &[1], &ConditionVector::unconditioned(2)).unwrap());
    }

    #[test]
    fn filtered_ranking_keeps_only_category_items() {
        let s = Fixed(vec![0.5, 0.9, 0.5, 0.1, 0.9, 0.0]);
        let g = g();
        let c = ConditionVector::category(2, 1).unwrap();
        let r = rank_filtered_baseline(&s, 0, &[5], &c, &g).unwrap();
        assert_eq!(r.item_order, vec![1, 4]);
        assert!(r.item_order.iter().all(|&i| g.contains(i as usize, 1)));
        let all = rank_filtered_baseline(&s, 0, &[5], &ConditionVector::unconditioned(2), &g).unwrap();
        let full = rank_cvae(&s, 0, &[5], &ConditionVector::unconditioned(2)).unwrap();
        assert_eq!(all.item_order, full.item_order);
    }

    #[test]
    fn case_enumeration() {
        let g = g();
        let users = vec![HeldoutUser {
            user: 7,
            foldin: vec![3],
            heldout: vec![0, 5],
        }];
        let total = build_cases(&users, &g, ProtocolKind::Total);
        assert_eq!(total.len(), 3);
        assert_eq!(total[1].target, vec![0]);
        assert_eq!(total[2].target, vec![5]);
        assert_eq!(build_cases(&users, &g, ProtocolKind::Normal).len(), 1);
        assert_eq!(build_cases(&users, &g, ProtocolKind::Conditioned).len(), 2);
    }

    #[test]
    fn oracle_scores_perfectly() {
        let g = g();
        let users = vec![
            HeldoutUser {
                user: 0,
                foldin: vec![3],
                heldout: vec![0, 1, 4],
            },
            HeldoutUser {
                user: 1,
                foldin: vec![0, 1],
                heldout: vec![2],
            },
            HeldoutUser {
                user: 2,
                foldin: vec![2],
                heldout: vec![3, 5],
            },
        ];
        let oracle = HeldoutOracle::new(&users, &g);
        for kind in ProtocolKind::ALL {
            for mode in [RankingMode::Full, RankingMode::Filtered] {
                let protocol = EvalProtocol {
                    kind,
                    ks_recall: vec![1, 2, 20],
                    ks_ndcg: vec![1, 3, 100],
                };
                let rep = evaluate(&oracle, mode, &users, &g, &protocol, &Sequential).unwrap();
                for s in &rep.summaries {
                    // Filtered + normal ignores the category boost, still perfect.
                    assert!((s.mean - 1.0).abs() < 1e-12, "{kind:?} {mode:?} {s:?}");
                }
            }
        }
    }

    #[test]
    fn std_err_two_pass() {
        let v = [0.2, 0.4, 0.9, 0.1];
        let (mean, se) = mean_and_std_err(&v);
        let m = 0.4;
        let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
        assert!((mean - m).abs() < 1e-15);
        assert!((se - libm::sqrt(ss / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(mean_and_std_err(&[0.3]), (0.3, 0.0));
    }

    #[test]
    fn recommend_contract() {
        let s = Fixed(vec![0.5, 0.9, 0.5, 0.1, 0.9, 0.0]);
        let c = ConditionVector::unconditioned(0);
        assert!(recommend(&s, &[1], &c, 0).unwrap().is_empty());
        let top = recommend(&s, &[1], &c, 3).unwrap();
        assert_eq!(top.iter().map(|t| t.0).collect::<Vec<_>>(), vec![4, 0, 2]);
        assert!(top.windows(2).all(|w| w[0].1 >= w[1].1));
        assert_eq!(recommend(&s, &[1], &c, 100).unwrap().len(), 5);
    }

    #[test]
    fn empty_case_set_is_an_error() {
        let g = g();
        let users = vec![HeldoutUser {
            user: 0,
            foldin: vec![0],
            heldout: vec![3],
        }];
        let protocol = EvalProtocol::new(ProtocolKind::Conditioned);
        let s = Fixed(vec![0.0; 6]);
        assert_eq!(
            evaluate(&s, RankingMode::Full, &users, &g, &protocol, &Sequential),
            Err(Error::NoCases)
        );
    }
}
