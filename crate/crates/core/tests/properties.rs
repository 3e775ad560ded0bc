use cvae_core::analyze::pca;
use cvae_core::data::{ConditionVector, HeldoutUser, ItemConditionMatrix};
use cvae_core::eval::{evaluate, ndcg_at_k, recall_at_k, EvalProtocol, HeldoutOracle, ProtocolKind, RankingMode};
use cvae_core::exec::Sequential;
use cvae_core::model::{forward_loss, ModelConfig, ModelDims, ModelParams, Noise};
use cvae_core::{Matrix, RngStream};
use proptest::prelude::*;

fn ranking_and_heldout() -> impl Strategy<Value = (Vec<u32>, Vec<u32>, usize)> {
    (2usize..30).prop_flat_map(|n| {
        (
            Just((0..n as u32).collect::<Vec<_>>()).prop_shuffle(),
            proptest::collection::btree_set(0..n as u32, 1..=n),
            1..=n + 3,
        )
            .prop_map(|(r, h, k)| (r, h.into_iter().collect(), k))
    })
}

proptest! {
    #[test]
    fn metrics_are_bounded((ranking, heldout, k) in ranking_and_heldout()) {
        let r = recall_at_k(&ranking, &heldout, k).unwrap();
        let n = ndcg_at_k(&ranking, &heldout, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
    }

    #[test]
    fn hits_moved_to_the_front_score_one((ranking, heldout, k) in ranking_and_heldout()) {
        let mut front = heldout.clone();
        front.extend(ranking.iter().filter(|i| !heldout.contains(i)));
        prop_assert_eq!(recall_at_k(&front, &heldout, k).unwrap(), 1.0);
        prop_assert!((ndcg_at_k(&front, &heldout, k).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pca_invariants(n in 6usize..30, d in 2usize..6, seed in 0u64..1000) {
        let mut rng = RngStream::new(seed);
        let mut data = Matrix::zeros(n, d);
        for v in data.as_mut_slice() {
            *v = rng.standard_normal();
        }
        let r = pca(&data, d).unwrap();
        let q = r.n_components();
        let gram = r.components.matmul_nt(&r.components).unwrap();
        for i in 0..q {
            for j in 0..q {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((gram[(i, j)] - want).abs() <= 1e-8);
            }
        }
        prop_assert!(r.explained_variance.windows(2).all(|w| w[0] >= w[1] - 1e-12));
        if q == d {
            let back = r.projections.matmul(&r.components).unwrap();
            for row in 0..n {
                for c in 0..d {
                    prop_assert!((back[(row, c)] + r.mean[c] - data[(row, c)]).abs() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn total_loss_is_nll_plus_weighted_kl(seed in 0u64..500, beta in 0.0f64..1.0) {
        let dims = ModelDims { items: 8, categories: 2, hidden: 4, latent: 3 };
        let params = ModelParams::init(dims, &mut RngStream::new(seed));
        let g = ItemConditionMatrix::new((0..8).map(|i| vec![(i % 2) as u32]).collect(), vec!["a".into(), "b".into()]).unwrap();
        let mut rng = RngStream::new(seed + 1);
        let (loss, _) = forward_loss(&[0, 1, 4], &ConditionVector::category(2, 0).unwrap(), Some(&g),
            &ModelConfig::new(dims), &params, beta, &mut Noise::Sampled(&mut rng)).unwrap();
        prop_assert!(loss.kl >= 0.0);
        prop_assert!(loss.neg_ll >= 0.0);
        prop_assert!((loss.total - (loss.neg_ll + beta * loss.kl)).abs() < 1e-12);
    }
}

#[test]
fn oracle_scorer_is_perfect_under_every_protocol() {
    let g = ItemConditionMatrix::new((0..30).map(|i| vec![(i % 3) as u32]).collect(), vec!["a".into(), "b".into(), "c".into()]).unwrap();
    let users: Vec<HeldoutUser> = (0..5u32)
        .map(|u| HeldoutUser {
            user: u,
            foldin: vec![u, u + 10],
            heldout: vec![u + 1, u + 2, u + 14],
        })
        .collect();
    let oracle = HeldoutOracle::new(&users, &g);
    for kind in ProtocolKind::ALL {
        for mode in [RankingMode::Full, RankingMode::Filtered] {
            let report = evaluate(&oracle, mode, &users, &g, &EvalProtocol::new(kind), &Sequential).unwrap();
            for s in &report.summaries {
                assert!((s.mean - 1.0).abs() < 1e-12, "{kind} {mode:?} {:?}@{}", s.metric, s.k);
            }
        }
    }
}
