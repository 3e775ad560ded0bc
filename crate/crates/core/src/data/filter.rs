use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{InteractionMatrix, RawRating};
use crate::error::{Error, Result};

fn intern<'a>(ids: &mut BTreeMap<&'a str, u32>, order: &mut Vec<&'a str>, id: &'a str) -> u32 {
    *ids.entry(id).or_insert_with(|| {
        order.push(id);
        (order.len() - 1) as u32
    })
}

/// Collapses duplicate pairs and repeatedly drops items with fewer than
/// `min_item` users and users with fewer than `min_user` items until nothing
/// changes. Survivors are re-indexed densely in order of first appearance.
pub fn filter_interactions(ratings: &[RawRating], min_user: usize, min_item: usize) -> Result<InteractionMatrix> {
    let mut user_ids = BTreeMap::new();
    let mut item_ids = BTreeMap::new();
    let mut user_order = Vec::new();
    let mut item_order = Vec::new();
    let mut pairs: Vec<(u32, u32)> = ratings
        .iter()
        .map(|r| {
            (
                intern(&mut user_ids, &mut user_order, &r.user_id),
                intern(&mut item_ids, &mut item_order, &r.item_id),
            )
        })
        .collect();
    pairs.sort_unstable();
    pairs.dedup();

    let mut user_alive = vec![true; user_order.len()];
    let mut item_alive = vec![true; item_order.len()];
    loop {
        let mut changed = false;

        let mut item_count = vec![0usize; item_order.len()];
        for &(u, i) in &pairs {
            if user_alive[u as usize] && item_alive[i as usize] {
                item_count[i as usize] += 1;
            }
        }
        for (alive, &count) in item_alive.iter_mut().zip(&item_count) {
            if *alive && count < min_item {
                *alive = false;
                changed = true;
            }
        }

        let mut user_count = vec![0usize; user_order.len()];
        for &(u, i) in &pairs {
            if user_alive[u as usize] && item_alive[i as usize] {
                user_count[u as usize] += 1;
            }
        }
        for (alive, &count) in user_alive.iter_mut().zip(&user_count) {
            if *alive && count < min_user {
                *alive = false;
                changed = true;
            }
        }

        if !changed {
            break;
        }
    }

    // Items without any surviving interaction are dropped too.
    let mut item_used = vec![false; item_order.len()];
    let mut user_used = vec![false; user_order.len()];
    for &(u, i) in &pairs {
        if user_alive[u as usize] && item_alive[i as usize] {
            item_used[i as usize] = true;
            user_used[u as usize] = true;
        }
    }

    let remap = |used: &[bool]| -> Vec<Option<u32>> {
        let mut next = 0u32;
        used.iter()
            .map(|&k| {
                k.then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    };
    let user_map = remap(&user_used);
    let item_map = remap(&item_used);

    let new_users: Vec<String> = user_order
        .iter()
        .zip(&user_used)
        .filter(|(_, &k)| k)
        .map(|(id, _)| String::from(*id))
        .collect();
    let new_items: Vec<String> = item_order
        .iter()
        .zip(&item_used)
        .filter(|(_, &k)| k)
        .map(|(id, _)| String::from(*id))
        .collect();
    if new_users.is_empty() {
        return Err(Error::EmptyAfterFiltering);
    }

    let mut rows = vec![Vec::new(); new_users.len()];
    for &(u, i) in &pairs {
        if let (Some(nu), Some(ni)) = (user_map[u as usize], item_map[i as usize]) {
            rows[nu as usize].push(ni);
        }
    }
    InteractionMatrix::new(rows, new_users, new_items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;
    use proptest::prelude::*;

    fn rating(u: &str, i: &str) -> RawRating {
        RawRating {
            user_id: u.to_string(),
            item_id: i.to_string(),
            value: 5.0,
            timestamp: None,
        }
    }

    #[test]
    fn single_sparse_user_is_eliminated() {
        let r = vec![rating("u1", "i1")];
        assert_eq!(filter_interactions(&r, 4, 1), Err(Error::EmptyAfterFiltering));
    }

    #[test]
    fn identity_thresholds_only_reindex() {
        let r = vec![rating("b", "y"), rating("a", "x"), rating("b", "x"), rating("b", "y")];
        let m = filter_interactions(&r, 1, 1).unwrap();
        assert_eq!(m.user_ids(), &["b".to_string(), "a".to_string()]);
        assert_eq!(m.item_ids(), &["y".to_string(), "x".to_string()]);
        assert_eq!(m.row(0), &[0, 1]);
        assert_eq!(m.row(1), &[1]);
        assert_eq!(m.nnz(), 3);
    }

    #[test]
    fn three_users_two_survive() {
        // Hand trace: item pass removes nothing (min_item = 1); user pass
        // removes the 2-item user; second iteration changes nothing.
        let mut r = Vec::new();
        for i in 0..5 {
            r.push(rating("u0", &format!("a{i}")));
            r.push(rating("u1", &format!("b{i}")));
        }
        r.push(rating("u2", "c0"));
        r.push(rating("u2", "c1"));
        let m = filter_interactions(&r, 4, 1).unwrap();
        assert_eq!(m.n_users(), 2);
        assert_eq!(m.n_items(), 10);
    }

    #[test]
    fn cascade_reaches_fixed_point() {
        // Removing item z (1 user) drops u2 below 2 items, which then drops y.
        let r = vec![
            rating("u0", "x"),
            rating("u0", "w"),
            rating("u1", "x"),
            rating("u1", "w"),
            rating("u2", "y"),
            rating("u2", "z"),
            rating("u3", "y"),
        ];
        let m = filter_interactions(&r, 2, 2).unwrap();
        assert_eq!(m.n_users(), 2);
        assert_eq!(m.item_ids(), &["x".to_string(), "w".to_string()]);
    }

    fn to_ratings(m: &InteractionMatrix) -> Vec<RawRating> {
        let mut out = Vec::new();
        for (u, row) in m.rows().iter().enumerate() {
            for &i in row {
                out.push(rating(&m.user_ids()[u], &m.item_ids()[i as usize]));
            }
        }
        out
    }

    proptest! {
        #[test]
        fn filtering_is_idempotent(
            pairs in proptest::collection::vec((0u8..12, 0u8..15), 1..150),
            min_user in 1usize..4,
            min_item in 1usize..4,
        ) {
            let r: Vec<RawRating> = pairs
                .iter()
                .map(|(u, i)| rating(&format!("u{u}"), &format!("i{i}")))
                .collect();
            if let Ok(once) = filter_interactions(&r, min_user, min_item) {
                let twice = filter_interactions(&to_ratings(&once), min_user, min_item).unwrap();
                // Equal up to re-indexing: compare the external id pairs.
                let id_pairs = |m: &InteractionMatrix| {
                    let mut v: Vec<(String, String)> = to_ratings(m)
                        .into_iter()
                        .map(|r| (r.user_id, r.item_id))
                        .collect();
                    v.sort();
                    v
                };
                prop_assert_eq!(id_pairs(&once), id_pairs(&twice));
                for row in once.rows() {
                    prop_assert!(row.len() >= min_user);
                }
            }
        }
    }
}
