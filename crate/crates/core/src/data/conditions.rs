use alloc::vec::Vec;

use super::{ConditionVector, InteractionMatrix, ItemConditionMatrix, TrainingExample};

/// Sorted categories covered by at least one of `items`.
pub fn satisfiable_categories(items: &[u32], g: &ItemConditionMatrix) -> Vec<usize> {
    let mut seen = alloc::vec![false; g.n_categories()];
    for &i in items {
        for &c in g.categories_of(i as usize) {
            seen[c as usize] = true;
        }
    }
    seen.iter().enumerate().filter(|(_, &s)| s).map(|(c, _)| c).collect()
}

/// One unconditioned example per user, followed by one example per category
/// the user's history can satisfy.
pub fn expand_conditions(matrix: &InteractionMatrix, g: &ItemConditionMatrix, users: &[u32]) -> Vec<TrainingExample> {
    assert_eq!(matrix.n_items(), g.n_items(), "item count mismatch");
    let s = g.n_categories();
    let mut out = Vec::new();
    for &user in users {
        out.push(TrainingExample {
            user,
            condition: ConditionVector::unconditioned(s),
        });
        for c in satisfiable_categories(matrix.row(user as usize), g) {
            out.push(TrainingExample {
                user,
                condition: ConditionVector::category(s, c).expect("index < s"),
            });
        }
    }
    out
}
