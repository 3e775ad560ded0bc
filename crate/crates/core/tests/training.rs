use cvae_core::adam::{adam_update, AdamConfig, AdamState};
use cvae_core::data::{ConditionVector, InteractionMatrix, ItemConditionMatrix, TrainingExample};
use cvae_core::exec::Sequential;
use cvae_core::model::{backward, forward_loss, Model, ModelConfig, ModelDims, ModelParams, Noise};
use cvae_core::train::{run_phase, two_phase_train, Silent, TrainConfig, TrainData, Validator};
use cvae_core::{Result, RngStream};

/// Always reports a strictly better score so training never stops early.
struct Improving(f64);

impl Validator for Improving {
    fn validate(&mut self, _: &Model) -> Result<f64> {
        self.0 += 1.0;
        Ok(self.0)
    }
}

struct Scripted(Vec<f64>, usize);

impl Validator for Scripted {
    fn validate(&mut self, _: &Model) -> Result<f64> {
        let v = self.0[self.1.min(self.0.len() - 1)];
        self.1 += 1;
        Ok(v)
    }
}

fn one_item_users(n: usize, m: usize) -> InteractionMatrix {
    InteractionMatrix::new(
        (0..n).map(|u| vec![(u * 2) as u32]).collect(),
        (0..n).map(|u| u.to_string()).collect(),
        (0..m).map(|i| i.to_string()).collect(),
    )
    .unwrap()
}

fn dims(m: usize, s: usize) -> ModelDims {
    ModelDims {
        items: m,
        categories: s,
        hidden: 32,
        latent: 8,
    }
}

#[test]
fn overfits_ten_examples_without_kl() {
    // One distinct item per user makes zero NLL attainable; dropout would
    // sometimes erase the only input, so it is off here.
    let matrix = one_item_users(10, 20);
    let examples: Vec<TrainingExample> = (0..10)
        .map(|u| TrainingExample {
            user: u,
            condition: ConditionVector::unconditioned(0),
        })
        .collect();
    let data = TrainData {
        matrix: &matrix,
        g: None,
        examples: &examples,
    };
    let mut mc = ModelConfig::new(dims(20, 0));
    mc.dropout = 0.0;
    let config = TrainConfig {
        batch_size: 10,
        max_epochs: 500,
        anneal_cap: 0.0,
        seed: 1,
        ..TrainConfig::default()
    };
    let out = run_phase(&data, &mc, &config, 1, 0.0, &mut Improving(0.0), &mut Silent, &Sequential, None).unwrap();
    let first = out.reports[0].mean_nll;
    let last = out.reports.last().unwrap().mean_nll;
    assert_eq!(out.reports.len(), 500);
    assert!(last < 0.1 * first, "nll {first} -> {last}");
    assert!(out.beta_trace().iter().all(|&b| b == 0.0));
}

#[test]
fn loss_decreases_on_a_repeated_example() {
    let d = dims(12, 2);
    let mut mc = ModelConfig::new(d);
    mc.dropout = 0.0;
    let mut params = ModelParams::init(d, &mut RngStream::new(4));
    let g = ItemConditionMatrix::new((0..12).map(|i| vec![(i % 2) as u32]).collect(), vec!["a".into(), "b".into()]).unwrap();
    let items = [0u32, 2, 3, 7];
    let c = ConditionVector::category(2, 0).unwrap();
    let eps = vec![0.0; d.latent];
    let mut adam: Vec<AdamState> = params
        .tensors()
        .iter()
        .map(|t| AdamState::new(t.len(), AdamConfig::default()))
        .collect();
    let loss_at = |p: &ModelParams| {
        forward_loss(&items, &c, Some(&g), &mc, p, 0.2, &mut Noise::Fixed(&eps))
            .unwrap()
            .0
            .total
    };
    let start = loss_at(&params);
    for _ in 0..50 {
        let (_, cache) = forward_loss(&items, &c, Some(&g), &mc, &params, 0.2, &mut Noise::Fixed(&eps)).unwrap();
        let grads = backward(&cache, &params);
        for ((p, gr), a) in params.tensors_mut().into_iter().zip(grads.tensors()).zip(adam.iter_mut()) {
            adam_update(p.as_mut_slice(), gr.as_slice(), a).unwrap();
        }
    }
    assert!(loss_at(&params) < start);
}

fn conditioned_fixture() -> (InteractionMatrix, ItemConditionMatrix, Vec<TrainingExample>) {
    let m = 16;
    let rows: Vec<Vec<u32>> = (0..12u32).map(|u| vec![u % 16, (u + 3) % 16, (u + 6) % 16]).collect();
    let matrix = InteractionMatrix::new(
        rows,
        (0..12).map(|u| u.to_string()).collect(),
        (0..m).map(|i| i.to_string()).collect(),
    )
    .unwrap();
    let g = ItemConditionMatrix::new((0..m).map(|i| vec![(i % 3) as u32]).collect(), vec!["x".into(), "y".into(), "z".into()]).unwrap();
    let users: Vec<u32> = (0..12).collect();
    let examples = cvae_core::data::expand_conditions(&matrix, &g, &users);
    (matrix, g, examples)
}

#[test]
fn identical_runs_are_bitwise_identical() {
    let (matrix, g, examples) = conditioned_fixture();
    let data = TrainData {
        matrix: &matrix,
        g: Some(&g),
        examples: &examples,
    };
    let mc = ModelConfig::new(dims(16, 3));
    let config = TrainConfig {
        batch_size: 7,
        max_epochs: 6,
        seed: 12,
        ..TrainConfig::default()
    };
    let run = || {
        run_phase(
            &data,
            &mc,
            &config,
            1,
            1.0,
            &mut Scripted(vec![0.1, 0.3, 0.2, 0.4, 0.4, 0.1], 0),
            &mut Silent,
            &Sequential,
            None,
        )
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert_eq!(a.best.epoch, 4);
}

#[test]
fn best_at_first_step_selects_zero_beta() {
    let (matrix, g, examples) = conditioned_fixture();
    let data = TrainData {
        matrix: &matrix,
        g: Some(&g),
        examples: &examples,
    };
    let mc = ModelConfig::new(dims(16, 3));
    // one batch per epoch: epoch 1's only update runs at step 0
    let config = TrainConfig {
        batch_size: examples.len(),
        max_epochs: 10,
        patience: 2,
        ..TrainConfig::default()
    };
    let mut v = Scripted(vec![0.9, 0.1], 0);
    let out = two_phase_train(&data, &mc, &config, &mut v, &mut Silent, &Sequential).unwrap();
    assert_eq!(out.selected_beta, 0.0);
    assert_eq!(out.phase1.reports.len(), 3);
    assert!(out.phase2.beta_trace().iter().all(|&b| b == 0.0));
    // phase 2 starts from a different initialization
    assert_ne!(out.phase1.model.params, out.phase2.model.params);
}

#[test]
fn missing_category_matrix_is_an_error() {
    let (matrix, _, examples) = conditioned_fixture();
    let data = TrainData {
        matrix: &matrix,
        g: None,
        examples: &examples,
    };
    let mc = ModelConfig::new(dims(16, 3));
    let config = TrainConfig {
        max_epochs: 1,
        ..TrainConfig::default()
    };
    assert!(run_phase(&data, &mc, &config, 1, 1.0, &mut Improving(0.0), &mut Silent, &Sequential, None).is_err());
}
