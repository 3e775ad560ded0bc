//! Mini-batch training with linear KL annealing, validation-driven early
//! stopping and the two-phase β selection protocol.
//!
//! Phase 1 anneals β linearly from 0 towards 1.0 over the planned number
//! of steps and records the β in effect at the epoch with the best
//! validation nDCG. Phase 2 re-initializes the network and anneals towards
//! that β instead; its best epoch is the final model.
//!
//! Every random draw is a pure function of `(seed, phase, epoch, example)`,
//! so a phase can be resumed from a [`PhaseState`] snapshot and reproduces
//! the uninterrupted run bit for bit.

use alloc::vec::Vec;

use crate::adam::{adam_update, AdamConfig, AdamState};
use crate::data::{HeldoutUser, InteractionMatrix, ItemConditionMatrix, TrainingExample};
use crate::error::{Error, Result};
use crate::eval::{mean_ndcg, ProtocolKind, RankingMode};
use crate::exec::{chunk_ranges, Executor};
use crate::model::{accumulate_backward, forward_loss, Model, ModelConfig, ModelParams, Noise};
use crate::rng::{purpose, RngStream};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub adam: AdamConfig,
    /// Cap for a single-phase run; two-phase training overrides it.
    pub anneal_cap: f64,
    /// Steps to reach the cap; `None` means every planned step
    /// (`max_epochs × batches per epoch`).
    pub anneal_total_steps: Option<u64>,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 500,
            max_epochs: 100,
            adam: AdamConfig::default(),
            anneal_cap: 1.0,
            anneal_total_steps: None,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.anneal_cap) {
            return Err(Error::InvalidConfig(alloc::format!(
                "anneal cap {} outside [0, 1]",
                self.anneal_cap
            )));
        }
        if self.patience == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidConfig(
                "patience, batch size and max epochs must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn batches_per_epoch(&self, n_examples: usize) -> u64 {
        n_examples.div_ceil(self.batch_size) as u64
    }

    pub fn total_anneal_steps(&self, n_examples: usize) -> u64 {
        self.anneal_total_steps
            .unwrap_or(self.max_epochs as u64 * self.batches_per_epoch(n_examples))
    }
}

/// `cap · min(1, step / total)`.
pub fn anneal_beta(global_step: u64, cap: f64, total_steps: u64) -> f64 {
    if total_steps == 0 {
        return cap;
    }
    cap * (global_step as f64 / total_steps as f64).min(1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub mean_nll: f64,
    pub mean_kl: f64,
    /// β of the epoch's last update.
    pub current_beta: f64,
    pub val_ndcg: f64,
    pub wall_time: f64,
}

/// Training inputs. `g` is required whenever `examples` contains
/// conditioned examples.
#[derive(Clone, Copy)]
pub struct TrainData<'a> {
    pub matrix: &'a InteractionMatrix,
    pub g: Option<&'a ItemConditionMatrix>,
    pub examples: &'a [TrainingExample],
}

/// Scores a model after every epoch; higher is better.
pub trait Validator {
    fn validate(&mut self, model: &Model) -> Result<f64>;
}

/// Mean nDCG@k over held-out users.
pub struct NdcgValidator<'a, E: Executor> {
    pub users: &'a [HeldoutUser],
    pub g: &'a ItemConditionMatrix,
    pub kind: ProtocolKind,
    pub mode: RankingMode,
    pub k: usize,
    pub exec: &'a E,
}

impl<E: Executor> Validator for NdcgValidator<'_, E> {
    fn validate(&mut self, model: &Model) -> Result<f64> {
        mean_ndcg(model, self.mode, self.users, self.g, self.kind, self.k, self.exec)
    }
}

/// Hooks for progress reporting and persistence.
pub trait TrainObserver {
    /// Called after each epoch with the resumable state.
    fn on_epoch(&mut self, _state: &PhaseState) -> Result<()> {
        Ok(())
    }

    /// Seconds from an arbitrary origin, if a clock is available.
    fn now(&self) -> Option<f64> {
        None
    }
}

/// Observer that does nothing.
pub struct Silent;

impl TrainObserver for Silent {}

#[derive(Clone, Debug, PartialEq)]
pub struct BestSnapshot {
    pub params: ModelParams,
    pub score: f64,
    pub epoch: usize,
    pub beta: f64,
}

/// Everything needed to continue a phase after its last completed epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseState {
    pub phase: u32,
    pub cap: f64,
    pub epochs_done: usize,
    pub global_step: u64,
    pub model: Model,
    pub adam: Vec<AdamState>,
    pub best: Option<BestSnapshot>,
    pub bad_epochs: usize,
    pub reports: Vec<EpochReport>,
    pub stopped_early: bool,
}

impl PhaseState {
    pub fn fresh(phase: u32, cap: f64, model_config: &ModelConfig, config: &TrainConfig) -> Self {
        let mut rng = RngStream::derived(config.seed, &[purpose::INIT, phase as u64]);
        let params = ModelParams::init(model_config.dims, &mut rng);
        let adam = params
            .tensors()
            .iter()
            .map(|t| AdamState::new(t.len(), config.adam))
            .collect();
        Self {
            phase,
            cap,
            epochs_done: 0,
            global_step: 0,
            model: Model {
                config: *model_config,
                params,
            },
            adam,
            best: None,
            bad_epochs: 0,
            reports: Vec::new(),
            stopped_early: false,
        }
    }

    pub fn is_finished(&self, config: &TrainConfig) -> bool {
        self.stopped_early || self.epochs_done >= config.max_epochs
    }

    pub fn beta_trace(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.current_beta).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseOutcome {
    pub best: BestSnapshot,
    pub model: Model,
    pub reports: Vec<EpochReport>,
    pub stopped_early: bool,
}

impl PhaseOutcome {
    pub fn beta_trace(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.current_beta).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct LossSums {
    total: f64,
    nll: f64,
    kl: f64,
}

impl LossSums {
    fn add(&mut self, other: LossSums) {
        self.total += other.total;
        self.nll += other.nll;
        self.kl += other.kl;
    }
}

fn example_stream(seed: u64, phase: u32, epoch: usize, example: usize) -> RngStream {
    RngStream::derived(seed, &[purpose::EXAMPLE, phase as u64, epoch as u64, example as u64])
}

/// Mean gradient over a batch of example indices. Chunks (one per unit of
/// executor parallelism) accumulate sequentially and are summed in order.
#[allow(clippy::too_many_arguments)]
fn batch_gradient<E: Executor>(
    model: &Model,
    data: &TrainData,
    batch: &[usize],
    beta: f64,
    seed: u64,
    phase: u32,
    epoch: usize,
    exec: &E,
) -> Result<(ModelParams, LossSums)> {
    let scale = 1.0 / batch.len() as f64;
    let ranges = chunk_ranges(batch.len(), exec.parallelism());
    let partials = exec.map(ranges.len(), |ci| -> Result<(ModelParams, LossSums)> {
        let mut grads = ModelParams::zeros(model.params.dims);
        let mut sums = LossSums::default();
        for &idx in &batch[ranges[ci].clone()] {
            let ex = &data.examples[idx];
            let mut rng = example_stream(seed, phase, epoch, idx);
            let (loss, cache) = forward_loss(
                data.matrix.row(ex.user as usize),
                &ex.condition,
                data.g,
                &model.config,
                &model.params,
                beta,
                &mut Noise::Sampled(&mut rng),
            )?;
            accumulate_backward(&cache, &model.params, &mut grads, scale);
            sums.add(LossSums {
                total: loss.total,
                nll: loss.neg_ll,
                kl: loss.kl,
            });
        }
        Ok((grads, sums))
    });
    let mut iter = partials.into_iter();
    let (mut grads, mut sums) = iter.next().expect("at least one chunk")?;
    for p in iter {
        let (g, s) = p?;
        grads.add_scaled(&g, 1.0);
        sums.add(s);
    }
    Ok((grads, sums))
}

fn check_data(data: &TrainData, model_config: &ModelConfig) -> Result<()> {
    if data.examples.is_empty() {
        return Err(Error::InvalidConfig("no training examples".into()));
    }
    if data.matrix.n_items() != model_config.dims.items {
        return Err(Error::DimensionMismatch {
            op: "train",
            left: (model_config.dims.items, model_config.dims.categories),
            right: (data.matrix.n_items(), data.g.map_or(0, |g| g.n_categories())),
        });
    }
    Ok(())
}

/// Runs (or resumes) one annealing phase until early stopping or
/// `max_epochs`, returning the best-validation model.
#[allow(clippy::too_many_arguments)]
pub fn run_phase<V: Validator, O: TrainObserver, E: Executor>(
    data: &TrainData,
    model_config: &ModelConfig,
    config: &TrainConfig,
    phase: u32,
    cap: f64,
    validator: &mut V,
    observer: &mut O,
    exec: &E,
    resume: Option<PhaseState>,
) -> Result<PhaseOutcome> {
    config.validate()?;
    check_data(data, model_config)?;
    let mut state = match resume {
        Some(s) if s.phase == phase => s,
        Some(s) => {
            return Err(Error::InvalidConfig(alloc::format!(
                "resume state is for phase {}, not {phase}",
                s.phase
            )))
        }
        None => PhaseState::fresh(phase, cap, model_config, config),
    };
    let n = data.examples.len();
    let total_steps = config.total_anneal_steps(n);

    while !state.is_finished(config) {
        let epoch = state.epochs_done;
        let started = observer.now();
        let mut order: Vec<usize> = (0..n).collect();
        RngStream::derived(config.seed, &[purpose::SHUFFLE, phase as u64, epoch as u64]).shuffle(&mut order);

        let mut sums = LossSums::default();
        let mut beta = anneal_beta(state.global_step, state.cap, total_steps);
        for batch in order.chunks(config.batch_size) {
            beta = anneal_beta(state.global_step, state.cap, total_steps);
            let (grads, batch_sums) = batch_gradient(&state.model, data, batch, beta, config.seed, phase, epoch, exec)
                .map_err(|e| match e {
                    Error::NonFinite(what) => Error::Diverged {
                        epoch: epoch + 1,
                        step: state.global_step,
                        what,
                    },
                    other => other,
                })?;
            if !batch_sums.total.is_finite() {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    step: state.global_step,
                    what: "loss",
                });
            }
            for ((p, g), a) in state
                .model
                .params
                .tensors_mut()
                .into_iter()
                .zip(grads.tensors())
                .zip(state.adam.iter_mut())
            {
                adam_update(p.as_mut_slice(), g.as_slice(), a).map_err(|_| Error::Diverged {
                    epoch: epoch + 1,
                    step: state.global_step,
                    what: "gradient",
                })?;
            }
            state.global_step += 1;
            sums.add(batch_sums);
        }

        let score = validator.validate(&state.model)?;
        let improved = state.best.as_ref().is_none_or(|b| score > b.score);
        if improved {
            state.best = Some(BestSnapshot {
                params: state.model.params.clone(),
                score,
                epoch: epoch + 1,
                beta,
            });
            state.bad_epochs = 0;
        } else {
            state.bad_epochs += 1;
        }
        let wall_time = match (started, observer.now()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        };
        state.reports.push(EpochReport {
            epoch: epoch + 1,
            mean_train_loss: sums.total / n as f64,
            mean_nll: sums.nll / n as f64,
            mean_kl: sums.kl / n as f64,
            current_beta: beta,
            val_ndcg: score,
            wall_time,
        });
        state.epochs_done += 1;
        if state.bad_epochs >= config.patience {
            state.stopped_early = true;
        }
        observer.on_epoch(&state)?;
    }

    let best = state.best.clone().expect("at least one epoch ran");
    Ok(PhaseOutcome {
        model: Model {
            config: *model_config,
            params: best.params.clone(),
        },
        best,
        reports: state.reports,
        stopped_early: state.stopped_early,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoPhaseOutcome {
    pub phase1: PhaseOutcome,
    pub selected_beta: f64,
    pub phase2: PhaseOutcome,
}

/// Phase 1 with cap 1.0 selects β*; phase 2 retrains from a fresh
/// initialization with cap β*.
pub fn two_phase_train<V: Validator, O: TrainObserver, E: Executor>(
    data: &TrainData,
    model_config: &ModelConfig,
    config: &TrainConfig,
    validator: &mut V,
    observer: &mut O,
    exec: &E,
) -> Result<TwoPhaseOutcome> {
    let phase1 = run_phase(data, model_config, config, 1, 1.0, validator, observer, exec, None)?;
    let selected_beta = phase1.best.beta;
    let phase2 = run_phase(data, model_config, config, 2, selected_beta, validator, observer, exec, None)?;
    Ok(TwoPhaseOutcome {
        phase1,
        selected_beta,
        phase2,
    })
}
