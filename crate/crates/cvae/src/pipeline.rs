//! The command implementations behind the CLI. Each command reads from and
//! writes to a fixed layout under the artifact root:
//!
//! ```text
//! <root>/split/            preprocess
//! <root>/train/            train (conditioned model)
//! <root>/train_baseline/   train --baseline (s = 0 model)
//! <root>/eval/             evaluate
//! <root>/analysis/         analyze
//! ```
//!
//! Every output directory gets a `run_manifest_<command>.json` listing the
//! hashes of what was read and written, and is guarded by a lock file while
//! the command runs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use cvae_core::analyze::{
    component_report, export_latents, fit_pca, latent_separation, ranking_distribution, sample_users, LatentTable,
    PcaOptions, RankHistogram, SeparationReport,
};
use cvae_core::data::{ConditionVector, HeldoutUser, ItemConditionMatrix};
use cvae_core::eval::{evaluate, recommend as rank_top, EvalProtocol, EvalReport, ProtocolKind, RankingMode, Scorer};
use cvae_core::exec::Executor;
use cvae_core::model::{Model, ModelConfig};
use cvae_core::train::{run_phase, BestSnapshot, NdcgValidator, PhaseOutcome, PhaseState, TrainData, TrainObserver};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointManifest, EpochRecord, Progress};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::fixture::{generate, write_fixture, Fixture, FixtureSpec};
use crate::lock::DirLock;
use crate::manifest::{fingerprint_file, write_atomic, write_json, RunManifest};
use crate::parallel::Exec;
use crate::report::{self, MetricRow};
use crate::split::{prepare, read_split, write_split, Prepared, SplitManifest};

pub const SPLIT_DIR: &str = "split";
pub const TRAIN_DIR: &str = "train";
pub const BASELINE_DIR: &str = "train_baseline";
pub const EVAL_DIR: &str = "eval";
pub const ANALYSIS_DIR: &str = "analysis";
pub const MODEL_FILE: &str = "model.ckpt";

/// Configuration plus the executor built from `--threads`.
pub struct Context {
    pub config: Config,
    pub threads: usize,
    pub exec: Exec,
}

impl Context {
    pub fn new(config: Config, threads: usize) -> Result<Context> {
        config.validate()?;
        Ok(Context {
            exec: Exec::from_threads(threads)?,
            config,
            threads,
        })
    }

    pub fn root(&self) -> PathBuf {
        self.config.artifact_root()
    }

    pub fn dir(&self, name: &str) -> PathBuf {
        self.root().join(name)
    }

    fn load_split(&self) -> Result<Prepared> {
        let dir = self.dir(SPLIT_DIR);
        if !dir.join("manifest.json").exists() {
            return Err(Error::Usage(format!(
                "no split found in {}; run `cvae preprocess` first",
                dir.display()
            )));
        }
        read_split(&dir)
    }

    fn split_fingerprint(&self) -> Result<String> {
        fingerprint_file(&self.dir(SPLIT_DIR).join("manifest.json"))
    }

    /// `path`, or the conditioned model from `train`.
    pub fn checkpoint_path(&self, path: Option<&Path>) -> PathBuf {
        path.map_or_else(|| self.dir(TRAIN_DIR).join(MODEL_FILE), Path::to_path_buf)
    }
}

fn finish(mut run: RunManifest, dir: &Path, started: Instant, outputs: &[PathBuf]) -> Result<()> {
    for p in outputs {
        run.add_output(p)?;
    }
    run.wall_seconds = started.elapsed().as_secs_f64();
    run.write(dir)?;
    Ok(())
}

// ---------------------------------------------------------------- preprocess

/// Loads, filters and splits the raw data into `<root>/split`.
pub fn preprocess(ctx: &Context) -> Result<SplitManifest> {
    let started = Instant::now();
    // Everything is computed before the output directory is touched.
    let prepared = prepare(&ctx.config)?;
    let dir = ctx.dir(SPLIT_DIR);
    let _lock = DirLock::acquire(&dir)?;
    let manifest = write_split(&dir, &prepared)?;
    let mut run = RunManifest::new("preprocess", &ctx.config, ctx.threads);
    run.add_input(&ctx.config.data.ratings)?;
    run.add_input(&ctx.config.data.categories)?;
    run.details = serde_json::to_value(&manifest).expect("serializable");
    let outputs: Vec<PathBuf> = manifest
        .files
        .keys()
        .map(|f| dir.join(f))
        .chain([dir.join("manifest.json")])
        .collect();
    finish(run, &dir, started, &outputs)?;
    Ok(manifest)
}

/// The dataset-composition lines printed after preprocessing.
pub fn preprocess_summary(m: &SplitManifest) -> String {
    format!(
        "users (n)            {}\n\
         items (m)            {}\n\
         categories (s)       {}\n\
         interactions         {}\n\
         density              {:.3}%\n\
         users train/val/test {}/{}/{}\n\
         training examples    {}\n\
         validation examples  {}\n\
         test examples        {}\n",
        m.n_users,
        m.n_items,
        m.n_categories,
        m.n_interactions,
        m.density_percent,
        m.n_train_users,
        m.n_validation_users,
        m.n_test_users,
        m.n_training_examples,
        m.n_validation_examples,
        m.n_test_examples,
    )
}

// --------------------------------------------------------------------- train

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseSelection {
    One,
    Two,
    Both,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub phase: PhaseSelection,
    /// With `Both`, skips phase 1 and trains phase 2 with this cap.
    pub beta_cap: Option<f64>,
    pub resume: bool,
    /// Train the `s = 0` model on one unconditioned example per user.
    pub baseline: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            phase: PhaseSelection::Both,
            beta_cap: None,
            resume: false,
            baseline: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: u32,
    pub cap: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub best_epoch: usize,
    pub best_val_ndcg: f64,
    /// β in effect at the best epoch.
    pub best_beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub baseline: bool,
    pub phases: Vec<PhaseSummary>,
    /// β* chosen by phase 1, when phase 1 ran.
    pub selected_beta: Option<f64>,
    pub checkpoint: String,
}

fn phase_file(phase: u32, kind: &str) -> String {
    format!("phase{phase}_{kind}.ckpt")
}

/// Writes per-epoch snapshots, the epoch log and the β trace.
struct Persist<'a> {
    dir: &'a Path,
    template: CheckpointManifest,
    snapshot: bool,
    max_epochs: usize,
    started: Instant,
}

impl Persist<'_> {
    fn manifest_for(&self, state: &PhaseState, best: Option<&BestSnapshot>) -> CheckpointManifest {
        let mut m = self.template.clone();
        m.phase = state.phase;
        match best {
            Some(b) => {
                m.epoch = b.epoch;
                m.beta = b.beta;
                m.val_ndcg = Some(b.score);
            }
            None => {
                let last = state.reports.last();
                m.epoch = state.epochs_done;
                m.beta = last.map_or(0.0, |r| r.current_beta);
                m.val_ndcg = last.map(|r| r.val_ndcg);
            }
        }
        m
    }
}

impl TrainObserver for Persist<'_> {
    fn on_epoch(&mut self, state: &PhaseState) -> Result<(), cvae_core::Error> {
        let r = state.reports.last().expect("an epoch was just logged");
        log::info!(
            "phase {} epoch {:>3}  loss {:.4}  nll {:.4}  kl {:.4}  beta {:.4}  val_ndcg {:.4}  {:.1}s",
            state.phase,
            r.epoch,
            r.mean_train_loss,
            r.mean_nll,
            r.mean_kl,
            r.current_beta,
            r.val_ndcg,
            r.wall_time
        );
        let write = || -> Result<()> {
            let mut log = String::new();
            for rep in &state.reports {
                let mut v = serde_json::to_value(EpochRecord::from(rep)).expect("serializable");
                v["phase"] = state.phase.into();
                log.push_str(&serde_json::to_string(&v).expect("serializable"));
                log.push('\n');
            }
            write_atomic(&self.dir.join(format!("train_log_phase{}.jsonl", state.phase)), log.as_bytes())?;
            let mut trace = String::from("epoch,beta\n");
            for rep in &state.reports {
                trace.push_str(&format!("{},{}\n", rep.epoch, rep.current_beta));
            }
            write_atomic(&self.dir.join(format!("beta_trace_phase{}.csv", state.phase)), trace.as_bytes())?;
            if let Some(b) = state.best.as_ref().filter(|b| b.epoch == state.epochs_done) {
                Checkpoint {
                    manifest: self.manifest_for(state, Some(b)),
                    params: b.params.clone(),
                    adam: None,
                }
                .save(&self.dir.join(phase_file(state.phase, "best")))?;
            }
            if self.snapshot || state.stopped_early || state.epochs_done >= self.max_epochs {
                let mut manifest = self.manifest_for(state, None);
                manifest.progress = Some(progress_of(state));
                Checkpoint {
                    manifest,
                    params: state.model.params.clone(),
                    adam: Some(state.adam.clone()),
                }
                .save(&self.dir.join(phase_file(state.phase, "last")))?;
            }
            Ok(())
        };
        write().map_err(|e| cvae_core::Error::External(e.to_string()))
    }

    fn now(&self) -> Option<f64> {
        Some(self.started.elapsed().as_secs_f64())
    }
}

fn progress_of(state: &PhaseState) -> Progress {
    Progress {
        cap: state.cap,
        epochs_done: state.epochs_done,
        global_step: state.global_step,
        bad_epochs: state.bad_epochs,
        stopped_early: state.stopped_early,
        best_score: state.best.as_ref().map(|b| b.score),
        best_epoch: state.best.as_ref().map_or(0, |b| b.epoch),
        best_beta: state.best.as_ref().map_or(0.0, |b| b.beta),
        // timings stay in the epoch log so snapshots are reproducible
        reports: state
            .reports
            .iter()
            .map(|r| EpochRecord {
                wall_time: 0.0,
                ..EpochRecord::from(r)
            })
            .collect(),
    }
}

/// Rebuilds a phase's state from its `last` and `best` snapshots.
fn load_phase_state(
    dir: &Path,
    phase: u32,
    cap: f64,
    template: &CheckpointManifest,
    model_config: &ModelConfig,
) -> Result<Option<PhaseState>> {
    let last_path = dir.join(phase_file(phase, "last"));
    if !last_path.exists() {
        return Ok(None);
    }
    let last = Checkpoint::load(&last_path)?;
    check_resumable(&last_path, &last.manifest, template, model_config)?;
    let progress = last
        .manifest
        .progress
        .clone()
        .ok_or_else(|| Error::format(&last_path, "snapshot has no training progress"))?;
    let adam = last
        .adam
        .clone()
        .ok_or_else(|| Error::format(&last_path, "snapshot has no optimizer state"))?;
    if progress.cap != cap {
        return Err(Error::Usage(format!(
            "{} was trained with beta cap {}, not {cap}; rerun without --resume",
            last_path.display(),
            progress.cap
        )));
    }
    let best = match progress.best_score {
        None => None,
        Some(score) => {
            let best_path = dir.join(phase_file(phase, "best"));
            let best = Checkpoint::load(&best_path)?;
            check_resumable(&best_path, &best.manifest, template, model_config)?;
            if best.manifest.epoch != progress.best_epoch {
                return Err(Error::format(&best_path, "best snapshot does not match the progress record"));
            }
            Some(BestSnapshot {
                params: best.params,
                score,
                epoch: progress.best_epoch,
                beta: progress.best_beta,
            })
        }
    };
    Ok(Some(PhaseState {
        phase,
        cap,
        epochs_done: progress.epochs_done,
        global_step: progress.global_step,
        model: Model {
            config: *model_config,
            params: last.params,
        },
        adam,
        best,
        bad_epochs: progress.bad_epochs,
        reports: progress.reports.iter().map(Into::into).collect(),
        stopped_early: progress.stopped_early,
    }))
}

fn check_resumable(
    path: &Path,
    found: &CheckpointManifest,
    expected: &CheckpointManifest,
    model_config: &ModelConfig,
) -> Result<()> {
    if found.model_config() != *model_config {
        return Err(Error::format(path, "snapshot model shape differs from the current config"));
    }
    if found.split_fingerprint != expected.split_fingerprint {
        return Err(Error::format(path, "snapshot was trained on a different split"));
    }
    if found.seed != expected.seed || found.adam != expected.adam {
        return Err(Error::format(path, "snapshot used a different seed or optimizer setting"));
    }
    Ok(())
}

fn summarize(phase: u32, cap: f64, o: &PhaseOutcome) -> PhaseSummary {
    PhaseSummary {
        phase,
        cap,
        epochs_run: o.reports.len(),
        stopped_early: o.stopped_early,
        best_epoch: o.best.epoch,
        best_val_ndcg: o.best.score,
        best_beta: o.best.beta,
    }
}

/// Runs the requested annealing phases and writes `model.ckpt`.
pub fn train(ctx: &Context, opts: &TrainOptions) -> Result<TrainSummary> {
    let started = Instant::now();
    let cfg = &ctx.config;
    let p = ctx.load_split()?;
    let split_fp = ctx.split_fingerprint()?;
    let s = if opts.baseline { 0 } else { p.g.n_categories() };
    let model_config = cfg.model_config(p.matrix.n_items(), s);
    let train_config = cfg.train_config();
    let examples = if opts.baseline { p.baseline_examples() } else { p.examples.clone() };
    if examples.is_empty() {
        return Err(Error::Usage("the split has no training examples".into()));
    }
    let dir = ctx.dir(if opts.baseline { BASELINE_DIR } else { TRAIN_DIR });
    let _lock = DirLock::acquire(&dir)?;

    let template = CheckpointManifest {
        dims: model_config.dims.into(),
        dropout: model_config.dropout,
        input_order: cfg.model.input_order,
        seed: cfg.seed,
        phase: 0,
        epoch: 0,
        beta: 0.0,
        val_ndcg: None,
        adam: train_config.adam.into(),
        split_fingerprint: split_fp,
        item_ids: p.matrix.item_ids().to_vec(),
        category_names: if opts.baseline { Vec::new() } else { p.g.category_names().to_vec() },
        progress: None,
    };
    let data = TrainData {
        matrix: &p.matrix,
        g: (!opts.baseline).then_some(&p.g),
        examples: &examples,
    };
    let mut validator = NdcgValidator {
        users: &p.split.validation,
        g: &p.g,
        kind: cfg.validation_protocol()?,
        mode: if opts.baseline { RankingMode::Filtered } else { RankingMode::Full },
        k: cfg.train.validation_k,
        exec: &ctx.exec,
    };
    let mut observer = Persist {
        dir: &dir,
        template: template.clone(),
        snapshot: cfg.train.snapshot_every_epoch,
        max_epochs: train_config.max_epochs,
        started,
    };

    let mut run_one = |phase: u32, cap: f64| -> Result<PhaseOutcome> {
        let resume = if opts.resume {
            load_phase_state(&dir, phase, cap, &template, &model_config)?
        } else {
            None
        };
        if let Some(st) = &resume {
            log::info!("phase {phase}: resuming after epoch {}", st.epochs_done);
        }
        log::info!("phase {phase}: beta cap {cap}, {} examples", examples.len());
        let outcome = run_phase(
            &data,
            &model_config,
            &train_config,
            phase,
            cap,
            &mut validator,
            &mut observer,
            &ctx.exec,
            resume,
        )
        .map_err(|e| match e {
            cvae_core::Error::External(m) => Error::Usage(m),
            other => other.into(),
        })?;
        Ok(outcome)
    };

    let mut phases = Vec::new();
    let mut selected_beta = None;
    let final_outcome = match (opts.phase, opts.beta_cap) {
        (PhaseSelection::Both, None) => {
            let p1 = run_one(1, 1.0)?;
            phases.push(summarize(1, 1.0, &p1));
            let beta = p1.best.beta;
            selected_beta = Some(beta);
            log::info!("selected beta* = {beta} (phase 1 best epoch {})", p1.best.epoch);
            let p2 = run_one(2, beta)?;
            phases.push(summarize(2, beta, &p2));
            (2, p2)
        }
        (PhaseSelection::One, cap) => {
            let cap = cap.unwrap_or(1.0);
            let p1 = run_one(1, cap)?;
            selected_beta = Some(p1.best.beta);
            phases.push(summarize(1, cap, &p1));
            (1, p1)
        }
        (PhaseSelection::Two, None) => {
            let cap = phase_one_selection(&dir)?.unwrap_or(cfg.train.anneal_cap);
            let p2 = run_one(2, cap)?;
            phases.push(summarize(2, cap, &p2));
            (2, p2)
        }
        (PhaseSelection::Two | PhaseSelection::Both, Some(cap)) => {
            let p2 = run_one(2, cap)?;
            phases.push(summarize(2, cap, &p2));
            (2, p2)
        }
    };
    let (phase, outcome) = final_outcome;
    let mut manifest = template.clone();
    manifest.phase = phase;
    manifest.epoch = outcome.best.epoch;
    manifest.beta = outcome.best.beta;
    manifest.val_ndcg = Some(outcome.best.score);
    let model_path = dir.join(MODEL_FILE);
    Checkpoint {
        manifest,
        params: outcome.model.params.clone(),
        adam: None,
    }
    .save(&model_path)?;

    let summary = TrainSummary {
        baseline: opts.baseline,
        phases,
        selected_beta,
        checkpoint: MODEL_FILE.into(),
    };
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    let mut run = RunManifest::new("train", cfg, ctx.threads);
    run.add_input(&ctx.dir(SPLIT_DIR).join("manifest.json"))?;
    run.details = serde_json::to_value(&summary).expect("serializable");
    finish(run, &dir, started, &[model_path, summary_path])?;
    Ok(summary)
}

/// β* from a previous phase-1 run in `dir`, if any.
fn phase_one_selection(dir: &Path) -> Result<Option<f64>> {
    let path = dir.join(phase_file(1, "best"));
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(Checkpoint::load(&path)?.manifest.beta))
}

// ------------------------------------------------------------------ evaluate

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum UserSet {
    #[default]
    Test,
    Validation,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalOptions {
    pub checkpoint: Option<PathBuf>,
    pub baseline_checkpoint: Option<PathBuf>,
    /// Overrides `eval.protocols`.
    pub protocols: Option<Vec<ProtocolKind>>,
    pub users: UserSet,
    /// Also write per-case metric values.
    pub dump_cases: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOutcome {
    pub rows: Vec<MetricRow>,
    pub table: String,
}

/// Metric rows for one scorer over the given protocols. This is the hook
/// the command uses for every model, and tests use for reference scorers.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_scorer<S: Scorer + ?Sized, E: Executor>(
    method: &str,
    scorer: &S,
    mode: RankingMode,
    users: &[HeldoutUser],
    g: &ItemConditionMatrix,
    protocols: &[ProtocolKind],
    ks_recall: &[usize],
    ks_ndcg: &[usize],
    exec: &E,
) -> Result<(Vec<MetricRow>, Vec<EvalReport>)> {
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &kind in protocols {
        let protocol = EvalProtocol {
            kind,
            ks_recall: ks_recall.to_vec(),
            ks_ndcg: ks_ndcg.to_vec(),
        };
        let r = evaluate(scorer, mode, users, g, &protocol, exec)?;
        if r.skipped > 0 {
            log::warn!("{method}/{kind}: {} cases had no candidates and were skipped", r.skipped);
        }
        rows.extend(report::metric_rows(method, &r));
        reports.push(r);
    }
    Ok((rows, reports))
}

fn load_compatible(path: &Path, p: &Prepared) -> Result<Checkpoint> {
    let ck = Checkpoint::load(path)?;
    ck.check_compatible(path, p.matrix.item_ids(), p.g.category_names())?;
    Ok(ck)
}

/// Scores held-out users with the trained model (and optionally the
/// filtered baseline) and writes `metrics.csv` / `metrics.txt`.
pub fn evaluate_models(ctx: &Context, opts: &EvalOptions) -> Result<EvalOutcome> {
    let started = Instant::now();
    let cfg = &ctx.config;
    let p = ctx.load_split()?;
    let protocols = match &opts.protocols {
        Some(v) => v.clone(),
        None => cfg.eval_protocols()?,
    };
    let users = match opts.users {
        UserSet::Test => &p.split.test,
        UserSet::Validation => &p.split.validation,
    };
    let main_path = ctx.checkpoint_path(opts.checkpoint.as_deref());
    let mut models = vec![(main_path.clone(), load_compatible(&main_path, &p)?, RankingMode::Full)];
    if let Some(bp) = &opts.baseline_checkpoint {
        let ck = load_compatible(bp, &p)?;
        if ck.manifest.dims.categories != 0 {
            return Err(Error::Usage(format!(
                "{} is a conditioned model; --baseline-checkpoint needs an s = 0 model (train --baseline)",
                bp.display()
            )));
        }
        models.push((bp.clone(), ck, RankingMode::Filtered));
    }

    let dir = ctx.dir(EVAL_DIR);
    let _lock = DirLock::acquire(&dir)?;
    let mut rows = Vec::new();
    let mut outputs = Vec::new();
    for (_, ck, mode) in &models {
        let method = match (ck.manifest.dims.categories, mode) {
            (0, RankingMode::Filtered) => "Mult-VAE (filtered)",
            (0, RankingMode::Full) => "Mult-VAE",
            _ => "C-VAE",
        };
        let (r, reports) = evaluate_scorer(
            method,
            &ck.model(),
            *mode,
            users,
            &p.g,
            &protocols,
            &cfg.eval.ks_recall,
            &cfg.eval.ks_ndcg,
            &ctx.exec,
        )?;
        rows.extend(r);
        if opts.dump_cases {
            let tag = if *mode == RankingMode::Filtered { "baseline" } else { "model" };
            for rep in &reports {
                let path = dir.join(format!("cases_{tag}_{}.csv", rep.protocol));
                write_atomic(&path, report::cases_csv(rep).as_bytes())?;
                outputs.push(path);
            }
        }
    }
    let table = report::metrics_table(&rows);
    let csv_path = dir.join("metrics.csv");
    let txt_path = dir.join("metrics.txt");
    write_atomic(&csv_path, report::metrics_csv(&rows).as_bytes())?;
    write_atomic(&txt_path, table.as_bytes())?;
    outputs.extend([csv_path, txt_path]);

    let mut run = RunManifest::new("evaluate", cfg, ctx.threads);
    run.add_input(&ctx.dir(SPLIT_DIR).join("manifest.json"))?;
    for (path, _, _) in &models {
        run.add_input(path)?;
    }
    run.details = serde_json::json!({
        "users": match opts.users { UserSet::Test => "test", UserSet::Validation => "validation" },
        "protocols": protocols.iter().map(|p| p.name()).collect::<Vec<_>>(),
    });
    finish(run, &dir, started, &outputs)?;
    Ok(EvalOutcome { rows, table })
}

// ------------------------------------------------------------------- analyze

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Analysis {
    Ranking,
    Purity,
    Latent,
    Pca,
}

impl Analysis {
    pub fn name(self) -> &'static str {
        match self {
            Analysis::Ranking => "ranking",
            Analysis::Purity => "purity",
            Analysis::Latent => "latent",
            Analysis::Pca => "pca",
        }
    }
}

/// Which users an analysis runs on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AnalysisUsers {
    /// A seeded sample of training users; rankings exclude their whole
    /// history and conditioned cases cover the categories in it.
    #[default]
    Train,
    /// Test users with their fold-in / held-out split.
    Test,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnalyzeOptions {
    pub checkpoint: Option<PathBuf>,
    pub users: AnalysisUsers,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AnalysisOutcome {
    Ranking(RankHistogram),
    Purity { k: usize, purity: f64 },
    Latent(SeparationReport),
    Pca { files: Vec<PathBuf> },
}

fn analysis_users(ctx: &Context, p: &Prepared, which: AnalysisUsers) -> Vec<HeldoutUser> {
    match which {
        AnalysisUsers::Train => sample_users(&p.split.train_users, ctx.config.analyze.sample_users, ctx.config.seed)
            .into_iter()
            .map(|u| {
                let row = p.matrix.row(u as usize).to_vec();
                HeldoutUser {
                    user: u,
                    foldin: row.clone(),
                    heldout: row,
                }
            })
            .collect(),
        AnalysisUsers::Test => p.split.test.clone(),
    }
}

/// Maps labels to signed condition indices; `none` is the unconditioned row.
fn resolve_labels(labels: &[String], names: &[String]) -> Result<Vec<i64>> {
    labels
        .iter()
        .map(|l| {
            if l.eq_ignore_ascii_case("none") {
                return Ok(-1);
            }
            names.iter().position(|n| n == l).map(|j| j as i64).ok_or_else(|| {
                Error::Config(format!("unknown category {l:?} in analyze.pca_exclude (known: none, {})", names.join(", ")))
            })
        })
        .collect()
}

fn latents(ctx: &Context, p: &Prepared, model: &Model, users: &[HeldoutUser]) -> Result<LatentTable> {
    if model.dims().categories == 0 {
        return Err(Error::Usage("latent analyses need a conditioned model".into()));
    }
    // A compact matrix of fold-in rows, so held-out items never reach the
    // encoder; row indices are mapped back to user indices afterwards.
    let compact = cvae_core::data::InteractionMatrix::new(
        users.iter().map(|u| u.foldin.clone()).collect(),
        users.iter().map(|u| p.matrix.user_ids()[u.user as usize].clone()).collect(),
        p.matrix.item_ids().to_vec(),
    )?;
    let local: Vec<u32> = (0..users.len() as u32).collect();
    let mut table = export_latents(model, &local, &compact, p.g.category_names(), &ctx.exec)?;
    for r in &mut table.rows {
        r.user = users[r.user as usize].user;
    }
    Ok(table)
}

/// Runs one analysis and writes its files under `<root>/analysis`.
pub fn analyze(ctx: &Context, which: Analysis, opts: &AnalyzeOptions) -> Result<AnalysisOutcome> {
    let started = Instant::now();
    let cfg = &ctx.config;
    let p = ctx.load_split()?;
    let ck_path = ctx.checkpoint_path(opts.checkpoint.as_deref());
    let ck = load_compatible(&ck_path, &p)?;
    let model = ck.model();
    let users = analysis_users(ctx, &p, opts.users);
    let dir = ctx.dir(ANALYSIS_DIR);
    let _lock = DirLock::acquire(&dir)?;
    let mut outputs = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        write_atomic(&path, text.as_bytes())?;
        outputs.push(path);
        Ok(())
    };

    let outcome = match which {
        Analysis::Ranking => {
            let h = ranking_distribution(&model, RankingMode::Full, &users, &p.g, cfg.analyze.max_rank, &ctx.exec)?;
            put("ranking_histogram.csv", report::histogram_csv(&h))?;
            AnalysisOutcome::Ranking(h)
        }
        Analysis::Purity => {
            let k = cfg.analyze.purity_k;
            let h = ranking_distribution(&model, RankingMode::Full, &users, &p.g, k, &ctx.exec)?;
            let purity = h.purity(k);
            put("purity.csv", format!("k,purity,cases\n{k},{purity},{}\n", h.cases))?;
            AnalysisOutcome::Purity { k, purity }
        }
        Analysis::Latent => {
            let table = latents(ctx, &p, &model, &users)?;
            let sep = latent_separation(&table)?;
            put("latents.csv", report::latents_csv(&table))?;
            put("separation.csv", report::separation_csv(&sep))?;
            AnalysisOutcome::Latent(sep)
        }
        Analysis::Pca => {
            let table = latents(ctx, &p, &model, &users)?;
            let a = &cfg.analyze;
            let opts = PcaOptions {
                components: a.pca_components,
                exclude: resolve_labels(&a.pca_exclude, p.g.category_names())?,
                recompute: a.pca_recompute,
                drop_leading: a.pca_drop_leading,
            };
            let (result, kept) = fit_pca(&table, &opts)?;
            if result.rank_deficient {
                log::warn!("latent table is rank deficient; {} components found", result.n_components());
            }
            let first = a.pca_drop_leading + 1;
            let pairs: Vec<(usize, usize)> = a.pca_pairs.iter().map(|[x, y]| (x - first, y - first)).collect();
            let reports = component_report(&result, &kept, &pairs)?;
            put("pca_variance.csv", report::pca_variance_csv(&result, first))?;
            put("pca_components.csv", report::pca_components_csv(&result, first))?;
            put("pca_projections.csv", report::pca_projections_csv(&result, &kept, first))?;
            for (rep, [x, y]) in reports.iter().zip(&a.pca_pairs) {
                put(&format!("pca_pair_{x}_{y}.csv"), report::pair_csv(rep, &kept, first))?;
            }
            AnalysisOutcome::Pca { files: outputs.clone() }
        }
    };

    let mut run = RunManifest::new(&format!("analyze_{}", which.name()), cfg, ctx.threads);
    run.add_input(&ctx.dir(SPLIT_DIR).join("manifest.json"))?;
    run.add_input(&ck_path)?;
    run.details = serde_json::json!({
        "users": match opts.users { AnalysisUsers::Train => "train", AnalysisUsers::Test => "test" },
        "n_users": users.len(),
    });
    finish(run, &dir, started, &outputs)?;
    Ok(outcome)
}

// ----------------------------------------------------------------- recommend

/// Top-`n` external item ids for a history, under the named category or
/// unconditioned.
pub fn recommend(ck: &Checkpoint, history: &[u32], condition: Option<&str>, n: usize) -> Result<Vec<(String, f64)>> {
    let names = &ck.manifest.category_names;
    let s = ck.manifest.dims.categories;
    let c = match condition {
        None => ConditionVector::unconditioned(s),
        Some(label) => {
            if s == 0 {
                return Err(Error::Usage("this model is unconditioned; --condition is not available".into()));
            }
            let j = names.iter().position(|n| n == label).ok_or_else(|| {
                Error::Usage(format!("unknown condition {label:?}; valid labels: {}", names.join(", ")))
            })?;
            ConditionVector::category(s, j)?
        }
    };
    let top = rank_top(&ck.model(), history, &c, n)?;
    Ok(top
        .into_iter()
        .map(|(i, score)| (ck.manifest.item_ids[i as usize].clone(), score))
        .collect())
}

/// Index lookup over a checkpoint's item catalogue.
pub fn item_lookup(ck: &Checkpoint) -> impl Fn(&str) -> Option<u32> + '_ {
    let index: std::collections::HashMap<&str, u32> = ck
        .manifest
        .item_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i as u32))
        .collect();
    move |id| index.get(id).copied()
}

// ------------------------------------------------------------------- fixture

/// Generates the synthetic dataset into `dir`.
pub fn make_fixture(dir: &Path, spec: &FixtureSpec) -> Result<Fixture> {
    let _lock = DirLock::acquire(dir)?;
    let f = generate(spec);
    write_fixture(dir, &f)?;
    Ok(f)
}
