use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cvae::checkpoint::Checkpoint;
use cvae::config::{parse_protocol, Config};
use cvae::fixture::FixtureSpec;
use cvae::pipeline::{
    self, Analysis, AnalysisOutcome, AnalysisUsers, AnalyzeOptions, Context, EvalOptions, PhaseSelection,
    TrainOptions, UserSet,
};
use cvae::{Error, Result};

/// Conditioned variational autoencoder recommender.
#[derive(Parser, Debug)]
#[command(name = "cvae", version, about)]
struct Cli {
    /// TOML config; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; 0 is the single-threaded deterministic reference.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Filter and split the raw ratings into <root>/split.
    Preprocess,
    /// Train with the two-phase annealing protocol.
    Train(TrainArgs),
    /// Write the metrics table for held-out users.
    Evaluate(EvalArgs),
    /// Ranking histograms, purity, latent export or PCA.
    Analyze(AnalyzeArgs),
    /// Print the top-N items for a history.
    Recommend(RecommendArgs),
    /// Write the synthetic block-structured dataset and its config.
    Fixture(FixtureArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PhaseArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_enum, default_value = "both")]
    phase: PhaseArg,
    /// Annealing cap. With `--phase both` phase 1 is skipped.
    #[arg(long)]
    beta_cap: Option<f64>,
    /// Continue from the last epoch snapshots.
    #[arg(long)]
    resume: bool,
    /// Train the unconditioned model used as the filtered baseline.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum UsersArg {
    Test,
    Validation,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Defaults to <root>/train/model.ckpt.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// An s = 0 model; adds filtered-baseline rows.
    #[arg(long)]
    baseline_checkpoint: Option<PathBuf>,
    /// total, normal or conditioned; repeatable. Defaults to eval.protocols.
    #[arg(long)]
    protocol: Vec<String>,
    #[arg(long, value_enum, default_value = "test")]
    users: UsersArg,
    /// Also write per-case metric values.
    #[arg(long)]
    cases: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum WhichArg {
    Ranking,
    Purity,
    Latent,
    Pca,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PoolArg {
    Train,
    Test,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long, value_enum)]
    which: WhichArg,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "train")]
    users: PoolArg,
}

#[derive(Args, Debug)]
struct RecommendArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// One external item id per line.
    #[arg(long)]
    history: PathBuf,
    /// Category label; unconditioned when omitted.
    #[arg(long)]
    condition: Option<String>,
    #[arg(short = 'N', default_value_t = 10)]
    n: usize,
}

#[derive(Args, Debug)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    users: usize,
    #[arg(long, default_value_t = 200)]
    items: usize,
    #[arg(long, default_value_t = 5)]
    categories: usize,
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn context(cli: &Cli, cfg: Config) -> Result<Context> {
    Context::new(cfg, cli.threads)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Preprocess => {
            let ctx = context(&cli, load_config(&cli)?)?;
            let m = pipeline::preprocess(&ctx)?;
            print!("{}", pipeline::preprocess_summary(&m));
        }
        Command::Train(a) => {
            let mut cfg = load_config(&cli)?;
            let t = &mut cfg.train;
            t.max_epochs = a.max_epochs.unwrap_or(t.max_epochs);
            t.batch_size = a.batch_size.unwrap_or(t.batch_size);
            t.lr = a.lr.unwrap_or(t.lr);
            t.patience = a.patience.unwrap_or(t.patience);
            let ctx = context(&cli, cfg)?;
            let opts = TrainOptions {
                phase: match a.phase {
                    PhaseArg::One => PhaseSelection::One,
                    PhaseArg::Two => PhaseSelection::Two,
                    PhaseArg::Both => PhaseSelection::Both,
                },
                beta_cap: a.beta_cap,
                resume: a.resume,
                baseline: a.baseline,
            };
            if let Some(c) = a.beta_cap {
                if !(c.is_finite() && c >= 0.0) {
                    return Err(Error::Usage(format!("--beta-cap must be a non-negative number, got {c}")));
                }
            }
            let s = pipeline::train(&ctx, &opts)?;
            for p in &s.phases {
                println!(
                    "phase {}: cap {} epochs {} best epoch {} val nDCG {:.4} beta {:.4}{}",
                    p.phase,
                    p.cap,
                    p.epochs_run,
                    p.best_epoch,
                    p.best_val_ndcg,
                    p.best_beta,
                    if p.stopped_early { " (early stop)" } else { "" }
                );
            }
            if let Some(b) = s.selected_beta {
                println!("selected beta {b}");
            }
        }
        Command::Evaluate(a) => {
            let ctx = context(&cli, load_config(&cli)?)?;
            let protocols = if a.protocol.is_empty() {
                None
            } else {
                Some(
                    a.protocol
                        .iter()
                        .map(|p| parse_protocol(p).map_err(|e| Error::Usage(e.to_string())))
                        .collect::<Result<Vec<_>>>()?,
                )
            };
            let out = pipeline::evaluate_models(
                &ctx,
                &EvalOptions {
                    checkpoint: a.checkpoint.clone(),
                    baseline_checkpoint: a.baseline_checkpoint.clone(),
                    protocols,
                    users: match a.users {
                        UsersArg::Test => UserSet::Test,
                        UsersArg::Validation => UserSet::Validation,
                    },
                    dump_cases: a.cases,
                },
            )?;
            print!("{}", out.table);
        }
        Command::Analyze(a) => {
            let ctx = context(&cli, load_config(&cli)?)?;
            let which = match a.which {
                WhichArg::Ranking => Analysis::Ranking,
                WhichArg::Purity => Analysis::Purity,
                WhichArg::Latent => Analysis::Latent,
                WhichArg::Pca => Analysis::Pca,
            };
            let opts = AnalyzeOptions {
                checkpoint: a.checkpoint.clone(),
                users: match a.users {
                    PoolArg::Train => AnalysisUsers::Train,
                    PoolArg::Test => AnalysisUsers::Test,
                },
            };
            match pipeline::analyze(&ctx, which, &opts)? {
                AnalysisOutcome::Purity { purity, .. } => println!("{purity}"),
                AnalysisOutcome::Ranking(h) => {
                    println!("{} conditioned cases, purity@{} {:.4}", h.cases, h.max_rank, h.purity(h.max_rank))
                }
                AnalysisOutcome::Latent(s) => println!(
                    "inter-centroid {:.4}  intra-dispersion {:.4}  ratio {:.4}",
                    s.mean_inter, s.mean_intra, s.ratio
                ),
                AnalysisOutcome::Pca { files } => {
                    for f in files {
                        println!("{}", f.display());
                    }
                }
            }
        }
        Command::Recommend(a) => {
            let path = match &a.checkpoint {
                Some(p) => p.clone(),
                None => context(&cli, load_config(&cli)?)?.checkpoint_path(None),
            };
            let ck = Checkpoint::load(&path)?;
            let (history, unknown) = cvae::io::load_history(&a.history, pipeline::item_lookup(&ck))?;
            if !unknown.is_empty() {
                log::warn!("ignoring {} unknown item ids: {}", unknown.len(), unknown.join(", "));
            }
            for (id, score) in pipeline::recommend(&ck, &history, a.condition.as_deref(), a.n)? {
                println!("{id}\t{score}");
            }
        }
        Command::Fixture(a) => {
            let spec = FixtureSpec {
                users: a.users,
                items: a.items,
                categories: a.categories,
                seed: cli.seed.unwrap_or(FixtureSpec::default().seed),
                ..FixtureSpec::default()
            };
            let f = pipeline::make_fixture(&a.out, &spec)?;
            println!(
                "wrote {} ratings for {} users and {} items to {}",
                f.ratings.len(),
                f.truth.n_users,
                f.truth.n_items,
                a.out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
