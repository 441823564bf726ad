use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fedhome::data::Scheme;
use fedhome::evaluation::Variant;
use fedhome::personalization::Level;
use fedhome::run::{self, RunConfig, OUTPUT_ENV};

#[derive(Parser)]
#[command(name = "fedhome", version, about = "Federated GCAE training with latent SMOTE personalization")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    /// Default root for outputs when --out is not given.
    #[arg(long, global = true, env = OUTPUT_ENV, default_value = "fedhome-out")]
    out_root: PathBuf,

    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic sensor CSV files and a partition manifest.
    GenData(GenData),
    /// Train a global model and write a run directory.
    Train(Train),
    /// Personalize every client of a trained run.
    Personalize(Personalize),
    /// Score a run's checkpoint on its test sets.
    Eval(Eval),
    /// Run an experiment plan.
    Sweep(Sweep),
}

#[derive(Args)]
struct Common {
    /// TOML configuration, or a run manifest to reproduce.
    #[arg(long, visible_alias = "manifest")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Number of users.
    #[arg(long)]
    users: Option<usize>,
}

#[derive(Args)]
struct GenData {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of sensor CSV files.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Clients per round.
    #[arg(long)]
    k: Option<usize>,
    /// Local batch size.
    #[arg(long)]
    b: Option<usize>,
    /// Local epochs.
    #[arg(long)]
    e: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Weight of the reconstruction loss.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    eval_interval: Option<usize>,
    #[arg(long)]
    checkpoint_interval: Option<usize>,
}

#[derive(Args)]
struct Train {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    train: TrainArgs,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Personalize {
    run_dir: PathBuf,
    #[arg(long)]
    level: Option<Level>,
}

#[derive(Args)]
struct Eval {
    run_dir: PathBuf,
    /// Checkpoint to score instead of the run's global model.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct Sweep {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<Variant>>,
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
    #[arg(long, value_delimiter = ',')]
    k_values: Option<Vec<usize>>,
    /// `(B, E)` pairs written as BxE, e.g. 10x5,50x1.
    #[arg(long, value_delimiter = ',', value_parser = parse_be)]
    be: Option<Vec<(usize, usize)>>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_be(s: &str) -> Result<(usize, usize), String> {
    let (b, e) = s
        .split_once('x')
        .ok_or_else(|| format!("expected BxE, got {s:?}"))?;
    let num = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{s:?}: {e}"));
    Ok((num(b)?, num(e)?))
}

fn base_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(scheme) = common.scheme {
        cfg.partition.scheme = scheme;
    }
    if let Some(users) = common.users {
        cfg.synth.users = users;
        cfg.partition.num_users = users;
    }
    Ok(cfg)
}

fn apply_train(cfg: &mut RunConfig, t: &TrainArgs) {
    if let Some(d) = &t.data {
        cfg.data = Some(d.clone());
    }
    if let Some(v) = t.variant {
        cfg.variant = v;
    }
    let fed = &mut cfg.fed;
    if let Some(v) = t.rounds {
        fed.rounds = v;
    }
    if let Some(v) = t.k {
        fed.clients_per_round = v;
    }
    if let Some(v) = t.b {
        fed.batch_size = v;
        cfg.central.batch_size = v;
    }
    if let Some(v) = t.e {
        fed.local_epochs = v;
    }
    if let Some(v) = t.lr {
        fed.learning_rate = v;
        cfg.central.learning_rate = v;
    }
    if let Some(v) = t.lambda {
        fed.lambda = v;
        cfg.central.lambda = v;
    }
    if let Some(v) = t.eval_interval {
        fed.eval_interval = v;
    }
    if let Some(v) = t.checkpoint_interval {
        cfg.checkpoint_interval = v;
    }
}

fn output_dir(explicit: Option<&Path>, cfg: &RunConfig, root: &Path, default: String) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| root.join(default))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let workers = cli.workers;
    if workers == 0 {
        bail!("--workers must be at least 1");
    }
    match cli.command {
        Command::GenData(args) => {
            let cfg = base_config(&args.common)?.resolve()?;
            let out = output_dir(args.out.as_deref(), &cfg, &cli.out_root, "data".into());
            let files = run::generate_data(&cfg, &out)?;
            println!("wrote {} user files to {}", files.len(), out.display());
        }
        Command::Train(args) => {
            let mut cfg = base_config(&args.common)?;
            apply_train(&mut cfg, &args.train);
            let cfg = cfg.resolve()?;
            let name = format!("{}-{}-seed{}", cfg.variant, cfg.partition.scheme, cfg.seed);
            let out = output_dir(args.out.as_deref(), &cfg, &cli.out_root.join("runs"), name);
            let outcome = run::train(&cfg, &out, workers)
                .with_context(|| format!("training into {}", out.display()))?;
            println!(
                "{}: {} rounds, test accuracy {:.4}, checkpoint sha256 {}",
                out.display(),
                outcome.rounds,
                outcome.metrics.accuracy,
                outcome.checkpoint_sha256
            );
        }
        Command::Personalize(args) => {
            let report = run::personalize(&args.run_dir, args.level, workers)?;
            println!(
                "{} models; mean user accuracy {:.4} -> {:.4}",
                report.models.len(),
                report.mean_pre(),
                report.mean_post()
            );
        }
        Command::Eval(args) => {
            let (report, path) = run::evaluate(&args.run_dir, args.checkpoint.as_deref())?;
            println!("accuracy {:.4} ({} windows), written to {}", report.accuracy, report.total, path.display());
        }
        Command::Sweep(args) => {
            let mut cfg = base_config(&args.common)?;
            apply_train(&mut cfg, &args.train);
            let plan = &mut cfg.experiment;
            if let Some(v) = args.variants {
                plan.variants = v;
            }
            if let Some(v) = args.schemes {
                plan.schemes = v;
            }
            if let Some(v) = args.k_values {
                plan.k_values = v;
            }
            if let Some(v) = args.be {
                plan.batch_epochs = v;
            }
            if let Some(v) = args.repetitions {
                plan.repetitions = v;
            }
            let out = output_dir(args.out.as_deref(), &cfg, &cli.out_root, "sweep".into());
            let report = run::sweep(&cfg, &out, workers)?;
            println!(
                "{} cell results, {} failures; summary in {}",
                report.results.len(),
                report.failures.len(),
                out.join("summary.csv").display()
            );
            for t in report.trends.iter().filter(|t| !t.passed) {
                log::warn!("trend check {} did not hold: {}", t.check, t.detail);
            }
            if !report.failures.is_empty() {
                bail!("{} cells failed; see {}", report.failures.len(), out.join("failures.csv").display());
            }
        }
    }
    Ok(())
}
