//! `mantra`: run noise-treatment experiments from the command line.
//!
//! Exit status is 0 on success, 2 for configuration errors and 1 for
//! failures during a run.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mantra_core::runner::{
    compare_runs, run_experiment, run_grid, DataSource, ExperimentConfig, RunReport,
};
use mantra_core::{Error, LossTransform, TaskKind};

#[derive(Parser, Debug)]
#[command(
    name = "mantra",
    version,
    about = "Loss-trajectory noise detection and adaptive sample dropping"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one configuration and write its artifacts.
    Run(RunArgs),
    /// Run every rate × seed cell with and without dropping.
    Grid(GridArgs),
    /// Compare a baseline report with a noise-treated one.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Task {
    Cls,
    Sum,
}

impl From<Task> for TaskKind {
    fn from(t: Task) -> Self {
        match t {
            Task::Cls => TaskKind::Classification,
            Task::Sum => TaskKind::Summarization,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Transform {
    Identity,
    Log1p,
}

impl From<Transform> for LossTransform {
    fn from(t: Transform) -> Self {
        match t {
            Transform::Identity => LossTransform::Identity,
            Transform::Log1p => LossTransform::Log1p,
        }
    }
}

/// Options shared by `run` and `grid`. Unset values keep the task defaults.
#[derive(Args, Debug)]
struct Common {
    #[arg(long, value_enum)]
    task: Task,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    persistence: Option<usize>,
    #[arg(long)]
    max_drop_frac: Option<f64>,
    #[arg(long)]
    kmax: Option<usize>,
    /// Trailing window of epochs averaged before fitting.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, value_enum)]
    transform: Option<Transform>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// `synthetic` or a JSONL file.
    #[arg(long, default_value = "synthetic")]
    data: String,
    /// One token per line; line number is the token id.
    #[arg(long)]
    source_vocab: Option<PathBuf>,
    #[arg(long)]
    target_vocab: Option<PathBuf>,
    /// Output directory. `MANTRA_OUT` takes precedence when set.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0.0)]
    noise_rate: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "off")]
    mantra: Switch,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.10,0.15")]
    rates: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    baseline: PathBuf,
    mantra: PathBuf,
    /// Report of a clean (0% noise) run for degradation figures.
    #[arg(long)]
    clean: Option<PathBuf>,
}

fn out_dir(flag: Option<PathBuf>) -> Option<PathBuf> {
    match std::env::var_os("MANTRA_OUT") {
        Some(v) if !v.is_empty() => Some(PathBuf::from(v)),
        _ => flag,
    }
}

fn build_config(c: &Common, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::for_task(c.task.into(), seed);
    if let Some(v) = c.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = c.warmup {
        cfg.policy.warmup = v;
    }
    if let Some(v) = c.tau {
        cfg.policy.tau = v;
    }
    if let Some(v) = c.persistence {
        cfg.policy.persistence = v;
    }
    if let Some(v) = c.max_drop_frac {
        cfg.policy.max_drop_frac = v;
    }
    if let Some(v) = c.kmax {
        cfg.policy.k_max = v;
    }
    if let Some(v) = c.window {
        cfg.policy.window = v;
    }
    if let Some(v) = c.transform {
        cfg.policy.transform = v.into();
    }
    if let Some(v) = c.lr {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = c.batch_size {
        cfg.train.batch_size = v;
    }
    if c.data != "synthetic" {
        cfg.data = DataSource::Jsonl {
            path: PathBuf::from(&c.data),
            source_vocab: c.source_vocab.clone(),
            target_vocab: c.target_vocab.clone(),
        };
    }
    cfg.out_dir = out_dir(c.out.clone());
    cfg
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Usage(format!("cannot serialise output: {e}")))?;
    println!("{text}");
    Ok(())
}

fn run(args: RunArgs) -> Result<(), Error> {
    let mut cfg = build_config(&args.common, args.seed).with_noise(args.noise_rate);
    cfg.mantra = args.mantra == Switch::On;
    let run = run_experiment(&cfg)?;
    let r = &run.report;
    println!(
        "{} rate={} seed={} mantra={} {}={:.4} dropped={} corrupted={}",
        cfg.task.short_name(),
        cfg.noise_rate,
        cfg.seed,
        if cfg.mantra { "on" } else { "off" },
        r.metric,
        r.test_metric,
        r.dropped_total,
        r.corrupted
    );
    if let Some(dir) = &cfg.out_dir {
        println!("artifacts written to {}", dir.display());
    }
    Ok(())
}

fn grid(args: GridArgs) -> Result<(), Error> {
    let base = build_config(&args.common, 0);
    let reports = run_grid(&base, &args.rates, &args.seeds)?;
    println!("task,rate,seed,mantra,test_metric,dropped");
    for r in &reports {
        println!(
            "{},{},{},{},{:.6},{}",
            r.config.task.short_name(),
            r.config.noise_rate,
            r.config.seed,
            if r.config.mantra { "on" } else { "off" },
            r.test_metric,
            r.dropped_total
        );
    }
    Ok(())
}

fn compare(args: CompareArgs) -> Result<(), Error> {
    let baseline = RunReport::load(&args.baseline)?;
    let mantra = RunReport::load(&args.mantra)?;
    let clean = args.clean.as_ref().map(RunReport::load).transpose()?;
    print_json(&compare_runs(&baseline, &mantra, clean.as_ref())?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Grid(a) => grid(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
