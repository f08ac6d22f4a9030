//! `dlsn`: simulate, fit, evaluate, benchmark and ingest dynamic latent
//! space network data.
//!
//! Exit codes: 0 success, 2 configuration error, 3 parse error, 4 filter
//! collapse, 1 anything else.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dlsn::data_io::WindowMode;

use crate::config::{FitMode, Metric, RunConfig, ScenarioKind};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Lib(dlsn::Error),
}

impl From<dlsn::Error> for CliError {
    fn from(e: dlsn::Error) -> Self {
        CliError::Lib(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use dlsn::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Lib(e) => match e {
                E::InvalidParameter(_)
                | E::InputDomain(_)
                | E::ManifestVersion { .. }
                | E::Manifest(_) => 2,
                E::Parse { .. } | E::Csv(_) => 3,
                E::FilterCollapse { .. } | E::TotalDegeneracy => 4,
                _ => 1,
            },
        }
    }
}

#[derive(Parser)]
#[command(
    name = "dlsn",
    version,
    about = "Sequential Monte Carlo for dynamic latent space networks"
)]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed of every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for particle loops (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory receiving the output tables and manifest.toml.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a network series with its latent paths and true edge means.
    Simulate(SimulateArgs),
    /// Estimate the static parameters by offline or online gradient ascent.
    Fit(FitArgs),
    /// Compute ROC/AUC, MSE against truth and predictive AAE.
    Evaluate(EvaluateArgs),
    /// Time the filter over sweeps in N, T and M.
    Benchmark(BenchmarkArgs),
    /// Aggregate a timestamped contact list into windowed networks.
    Ingest(IngestArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    scenario: Option<ScenarioKind>,
    /// Number of nodes N.
    #[arg(long)]
    nodes: Option<usize>,
    /// Number of observation times T.
    #[arg(long)]
    times: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_enum)]
    mode: Option<FitMode>,
    /// series.csv to fit.
    #[arg(long)]
    series: Option<PathBuf>,
    /// truth.csv from `simulate`, for per-time MSE.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Particles M.
    #[arg(long)]
    particles: Option<usize>,
    /// Intermediary steps S.
    #[arg(long)]
    substeps: Option<usize>,
    /// Look-ahead horizon B.
    #[arg(long)]
    lookahead: Option<usize>,
    /// Hold out the final network and write its predictive means.
    #[arg(long)]
    holdout_last: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    series: Option<PathBuf>,
    #[arg(long)]
    probabilities: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    predictive: Option<PathBuf>,
    /// Comma-separated subset of auc, mse, aae.
    #[arg(long, value_delimiter = ',', value_parser = parse_metric)]
    metrics: Option<Vec<Metric>>,
    #[arg(long)]
    replicates: Option<usize>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Args)]
struct IngestArgs {
    /// Edge list with lines `t i j [class_i class_j]`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Window length in seconds.
    #[arg(long)]
    window: Option<i64>,
    #[arg(long, value_parser = parse_window_mode)]
    mode: Option<WindowMode>,
    /// Keep only contacts within this class.
    #[arg(long)]
    group: Option<String>,
    /// Keep only contacts among these labels (comma-separated).
    #[arg(long, value_delimiter = ',')]
    nodes: Option<Vec<String>>,
    /// Index every label given to --nodes even without contacts.
    #[arg(long)]
    pin_nodes: bool,
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    match s {
        "auc" => Ok(Metric::Auc),
        "mse" => Ok(Metric::Mse),
        "aae" => Ok(Metric::Aae),
        _ => Err(format!("unknown metric `{s}` (expected auc, mse or aae)")),
    }
}

fn parse_window_mode(s: &str) -> Result<WindowMode, String> {
    match s {
        "binary" => Ok(WindowMode::Binary),
        "count" => Ok(WindowMode::Count),
        _ => Err(format!(
            "unknown window mode `{s}` (expected binary or count)"
        )),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_overrides(cfg: &mut RunConfig, command: Command) -> Command {
    match &command {
        Command::Simulate(a) => {
            set(&mut cfg.scenario.kind, a.scenario);
            set(&mut cfg.scenario.nodes, a.nodes);
            set(&mut cfg.scenario.times, a.times);
        }
        Command::Fit(a) => {
            set(&mut cfg.fit.mode, a.mode);
            set(&mut cfg.fit.series, a.series.clone().map(Some));
            set(&mut cfg.fit.truth, a.truth.clone().map(Some));
            set(&mut cfg.fit.iterations, a.iterations);
            set(&mut cfg.girf.particles, a.particles);
            set(&mut cfg.girf.substeps, a.substeps.map(Some));
            set(&mut cfg.girf.lookahead, a.lookahead);
            cfg.fit.holdout_last |= a.holdout_last;
        }
        Command::Evaluate(a) => {
            set(&mut cfg.evaluate.series, a.series.clone().map(Some));
            set(
                &mut cfg.evaluate.probabilities,
                a.probabilities.clone().map(Some),
            );
            set(&mut cfg.evaluate.truth, a.truth.clone().map(Some));
            set(&mut cfg.evaluate.predictive, a.predictive.clone().map(Some));
            set(&mut cfg.evaluate.metrics, a.metrics.clone().map(Some));
            set(&mut cfg.evaluate.replicates, a.replicates);
        }
        Command::Benchmark(a) => {
            set(&mut cfg.benchmark.particles, a.particles);
            set(&mut cfg.benchmark.repeats, a.repeats);
        }
        Command::Ingest(a) => {
            set(&mut cfg.ingest.input, a.input.clone().map(Some));
            set(&mut cfg.ingest.window, a.window);
            set(&mut cfg.ingest.mode, a.mode);
            set(&mut cfg.ingest.group, a.group.clone().map(Some));
            set(&mut cfg.ingest.nodes, a.nodes.clone().map(Some));
            cfg.ingest.pin_nodes |= a.pin_nodes;
        }
    }
    command
}

fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size the thread pool: {e}")))?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let shared = cli.shared;
    configure_threads(shared.threads)?;
    let mut cfg = RunConfig::load(shared.config.as_deref())?;
    let command = apply_overrides(&mut cfg, cli.command);
    let (seed, out) = (shared.seed, shared.out_dir.as_path());
    match command {
        Command::Simulate(_) => commands::simulate(&cfg, seed, out),
        Command::Fit(_) => commands::fit(&cfg, seed, out),
        Command::Evaluate(_) => commands::evaluate(&cfg, seed, out),
        Command::Benchmark(_) => commands::benchmark(&cfg, seed, out),
        Command::Ingest(_) => commands::ingest(&cfg, seed, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
