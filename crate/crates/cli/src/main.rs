//! `splitee` command-line runner.
//!
//! ```text
//! splitee run --synth-config synth.toml --policy splitee --alpha 0.8 --out results/
//! splitee run --trace imdb.jsonl --policy final-exit --alpha 0.8 --runs 1 --out base/
//! splitee run --config experiment.toml --out results/
//! splitee synth --synth-config synth.toml --out trace.jsonl
//! splitee validate trace.jsonl
//! ```

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use splitee::experiment::{RegretMode, TraceSource};
use splitee::synth::generate;
use splitee::{run_experiment, Error, ExperimentConfig, Policy, SynthConfig, TraceDataset};

#[derive(Debug, Parser)]
#[command(name = "splitee", version, about = "Online split/exit layer selection for early-exit networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a policy over reshuffled copies of a trace for every offload cost.
    Run(RunArgs),
    /// Generate a synthetic trace file.
    Synth {
        /// Synthetic generator config (TOML, or JSON with a .json extension).
        #[arg(long)]
        synth_config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Load and validate a trace file.
    Validate { trace: PathBuf },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment config file; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trace file in the line-delimited JSON trace format.
    #[arg(long, conflicts_with = "synth_config")]
    trace: Option<PathBuf>,
    /// Synthetic generator config used instead of a trace file.
    #[arg(long)]
    synth_config: Option<PathBuf>,
    /// splitee, splitee-s, final-exit, random-exit, fixed:<layer> or cascade.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    /// Comma-separated offload costs, e.g. `1,2,3,4,5`.
    #[arg(long, value_delimiter = ',')]
    offload_costs: Option<Vec<f64>>,
    #[arg(long)]
    runs: Option<usize>,
    /// Base seed for per-run reshuffling.
    #[arg(long)]
    seed: Option<u64>,
    /// Report realized reward differences instead of pseudo-regret.
    #[arg(long)]
    realized_regret: bool,
    /// summary.json of a final-exit run; adds deltas to the report.
    #[arg(long)]
    baseline_summary: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn read_synth_config(path: &Path) -> anyhow::Result<SynthConfig> {
    SynthConfig::from_file(path).with_context(|| format!("reading synth config {}", path.display()))
}

fn resolve_config(args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let source = match (&args.trace, &args.synth_config) {
        (Some(path), _) => Some(TraceSource::File(path.clone())),
        (None, Some(path)) => Some(TraceSource::Synth(read_synth_config(path)?)),
        (None, None) => None,
    };
    let policy = args.policy.as_deref().map(str::parse::<Policy>).transpose()?;

    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => {
            let source = source
                .clone()
                .context("one of --trace, --synth-config or --config is required")?;
            let policy = policy.context("--policy is required without --config")?;
            let alpha = args.alpha.context("--alpha is required without --config")?;
            ExperimentConfig::new(source, policy, alpha)
        }
    };
    if let Some(source) = source {
        config.trace = source;
    }
    if let Some(policy) = policy {
        config.policy = policy;
    }
    macro_rules! override_with {
        ($($field:ident <- $value:expr),* $(,)?) => {
            $(if let Some(v) = $value { config.$field = v; })*
        };
    }
    override_with!(
        alpha <- args.alpha,
        beta <- args.beta,
        mu <- args.mu,
        lambda1 <- args.lambda1,
        lambda2 <- args.lambda2,
        offload_costs <- args.offload_costs.clone(),
        runs <- args.runs,
        base_seed <- args.seed,
    );
    if args.realized_regret {
        config.regret = RegretMode::Realized;
    }
    if args.baseline_summary.is_some() {
        config.baseline_summary = args.baseline_summary.clone();
    }
    Ok(config)
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let config = resolve_config(&args)?;
    let outcome = run_experiment(&config, &args.out)?;
    print!("{}", splitee::experiment::sweep_report(&outcome.report.sweep).text);
    println!("artifacts written to {}", args.out.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::TraceNotFound(_)) => 3,
        Some(Error::DatasetTooSmall { .. }) => 4,
        Some(Error::InvalidPolicy(_)) => 5,
        Some(
            Error::MalformedRecord { .. }
            | Error::LengthMismatch { .. }
            | Error::ConfidenceOutOfRange { .. }
            | Error::DuplicateId { .. }
            | Error::MissingHeader,
        ) => 6,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Synth { synth_config, out } => read_synth_config(&synth_config)
            .and_then(|cfg| Ok(generate(&cfg)?.save(&out)?))
            .map(|()| println!("wrote {}", out.display())),
        Command::Validate { trace } => TraceDataset::load(&trace)
            .map(|ds| println!("ok: L = {}, {} samples", ds.layers(), ds.len()))
            .map_err(Into::into),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
