//! `recaudit` binary: agency-audit experiment sweeps over a rating log,
//! plus a deterministic synthetic data generator.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
//! failure. Result CSVs are byte-deterministic per (config, seed); timing
//! and skip reasons go to stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use recaudit::config::{ConfigError, ExperimentConfig, ExperimentKind, RawSettings};
use recaudit::csv_out::{summarize, write_rows, write_summary, CsvError};
use recaudit::harness::{run_experiment, HarnessError};
use recaudit::synth::{generate, SynthSpec};
use recaudit_core::dataset::DataError;
use thiserror::Error;

#[derive(Parser)]
#[command(
    name = "recaudit",
    version,
    about = "Audit user agency in a matrix-factorization recommender"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reachability audits over sampled (user, target item) pairs
    ReachSweep(RunArgs),
    /// Stability audits over sampled (user, adversary) pairs
    StabSweep(RunArgs),
    /// Stability audits across a beta grid
    BetaSweep(RunArgs),
    /// The same sampled pairs audited under each optimizer
    OptimizerCompare(RunArgs),
    /// Popular vs intermediate target items, mean reachability per group
    GroupReach(RunArgs),
    /// Active vs intermediate adversaries, mean instability per group
    GroupStab(RunArgs),
    /// Write a deterministic synthetic rating log in MovieLens format
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Rating log in MovieLens format
    #[arg(long)]
    data: Option<PathBuf>,
    /// past-reach | future-reach | past-stab | future-stab
    #[arg(long)]
    metric: Option<String>,
    /// Horizon values, comma separated
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Softmax inverse temperatures, comma separated
    #[arg(long, value_delimiter = ',')]
    beta: Option<Vec<f64>>,
    /// gd | zo | oracle
    #[arg(long)]
    optimizer: Option<String>,
    /// l2 | hellinger
    #[arg(long)]
    distance: Option<String>,
    /// Optimizer epochs per audit
    #[arg(long)]
    epochs: Option<usize>,
    /// Optimizer step size
    #[arg(long)]
    lr: Option<f64>,
    /// Zeroth-order perturbation scale
    #[arg(long)]
    eps: Option<f64>,
    /// Zeroth-order directions per gradient estimate
    #[arg(long)]
    num_z: Option<usize>,
    /// Fraction of users sampled into the audit
    #[arg(long)]
    user_frac: Option<f64>,
    /// Fraction of items sampled into the audit
    #[arg(long)]
    item_frac: Option<f64>,
    /// Master seed for sampling, optimizer seeds, and training
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for rows.csv and summary.csv
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key = value config file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Factor dimension of the trained model
    #[arg(long)]
    dim: Option<usize>,
    /// Training epochs for the factor model
    #[arg(long)]
    mf_epochs: Option<usize>,
    /// Training ridge weight; also the audit-time refit ridge
    #[arg(long)]
    mf_lambda: Option<f64>,
    /// Directory of reusable model checkpoints
    #[arg(long)]
    model_cache: Option<PathBuf>,
}

impl RunArgs {
    fn into_raw(self) -> (RawSettings, Option<PathBuf>) {
        let config = self.config;
        let raw = RawSettings {
            data: self.data,
            metric: self.metric,
            k: self.k,
            beta: self.beta,
            optimizer: self.optimizer,
            distance: self.distance,
            epochs: self.epochs,
            lr: self.lr,
            eps: self.eps,
            num_z: self.num_z,
            user_frac: self.user_frac,
            item_frac: self.item_frac,
            seed: self.seed,
            out: self.out,
            dim: self.dim,
            mf_epochs: self.mf_epochs,
            mf_lambda: self.mf_lambda,
            model_cache: self.model_cache,
        };
        (raw, config)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// File to write
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 300, value_parser = clap::value_parser!(u32).range(1..))]
    users: u32,
    #[arg(long, default_value_t = 400, value_parser = clap::value_parser!(u32).range(1..))]
    items: u32,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error("synthetic generator produced an invalid log: {0}")]
    Synth(#[from] DataError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Harness(e) => e.exit_code() as u8,
            CliError::Csv(_) | CliError::Write { .. } => 2,
            CliError::Synth(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        // Usage problems are configuration errors.
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::ReachSweep(args) => run(ExperimentKind::ReachSweep, args),
        Command::StabSweep(args) => run(ExperimentKind::StabSweep, args),
        Command::BetaSweep(args) => run(ExperimentKind::BetaSweep, args),
        Command::OptimizerCompare(args) => run(ExperimentKind::OptimizerCompare, args),
        Command::GroupReach(args) => run(ExperimentKind::GroupReach, args),
        Command::GroupStab(args) => run(ExperimentKind::GroupStab, args),
        Command::Synth(args) => run_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<(), CliError> {
    let (flags, config_path) = args.into_raw();
    let file = match &config_path {
        Some(path) => RawSettings::from_file(path)?,
        None => RawSettings::default(),
    };
    let cfg = ExperimentConfig::resolve(kind, flags, file)?;
    let report = run_experiment(&cfg)?;

    std::fs::create_dir_all(&cfg.out).map_err(|source| CliError::Write {
        path: cfg.out.display().to_string(),
        source,
    })?;
    let rows_path = cfg.out.join("rows.csv");
    write_rows(&report.rows, &rows_path)?;
    write_summary(&summarize(&report.rows), &cfg.out.join("summary.csv"))?;

    for skip in &report.skips {
        eprintln!("skip: {skip}");
    }
    eprintln!(
        "{}: {} rows, {} skipped, {} ms audit time; wrote {} and summary.csv",
        cfg.experiment.name(),
        report.rows.len(),
        report.skips.len(),
        report.wall_ms,
        rows_path.display(),
    );
    Ok(())
}

fn run_synth(args: SynthArgs) -> Result<(), CliError> {
    let spec = SynthSpec {
        users: args.users,
        items: args.items,
        seed: args.seed,
    };
    let ds = generate(&spec)?;
    let lines = ds.to_movielens_lines();
    std::fs::write(&args.out, lines).map_err(|source| CliError::Write {
        path: args.out.display().to_string(),
        source,
    })?;
    eprintln!(
        "wrote {} interactions for {} users and {} items to {}",
        ds.n_interactions(),
        ds.n_users(),
        ds.n_items(),
        args.out.display(),
    );
    Ok(())
}
