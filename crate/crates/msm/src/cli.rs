//! Command-line definitions.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use msm_core::keyactions::IsfDenominator;

use crate::commands;

#[derive(Debug, Parser)]
#[command(
    name = "msm",
    version,
    about = "Key-action extraction and multi-state survival models for action logs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rank actions by weighted chi-square and select key actions.
    ExtractKeys(ExtractArgs),
    /// Fit the multi-state survival model by MCMC.
    Fit(FitArgs),
    /// Summarize chain files: posterior means, HPD intervals, group differences.
    Summarize(SummarizeArgs),
    /// Simulate a dataset from a design file.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IsfArg {
    Sequences,
    States,
}

impl From<IsfArg> for IsfDenominator {
    fn from(a: IsfArg) -> Self {
        match a {
            IsfArg::Sequences => IsfDenominator::Sequences,
            IsfArg::States => IsfDenominator::States,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Event log (CSV `respondent_id,action_id,time_min` or JSONL).
    #[arg(long)]
    pub events: PathBuf,
    /// Labels CSV (`respondent_id,correct` or `respondent_id,score`).
    #[arg(long)]
    pub labels: PathBuf,
    /// Full-credit score when the labels file has a `score` column.
    #[arg(long, value_name = "K")]
    pub correct_score: Option<i64>,
    /// Covariates CSV (`respondent_id,<name>...`).
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    /// Column of the covariates file to split on; each partition is processed separately.
    #[arg(long, value_name = "COLUMN", requires = "covariates")]
    pub partition_by: Option<String>,
    /// Partitions processed concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Select exactly N key actions instead of using the elbow.
    #[arg(long, value_name = "N")]
    pub k: Option<usize>,
    #[arg(long, value_enum, default_value = "sequences")]
    pub isf_denominator: IsfArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Key actions: a report.csv from extract-keys or one action id per line.
    #[arg(long)]
    pub keys: PathBuf,
    /// JSON config (priors, mcmc, anchor, init).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed of the first chain; chain j uses seed + j.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Fix kappa and gamma of the first action to 1 in both groups.
    #[arg(long)]
    pub anchor: bool,
    /// Validate inputs and write the manifest without sampling.
    #[arg(long)]
    pub dry_run: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SummarizeArgs {
    /// Chain files written by `fit`.
    #[arg(required = true)]
    pub chains: Vec<PathBuf>,
    /// Key-action list used to flag rows (defaults to the chain header).
    #[arg(long)]
    pub keys: Option<PathBuf>,
    /// HPD mass.
    #[arg(long, default_value_t = 0.95)]
    pub mass: f64,
    /// Also export every difference and tau draw.
    #[arg(long)]
    pub raw_draws: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Design JSON.
    pub design: PathBuf,
    /// Overrides the design seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("MSM_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses arguments, runs the command and maps failures to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::ExtractKeys(a) => commands::extract_keys(a),
        Command::Fit(a) => commands::fit(a),
        Command::Summarize(a) => commands::summarize(a),
        Command::Simulate(a) => commands::simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
