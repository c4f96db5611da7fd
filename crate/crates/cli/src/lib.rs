//! The `arma` command line. [`run`] parses arguments, executes one command
//! and returns the process exit code; failures are also printed to stderr as
//! a single JSON object.
//!
//! Exit codes: 0 ok, 1 internal or output failure, 2 config, 3 data,
//! 4 divergence, 5 numeric precondition, 6 resource cap.

pub mod cache;
mod commands;
pub mod error;
pub mod output;
pub mod source;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

pub use error::{Category, CliError};
pub use output::{Format, RunManifest};

#[derive(Debug, Parser)]
#[command(
    name = "arma",
    version,
    about = "ARMA graph filters and graph neural networks"
)]
pub struct Cli {
    /// Worker threads for parallel kernels (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Layout of tabular outputs.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write its report, learning curves and checkpoint.
    Train(TrainArgs),
    /// Apply a classic graph filter to one feature column.
    Filter(FilterArgs),
    /// Measure per-depth frequency responses of a layer stack.
    Probe(ProbeArgs),
    /// Compare backpropagated gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Time training epochs over a suite of synthetic graphs.
    Bench(BenchArgs),
    /// Load a dataset, run all validation and print its summary.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Model config JSON; every field is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Canonical dataset directory or `synth:{sbm,band,toy-p2}`.
    #[arg(long)]
    pub data: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Filter spec JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: String,
    /// Feature column used as the input signal.
    #[arg(long, default_value_t = 0)]
    pub column: usize,
    /// Graph index for multi-graph datasets.
    #[arg(long, default_value_t = 0)]
    pub graph: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for `synth:` datasets.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Probe spec JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: String,
    #[arg(long, default_value_t = 0)]
    pub feature: usize,
    #[arg(long, default_value_t = 0)]
    pub graph: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Model configs to check; the bundled gcn, cheb and arma configs when omitted.
    #[arg(long)]
    pub config: Vec<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the table and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Suite JSON; the default suite when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the suite seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub data: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Reads a JSON config, reporting a missing file or schema violation as a
/// config error naming the path.
pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::config("io", e.to_string()).at(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::config("schema", e.to_string()).at(path))
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::config("usage", e.to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("{}", err.to_json());
            err.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let format = cli.format;
    let dispatch = || match &cli.command {
        Command::Train(a) => commands::train::run(a, format),
        Command::Filter(a) => commands::filter::run(a, format),
        Command::Probe(a) => commands::probe::run(a, format),
        Command::Gradcheck(a) => commands::gradcheck::run(a, format),
        Command::Bench(a) => commands::bench::run(a, format),
        Command::Validate(a) => commands::validate(a),
    };
    // Without --threads the command runs on the calling thread over rayon's global pool.
    let Some(n) = cli.threads else {
        return dispatch();
    };
    if n == 0 {
        return Err(CliError::config("usage", "--threads must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::new(Category::Resource, "threads", e.to_string()))?;
    pool.install(dispatch)
}
