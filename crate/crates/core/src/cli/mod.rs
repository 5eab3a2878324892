//! Command-line front end: `train`, `eval`, `gradcheck`, `bench`, `params`
//! and `gen-data`.

mod checkpoint;
mod commands;
mod config;
mod suites;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;

pub use checkpoint::{
    checksum, decode, encode, encode_stored, infer_token_config, load, load_model, save, StoredTensor, MAGIC, VERSION,
};
pub use commands::{eval_rows, BENCH_CSV_HEADER};
pub use config::{RunConfig, KEYS};
pub use suites::{
    all_suites, default_points, default_step, default_tolerance, is_suite, run_suite, SuiteResult, COMPOSITE_SUITES,
    OP_SUITES,
};

pub const EXIT_OK: i32 = 0;
/// Runtime failure, including a divergence abort or a failed check.
pub const EXIT_FAILURE: i32 = 1;
/// Malformed configuration or arguments, unknown suite or preset.
pub const EXIT_USAGE: i32 = 2;
/// Corrupt or unreadable checkpoint.
pub const EXIT_CHECKPOINT: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::Validation(_) => EXIT_USAGE,
        Error::Checksum { .. } | Error::Checkpoint(_) => EXIT_CHECKPOINT,
        _ => EXIT_FAILURE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "rse", version, about = "Residual Shuffle-Exchange networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train on an algorithmic task.
    ///
    /// Takes an optional config file followed by `--key value` overrides,
    /// e.g. `rse train run.cfg --steps 500 --m 32`.
    Train(TrainArgs),
    /// Evaluate a checkpoint at one or more lengths.
    Eval(EvalArgs),
    /// Compare analytic gradients with central differences.
    Gradcheck(GradcheckArgs),
    /// Time the network body across lengths and fit the log-log slope.
    Bench(BenchArgs),
    /// Print the parameter-count breakdown of a preset.
    Params(ParamsArgs),
    /// Write task examples as text fixtures.
    GenData(GenDataArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// `[CONFIG] [--key value ...]`
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "ARGS")]
    args: Vec<String>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "addition")]
    task: String,
    /// Sorting alphabet size.
    #[arg(long)]
    alphabet: Option<usize>,
    /// Comma-separated evaluation lengths.
    #[arg(long, default_value = "64,128,256")]
    lengths: String,
    #[arg(long, default_value_t = 128)]
    examples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training config of the run, for ablation flags and `r`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Metrics CSV to append to; defaults to `eval.csv` beside the checkpoint.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Suite name or `all`.
    #[arg(default_value = "all")]
    scope: String,
    /// Threshold on the maximum relative error (default: 1e-4, 1e-3 for `model`).
    #[arg(long)]
    tol: Option<f64>,
    /// `double` or `single`.
    #[arg(long, default_value = "double")]
    precision: String,
    /// Random points per suite (default depends on the suite).
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Comma-separated lengths; overrides the min/max sweep.
    #[arg(long)]
    lengths: Option<String>,
    #[arg(long, default_value_t = 1024)]
    min_length: usize,
    #[arg(long, default_value_t = 65536)]
    max_length: usize,
    #[arg(long, default_value_t = 48)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    blocks: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Time forward and backward passes.
    #[arg(long)]
    backward: bool,
    /// Also write the latency table to this CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ParamsArgs {
    /// algorithmic, musicnet_shape or lambada_shape.
    preset: String,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long, default_value = "addition")]
    task: String,
    #[arg(long)]
    alphabet: Option<usize>,
    /// Padded length of every example.
    #[arg(long, default_value_t = 64)]
    length: usize,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `full` fills the length; `bucket` draws a length in (L/2, L].
    #[arg(long, default_value = "full")]
    mode: String,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the subcommand, returning the
/// process exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => commands::train(&a.args, out),
        Command::Eval(a) => commands::eval(&a, out),
        Command::Gradcheck(a) => commands::gradcheck(&a, out),
        Command::Bench(a) => commands::bench(&a, out),
        Command::Params(a) => commands::params(&a, out),
        Command::GenData(a) => commands::gen_data(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
