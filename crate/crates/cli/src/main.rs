//! `ssar`: generate instances, run samplers, verify the sampler's invariants
//! and sweep query counts over a parameter grid.

mod config;
mod exit;
mod gen;
mod records;
mod run;
mod sweep;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::SamplerKind;
use exit::Failure;

#[derive(Debug, Parser)]
#[command(name = "ssar", version, about = "Semi-supervised active linear regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset (manifest plus CSVs) or a packing set.
    Gen(GenArgs),
    /// Run a sampler on one instance for a number of seeded trials.
    Run(RunArgs),
    /// Check the sampler's invariants on fresh or stored traces.
    Verify(VerifyArgs),
    /// Mean query counts over a grid of lambda, epsilon or d.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GenKind {
    Random,
    Biased,
    Ridge,
    Kernel,
    LowerBound,
    Packing,
}

#[derive(Debug, Args)]
struct GenArgs {
    kind: GenKind,
    #[arg(long, default_value_t = 2000)]
    n1: usize,
    #[arg(long, default_value_t = 100)]
    n2: usize,
    #[arg(long, default_value_t = 10)]
    d: usize,
    /// Kernel points, or copies per basis vector for the lower-bound instance.
    #[arg(long)]
    n: Option<usize>,
    /// Rank of the generated kernel.
    #[arg(long, default_value_t = 10)]
    rank: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Accuracy parameter of the lower-bound instance and the packing.
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Per-coordinate shift of the labeled rows (biased instances).
    #[arg(long, default_value_t = 1.0)]
    shift: f64,
    #[arg(long, env = "SSAR_SEED", default_value_t = 0)]
    seed: u64,
    /// Output directory (datasets) or file (packing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// File name stem for the manifest and CSVs.
    #[arg(long)]
    stem: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SamplerArgs {
    #[arg(long, value_enum, default_value_t = SamplerKind::Asura)]
    sampler: SamplerKind,
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
    #[arg(long, default_value_t = ssar_core::asura::DEFAULT_C0)]
    c0: f64,
    #[arg(long, default_value_t = ssar_core::baselines::DEFAULT_OVERSAMPLE_C)]
    oversample_c: f64,
    /// Sample size of the uniform sampler.
    #[arg(long, default_value_t = 100)]
    m: usize,
    /// Rerun the adaptive sampler until its output is well balanced.
    #[arg(long)]
    retry: bool,
    #[arg(long, default_value_t = 10)]
    max_restarts: usize,
    /// Force per-iteration invariant assertions on or off (default: on for d <= 64).
    #[arg(long)]
    assert_lemmas: Option<bool>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, env = "SSAR_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Append one record per trial, plus the summary, to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![4usize, 8, 16])]
    dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.25f64, 0.1])]
    eps: Vec<f64>,
    /// Sampler runs per (d, epsilon) pair.
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = ssar_core::asura::DEFAULT_C0)]
    c0: f64,
    #[arg(long, env = "SSAR_SEED", default_value_t = 0)]
    seed: u64,
    /// Only report this check, e.g. `x1-mass-identity`.
    #[arg(long)]
    lemma: Option<String>,
    /// Verify stored traces instead of sampling.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Save the traces that were checked.
    #[arg(long)]
    emit_traces: Option<PathBuf>,
    /// Damage every trace before checking (negative control).
    #[arg(long, value_parser = verify::parse_corruption)]
    corrupt: Option<ssar_core::verify::Corruption>,
    /// Also run the batch-level statistical checks (needs enough runs).
    #[arg(long)]
    statistical: bool,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum SweepParam {
    Lambda,
    Eps,
    D,
}

#[derive(Debug, Args)]
struct SweepArgs {
    param: SweepParam,
    /// Grid values; an empty list gives an empty table.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    values: Vec<f64>,
    /// Take the unlabeled block from this dataset instead of generating one.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    n1: usize,
    #[arg(long, default_value_t = 10)]
    d: usize,
    /// Ridge parameter when it is not the swept quantity.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Accuracy parameter when it is not the swept quantity.
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
    #[arg(long, default_value_t = ssar_core::asura::DEFAULT_C0)]
    c0: f64,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, env = "SSAR_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Append-only record file; grid points already in it are skipped.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Gen(a) => gen::cmd_gen(a),
        Command::Run(a) => run::cmd_run(a),
        Command::Verify(a) => verify::cmd_verify(a),
        Command::Sweep(a) => sweep::cmd_sweep(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::INVALID_CONFIG } else { exit::SUCCESS };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::from(exit::SUCCESS),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
