//! Batch frontend for the reproduction-number estimation pipeline.
//!
//! Subcommands: `estimate` (parameter tables), `ci` (bootstrap confidence
//! intervals), `gof` (goodness-of-fit scan), `simulate` (cluster-tracing
//! scenarios) and `rerun` (replay a run manifest). Every run writes a
//! manifest next to its outputs; replaying the manifest reproduces the
//! outputs byte for byte.

mod commands;
mod manifest;
mod svg;
mod tables;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use reprodist_core::Error as CoreError;

/// Exit codes: 0 ok, 1 usage or configuration, 2 input/parse, 3
/// insufficient data, 4 internal.
fn exit_code(err: &CoreError) -> i32 {
    match err {
        CoreError::Params(_) | CoreError::Config(_) => 1,
        CoreError::Parse { .. }
        | CoreError::Duplicate { .. }
        | CoreError::DateGap(_)
        | CoreError::DateRange(_)
        | CoreError::Io(_) => 2,
        CoreError::InsufficientData(_) | CoreError::Underdispersed { .. } => 3,
    }
}

#[derive(Parser)]
#[command(
    name = "reprodist",
    version,
    about = "Estimate the time-varying Negative Binomial distribution of the individual reproduction number from daily district-level case counts"
)]
struct Cli {
    /// Worker threads for replicate generation (default: all cores, or
    /// the REPRODIST_THREADS environment variable). Never affects results.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate per-date Negative Binomial parameters and derived
    /// probabilities per reporting rate.
    Estimate(commands::EstimateArgs),
    /// Bootstrap confidence intervals for the mean reproduction number.
    Ci(commands::CiArgs),
    /// Goodness-of-fit scan of the Negative Binomial hypothesis over
    /// admissible dates.
    Gof(commands::GofArgs),
    /// Branching-process simulation of cluster-tracing interventions.
    Simulate(commands::SimulateArgs),
    /// Replay a run manifest, reproducing its outputs byte-identically.
    Rerun(RerunArgs),
}

#[derive(Args)]
struct RerunArgs {
    /// Path to a manifest written by a previous run.
    manifest: std::path::PathBuf,
}

fn init_threads(requested: Option<usize>) {
    let threads = requested.or_else(|| {
        std::env::var("REPRODIST_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        // Ignore failure: the pool can only be built once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

/// `argv` is the invocation being executed (without the binary name); the
/// manifest records it so a rerun replays the original, not `rerun` itself.
fn dispatch(cli: Cli, argv: Vec<String>) -> Result<(), CoreError> {
    init_threads(cli.threads);
    match cli.command {
        Command::Estimate(args) => commands::run_estimate(&args, &argv),
        Command::Ci(args) => commands::run_ci(&args, &argv),
        Command::Gof(args) => commands::run_gof(&args, &argv),
        Command::Simulate(args) => commands::run_simulate(&args, &argv),
        Command::Rerun(args) => {
            let recorded = manifest::RunManifest::load(&args.manifest)?;
            recorded.verify_inputs()?;
            let argv = recorded.argv;
            let full = std::iter::once("reprodist".to_string()).chain(argv.iter().cloned());
            match Cli::try_parse_from(full) {
                Ok(cli) => dispatch(cli, argv),
                Err(e) => Err(CoreError::Config(format!(
                    "manifest arguments no longer parse: {e}"
                ))),
            }
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version displays are not errors.
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    let argv: Vec<String> = std::env::args().skip(1).collect();
    if let Err(err) = dispatch(cli, argv) {
        eprintln!("reprodist: {err}");
        std::process::exit(exit_code(&err));
    }
}
