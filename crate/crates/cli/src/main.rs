//! Command-line front end for the spectrafw solver library.
//!
//! Subcommands: `gen` (quadratic-sensing instances), `solve` (one run,
//! CSV trace), `compare` (several runs, combined CSV with relative
//! objectives), `certify` (KKT / strict-complementarity report) and
//! `sketch-demo` (streamed low-rank updates checked against a dense
//! shadow).
//!
//! Exit codes: 0 on success, 2 for usage or configuration problems
//! (including malformed instance files), 3 for numerical failures.
//! Identical command lines with identical seeds reproduce CSVs bit for
//! bit except for the `wall_time_s` column. `SPECTRAFW_THREADS` caps
//! internal parallelism.

mod commands;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spectrafw::error::Error;

#[derive(Parser)]
#[command(
    name = "spectrafw",
    version,
    about = "Frank-Wolfe style solvers over the trace-bounded PSD cone"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a quadratic-sensing instance directory.
    Gen(commands::GenArgs),
    /// Run one solver on an instance and write its CSV trace.
    Solve(commands::SolveArgs),
    /// Run several solvers on one instance; combined CSV with relative
    /// objectives against the best run.
    Compare(commands::CompareArgs),
    /// Certify an iterate: ranks, eigengap, strict complementarity and
    /// the quadratic-growth constant.
    Certify(commands::CertifyArgs),
    /// Stream random low-rank updates through the sketch and compare
    /// the reconstruction against a dense shadow.
    SketchDemo(commands::SketchDemoArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(args) => commands::cmd_gen(args),
        Command::Solve(args) => commands::cmd_solve(args),
        Command::Compare(args) => commands::cmd_compare(args),
        Command::Certify(args) => commands::cmd_certify(args),
        Command::SketchDemo(args) => commands::cmd_sketch_demo(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err {
                Error::Input(_) | Error::Config(_) | Error::Io(_) | Error::Parse { .. } => 2u8,
                Error::Convergence { .. } | Error::Numerical(_) | Error::Certificate(_) => 3u8,
            })
        }
    }
}
