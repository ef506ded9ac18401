//! `reachcert` — config-driven runner for particle-cloud reachability
//! certification.
//!
//! Exit codes: `0` every asserted check passed; `2` the run completed but
//! a check failed (the report is still written); `1` usage, configuration,
//! or execution error.

// Parameter guards are written as `!(x > 0.0)` on purpose: the negation is
// what routes NaN into the rejection branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod outputs;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use config::Overrides;

#[derive(Parser)]
#[command(
    name = "reachcert",
    version,
    about = "Simulate, certify, and audit weighted particle-cloud dynamics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `out_dir`; default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override for every randomized component.
    #[arg(long)]
    seed: Option<u64>,
    /// Euler step override.
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon override.
    #[arg(long = "T")]
    t_total: Option<f64>,
    /// Shooting-budget override for the terminal-cost optimizer.
    #[arg(long)]
    budget: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the scenario and export trajectory, summary, and decay
    /// series.
    Simulate(RunArgs),
    /// Run the reachability certificate: residual sweep, decay run,
    /// piecewise restarts, admissibility audit.
    Certify(RunArgs),
    /// Minimize the scenario's terminal cost and audit the
    /// dynamic-programming structure of the estimated value.
    Mayer(RunArgs),
    /// Solve the optimal coupling between the scenario's initial cloud and
    /// its target.
    Transport(RunArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version are successful informational exits; real
            // usage errors map to exit code 1.
            let informational =
                matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if informational { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };

    type Runner = fn(&config::Resolved) -> Result<bool, run::RunError>;
    let (args, runner): (&RunArgs, Runner) =
        match &cli.command {
            Command::Simulate(args) => (args, run::simulate),
            Command::Certify(args) => (args, run::certify),
            Command::Mayer(args) => (args, run::mayer),
            Command::Transport(args) => (args, run::transport),
        };

    let overrides = Overrides {
        out: args.out.clone(),
        seed: args.seed,
        dt: args.dt,
        t_total: args.t_total,
        budget: args.budget,
    };
    let resolved = match config::load(&args.config, &overrides) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };

    match runner(&resolved) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more asserted checks failed; see {}", resolved.out_dir.join("report.json").display());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
