//! `lqgsdp`: synthesis of optimal and constrained discounted LQG controllers
//! through a primal occupation-moment SDP and a dual value-function SDP, with
//! Riccati cross-checks and Monte Carlo validation.
//!
//! Exit codes: 0 success, 1 solver failure, 2 input error, 3 check failure.

mod cases;
mod commands;
mod config;
mod error;
mod output;

use clap::{Parser, Subcommand};
use error::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "lqgsdp",
    about = "Discounted LQG controller synthesis via occupation-moment and value-function SDPs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve both SDPs for a config and write the result document.
    Solve {
        /// Path to a JSON experiment config.
        config: PathBuf,
        /// Output directory for result.json.
        #[arg(long)]
        out: PathBuf,
        /// Override the solver tolerance from the config.
        #[arg(long)]
        tol: Option<f64>,
        /// Override the solver iteration cap from the config.
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Run only the Riccati fixed-point oracle and print P, K and the cost.
    Riccati {
        /// Path to a JSON experiment config.
        config: PathBuf,
    },
    /// Solve, extract the policy, roll out seeded closed-loop trajectories
    /// and write trajectory.csv plus estimates.json.
    Simulate {
        /// Path to a JSON experiment config.
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Number of trajectories (defaults to the config's sim.n_traj).
        #[arg(long)]
        trajectories: Option<usize>,
        /// Random seed (defaults to the config's sim.seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Steps per trajectory: an integer or "auto".
        #[arg(long)]
        horizon: Option<String>,
    },
    /// Emit discounted-occupancy ellipse boundary points, optionally sweeping
    /// the first moment bound.
    Ellipse {
        /// Path to a JSON experiment config (two-dimensional state).
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Points per ellipse.
        #[arg(long, default_value_t = 256)]
        points: usize,
        /// Comma-separated bound values to sweep, e.g. "60,40,25,15".
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Run a bundled case study end to end and check its reference
    /// properties.
    Reproduce {
        /// Which case study to run.
        #[arg(value_parser = ["two-state", "helicopter"])]
        case: String,
        /// Output directory for configs, results, trajectories and ellipses.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve {
            config,
            out,
            tol,
            max_iter,
        } => commands::cmd_solve(&config, &out, tol, max_iter),
        Command::Riccati { config } => commands::cmd_riccati(&config),
        Command::Simulate {
            config,
            out,
            trajectories,
            seed,
            horizon,
        } => commands::cmd_simulate(&config, &out, trajectories, seed, horizon),
        Command::Ellipse {
            config,
            out,
            points,
            sweep,
        } => commands::cmd_ellipse(&config, &out, points, sweep),
        Command::Reproduce { case, out } => commands::cmd_reproduce(&case, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
