mod config;
mod report;
mod runner;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Verification lab for transport maps to the standard Gaussian measure.
#[derive(Parser)]
#[command(name = "gma", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the identity/inequality suite for a configured density.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the JSON-lines and CSV reports.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the configured quadrature order.
        #[arg(long)]
        quadrature_order: Option<usize>,
        /// Multiply every tolerance by this factor.
        #[arg(long, default_value_t = 1.0)]
        tolerance_scale: f64,
        /// Worker threads for independent checks (1 = serial).
        #[arg(long)]
        jobs: Option<usize>,
        /// Also write the solved map on a grid to <out>/map.csv.
        #[arg(long)]
        dump_map: bool,
    },
    /// Run a conditional-expectation cascade study.
    Truncation {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        tolerance_scale: f64,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Merge JSON-lines reports into a summary table and a plot-ready CSV.
    Report {
        /// Report files produced by `verify` or `truncation`.
        paths: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Verify { config, out, quadrature_order, tolerance_scale, jobs, dump_map } => {
            runner::cmd_verify(&config, &out, quadrature_order, tolerance_scale, jobs, dump_map)
        }
        Command::Truncation { config, out, tolerance_scale, jobs } => {
            runner::cmd_truncation(&config, &out, tolerance_scale, jobs)
        }
        Command::Report { paths, out } => report::cmd_report(&paths, &out),
    };
    match outcome {
        Ok(all_passed) => {
            if all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
