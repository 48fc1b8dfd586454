//! `peerlift`: simulate a social network with notification-queue natural
//! experiments, estimate the peer effect four ways, and adjust A/B results
//! for network externalities.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use commands::{BacktestArgs, EstimateArgs, Model, OutputFormat};
use peerlift_core::backtest::AdjustMode;
use peerlift_core::error::Error;
use peerlift_core::notifqueue::Occasion;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "peerlift",
    about = "Peer-effect simulation, estimation, and A/B backtest adjustment",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a population, graph, schedules, and panel; write the artifact
    /// files plus a manifest.
    Simulate {
        /// Run configuration (`key = value` lines); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the pageview effect of messages received from simulated (or
    /// compatible) artifact files.
    Estimate {
        /// Panel CSV (member_id,week,messages_received,pageviews).
        #[arg(long)]
        panel: PathBuf,
        /// Group assignments CSV; required for --model iv, --all-models,
        /// and --aa-test.
        #[arg(long)]
        assignments: Option<PathBuf>,
        /// Population CSV; required for models with controls.
        #[arg(long)]
        population: Option<PathBuf>,
        /// Schedules CSV; used to exclude notified members from the baseline
        /// sample.
        #[arg(long)]
        schedules: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// One of: ols, ols_controls, fe, iv.
        #[arg(long, conflicts_with = "all_models")]
        model: Option<Model>,
        /// Run all four models and print the comparison table.
        #[arg(long)]
        all_models: bool,
        /// Which natural experiment: anniversary or birthday.
        #[arg(long, default_value = "anniversary")]
        occasion: Occasion,
        /// Run the pre-period Welch A/A test first.
        #[arg(long)]
        aa_test: bool,
        /// HC1 robust standard errors (plain OLS only).
        #[arg(long)]
        robust_se: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output format: csv or md.
        #[arg(long, default_value = "md")]
        format: OutputFormat,
    },
    /// Adjust experiment deltas for message network effects and summarize
    /// the error against unadjusted results.
    Backtest {
        /// Experiment corpus CSV.
        #[arg(long)]
        experiments: Option<PathBuf>,
        /// Generate a synthetic corpus instead of reading one.
        #[arg(long)]
        generate: bool,
        /// Peer-effect coefficient (pageviews per message).
        #[arg(long)]
        beta: f64,
        /// Adjustment mode: absolute or literal.
        #[arg(long, default_value = "absolute")]
        mode: AdjustMode,
        /// Pageview significance threshold for selection.
        #[arg(long)]
        alpha: Option<f64>,
        /// Keep the top N experiments by |message lift|.
        #[arg(long)]
        top_n: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline (simulate, estimate both occasions, backtest)
    /// and write a markdown report.
    Report {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// 0 success; 2 configuration or usage; 3 data or I/O; 4 estimation
/// degeneracy.
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) => 2,
        Error::Csv { .. } | Error::Io(_) | Error::InconsistentInput(_) => 3,
        Error::IllConditioned { .. }
        | Error::NoWithinVariation
        | Error::InsufficientData(_)
        | Error::DivisionDegenerate(_)
        | Error::EmptySelection(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { config, seed, out } => {
            commands::cmd_simulate(config.as_deref(), *seed, out)
        }
        Command::Estimate {
            panel,
            assignments,
            population,
            schedules,
            config,
            model,
            all_models,
            occasion,
            aa_test,
            robust_se,
            out,
            format,
        } => commands::cmd_estimate(&EstimateArgs {
            panel: panel.clone(),
            assignments: assignments.clone(),
            population: population.clone(),
            schedules: schedules.clone(),
            config: config.clone(),
            model: *model,
            all_models: *all_models,
            occasion: *occasion,
            aa_test: *aa_test,
            robust_se: *robust_se,
            out: out.clone(),
            format: *format,
        }),
        Command::Backtest {
            experiments,
            generate,
            beta,
            mode,
            alpha,
            top_n,
            config,
            seed,
            out,
        } => commands::cmd_backtest(&BacktestArgs {
            experiments: experiments.clone(),
            generate: *generate,
            beta: *beta,
            mode: *mode,
            alpha: *alpha,
            top_n: *top_n,
            config: config.clone(),
            seed: *seed,
            out: out.clone(),
        }),
        Command::Report { config, seed, out } => {
            commands::cmd_report(config.as_deref(), *seed, out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
