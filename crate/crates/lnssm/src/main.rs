use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lnssm::commands::{self, Context};
use lnssm::config::Preset;
use lnssm::pool::worker_count;

/// Lognormal state space models: simulate, fit, forecast, score, and run
/// the simulation and carbon-model studies.
#[derive(Parser, Debug)]
#[command(name = "lnssm", version)]
struct Cli {
    /// JSON config for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Default sampler and study sizes.
    #[arg(long, global = true, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Simulate a series from a benchmark model.
    Simulate,
    /// Fit a benchmark model by MCMC.
    Fit,
    /// Forecast from a fit directory.
    Forecast,
    /// Score a forecast against held-out data.
    Score,
    /// Run the rolling-origin simulation study.
    Simstudy,
    /// Fit the carbon model to leaf area index by particle MCMC.
    Dalec,
    /// Write fan charts for the toy lognormal and Gaussian systems.
    Demo,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Context {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        preset: cli.preset,
        workers: worker_count(),
    };
    let run = match cli.command {
        Command::Simulate => commands::cmd_simulate,
        Command::Fit => commands::cmd_fit,
        Command::Forecast => commands::cmd_forecast,
        Command::Score => commands::cmd_score,
        Command::Simstudy => commands::cmd_simstudy,
        Command::Dalec => commands::cmd_dalec,
        Command::Demo => commands::cmd_demo,
    };
    match run(&ctx) {
        Ok(outputs) => {
            for o in outputs {
                println!("{}", ctx.out.join(o).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::to_string(&e.record()).expect("serialisable")
            );
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
