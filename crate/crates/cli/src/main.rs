use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod data;
mod error;
mod files;
mod models;
mod road;

use config::Config;
use error::Result;

/// Congestion detection, volume prediction and traffic-density nowcast and
/// forecast from per-minute sensor data.
#[derive(Debug, Parser)]
#[command(name = "flowcast", version)]
struct Cli {
    /// `key = value` file with defaults for any long flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic sensor days and their congestion masks.
    Synth(data::SynthArgs),
    /// Label lane days with the congestion heuristics.
    Label(data::LabelArgs),
    /// Train the congestion classifier.
    TrainFc(models::TrainFcArgs),
    /// Train the pre-alarm classifier on shifted targets.
    TrainFp(models::TrainFpArgs),
    /// Train the traffic-volume predictor.
    TrainP(models::TrainPArgs),
    /// Per-minute congestion label and confidence.
    Detect(models::DetectArgs),
    /// Per-minute mean volume forecast per class.
    PredictVolume(models::PredictVolumeArgs),
    /// Road density now, rebuilt segment by segment from the sensors.
    Nowcast(road::NowcastArgs),
    /// Road density ahead from the nowcast and a constant inflow.
    Forecast(road::ForecastArgs),
    /// Relative L1 error curves.
    Eval(road::EvalArgs),
    /// Bottleneck test comparing flux- and density-based boundaries.
    DemoAcademic(road::DemoArgs),
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Synth(a) => data::synth(a, &cfg),
        Command::Label(a) => data::label(a, &cfg),
        Command::TrainFc(a) => models::train_fc(a, &cfg),
        Command::TrainFp(a) => models::train_fp(a, &cfg),
        Command::TrainP(a) => models::train_p(a, &cfg),
        Command::Detect(a) => models::detect(a, &cfg),
        Command::PredictVolume(a) => models::predict_volume(a, &cfg),
        Command::Nowcast(a) => road::nowcast_cmd(a, &cfg),
        Command::Forecast(a) => road::forecast_cmd(a, &cfg),
        Command::Eval(a) => road::eval(a, &cfg),
        Command::DemoAcademic(a) => road::demo_academic(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
