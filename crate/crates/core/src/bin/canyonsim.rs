//! Command-line front end for the street-canyon V2V simulator.

use canyonsim::engine::Experiment;
use canyonsim::runner::{run, RunManifest};
use canyonsim::SimError;
use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "canyonsim",
    version,
    about = "Joint V2V communications and radar sensing simulator for mmWave/low-THz street canyons"
)]
struct Cli {
    /// Scenario file (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Experiment to run.
    #[arg(long, value_parser = parse_experiment, default_value = "single")]
    experiment: String,

    /// Output directory (env CANYONSIM_OUT overrides the default).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads; 0 sizes to the machine.
    #[arg(long, default_value_t = 0)]
    jobs: usize,

    /// Skip figure emission.
    #[arg(long, default_value_t = false)]
    no_plots: bool,
}

fn parse_experiment(s: &str) -> Result<String, String> {
    match s {
        "fig4" | "fig5" | "single" => Ok(s.to_string()),
        other => Err(format!("unknown experiment `{other}` (expected fig4, fig5 or single)")),
    }
}

fn experiment_from_str(s: &str) -> Experiment {
    match s {
        "fig4" => Experiment::Fig4,
        "fig5" => Experiment::Fig5,
        _ => Experiment::Single,
    }
}

fn exit_code(err: &SimError) -> u8 {
    match err {
        SimError::Config { .. } | SimError::Parse(_) | SimError::Material(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out_dir = cli
        .out
        .or_else(|| std::env::var_os("CANYONSIM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    let manifest = RunManifest {
        config_path: cli.config,
        out_dir,
        experiment: Some(experiment_from_str(&cli.experiment)),
        seed_override: cli.seed,
        jobs: cli.jobs,
        emit_plots: !cli.no_plots,
    };
    match run(&manifest) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("canyonsim: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
