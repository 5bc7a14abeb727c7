//! `hetnet`: experiment orchestration for the HetNet laboratory.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O.

mod experiment;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use experiment::{AppError, ExperimentSpec, Mode};

#[derive(Debug, Parser)]
#[command(name = "hetnet", about = "Stochastic-geometry HetNet laboratory")]
struct Args {
    /// Experiment spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Override the spec's mode.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the realization count.
    #[arg(long)]
    realizations: Option<usize>,
    /// Override the simulation window side in meters.
    #[arg(long)]
    window: Option<f64>,
    /// Worker threads for sweeps and realizations.
    #[arg(long)]
    jobs: Option<usize>,
}

fn run(args: Args) -> Result<(), AppError> {
    let mut spec = ExperimentSpec::load(&args.spec)?;
    if let Some(mode) = args.mode {
        spec.mode = mode;
    }
    if let Some(out) = args.out {
        spec.output = out.to_string_lossy().into_owned();
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(n) = args.realizations {
        spec.realizations = n;
        if matches!(spec.mode, Mode::Simulate | Mode::Compare) && n < 1 {
            return Err(AppError::Config(
                "/realizations: must be >= 1 in simulate/compare modes".into(),
            ));
        }
    }
    if let Some(w) = args.window {
        spec.window = w;
    }
    let spec_dir = args
        .spec
        .parent()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    experiment::run(&spec, &spec_dir, args.jobs)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
