use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use caf_cli::ablate::{default_grid, run_ablation_grid};
use caf_cli::config::ExperimentConfig;
use caf_cli::pipeline::Pipeline;
use caf_cli::CliError;

/// Constant-acceleration flow experiments on 2D synthetic data.
#[derive(Parser)]
#[command(name = "caf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (TOML).
    #[arg(long, global = true, default_value = "caf.toml")]
    config: PathBuf,

    /// Output directory; artifacts land under `<out>/<config-hash>/`.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the sampler step count N.
    #[arg(long, global = true)]
    steps: Option<usize>,

    /// Override the velocity scale h.
    #[arg(long, global = true)]
    h: Option<f64>,

    /// Re-run phases even when cached artifacts match.
    #[arg(long, global = true)]
    force: bool,

    /// Parallel ablation cells.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train the first-stage rectified-flow net on the stochastic coupling.
    TrainRf,
    /// Build the deterministic coupling by simulating the trained net.
    Reflow,
    /// Train the initial-velocity and acceleration nets.
    TrainCaf,
    /// Generate endpoint samples and trajectory logs.
    Sample,
    /// Invert fresh target points back to sources.
    Invert,
    /// Compute the metric ledger (straightness, coupling preservation,
    /// sliced Wasserstein, round trip).
    Metrics,
    /// Render the trajectory SVG.
    Plot,
    /// Run every phase end to end.
    Pipeline,
    /// Run the A-F ablation grid plus the h sweep.
    Ablate,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut config = ExperimentConfig::from_file(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(steps) = cli.steps {
        config.flow.n_steps = steps;
    }
    if let Some(h) = cli.h {
        config.flow.h = h;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = load_config(cli)?;
    if let Command::Ablate = cli.command {
        let ledger = run_ablation_grid(default_grid(&config), &cli.out, cli.force, cli.jobs)?;
        println!("{}", ledger.display());
        return Ok(());
    }
    let pipeline = Pipeline::new(config, &cli.out, cli.force)?;
    match cli.command {
        Command::TrainRf => {
            pipeline.ensure_rf1()?;
        }
        Command::Reflow => {
            pipeline.ensure_training_coupling()?;
        }
        Command::TrainCaf => {
            pipeline.ensure_bundle()?;
        }
        Command::Sample => {
            pipeline.ensure_samples()?;
        }
        Command::Invert => {
            pipeline.ensure_inversion_artifacts()?;
        }
        Command::Metrics => {
            let ledger = pipeline.ensure_metrics()?;
            println!("{}", ledger.display());
            return Ok(());
        }
        Command::Plot => {
            let svg = pipeline.ensure_plot()?;
            println!("{}", svg.display());
            return Ok(());
        }
        Command::Pipeline => {
            let ledger = pipeline.run_all()?;
            println!("{}", ledger.display());
            return Ok(());
        }
        Command::Ablate => unreachable!("handled above"),
    }
    println!("{}", pipeline.root().display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
