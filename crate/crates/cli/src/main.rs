use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use gplfm::harness::{run_experiment, Verb};

/// Joint input and state estimation experiments for linear structures.
#[derive(Parser)]
#[command(name = "gplfm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the excitation, truth and noisy measurements.
    Simulate(RunArgs),
    /// Estimate inputs and states with the configured method.
    Estimate(RunArgs),
    /// Maximum-likelihood kernel hyperparameters.
    Optimize(RunArgs),
    /// L-curve tuning of a random-walk baseline.
    Lcurve(RunArgs),
    /// Detectability and transmission-zero checks.
    Diagnose(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (verb, args) = match cli.command {
        Command::Simulate(a) => (Verb::Simulate, a),
        Command::Estimate(a) => (Verb::Estimate, a),
        Command::Optimize(a) => (Verb::Optimize, a),
        Command::Lcurve(a) => (Verb::Lcurve, a),
        Command::Diagnose(a) => (Verb::Diagnose, a),
    };
    let clock = Instant::now();
    let result = run_experiment(&args.config, verb, args.seed).and_then(|bundle| {
        bundle.write_to(&args.out)?;
        Ok(bundle.files.len())
    });
    match result {
        Ok(n) => {
            eprintln!(
                "{}: wrote {n} files to {} in {:.2} s",
                verb.name(),
                args.out.display(),
                clock.elapsed().as_secs_f64()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
