use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use meanfield::{run, ExperimentConfig, Verb};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    /// Solve the mean-field equation and write `data.csv`.
    Solve,
    /// Write the pair-distance measure, kernel matrices and the A/b/P bundle.
    Assemble,
    /// Plain, L-curve Tikhonov and truncated-SVD estimates with recovery errors.
    Estimate,
    /// Weighted and unweighted spectra of A.
    Spectra,
    /// Picard tables in both norms and their side-by-side comparison.
    Picard,
    /// Eigenvalue range and recovery error over the basis sizes.
    Sweep,
    /// Every artifact of the experiment.
    Report,
}

/// Learn interaction kernels of one-dimensional mean-field equations.
#[derive(Debug, Parser)]
#[command(name = "meanfield", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML experiment configuration; the cubic example when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for noise and particles, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verb = match cli.command {
        Command::Solve => Verb::Solve,
        Command::Assemble => Verb::Assemble,
        Command::Estimate => Verb::Estimate,
        Command::Spectra => Verb::Spectra,
        Command::Picard => Verb::Picard,
        Command::Sweep => Verb::Sweep,
        Command::Report => Verb::Report,
    };
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::default()),
    };
    let result = config.and_then(|mut config| {
        if let Some(out) = cli.out {
            config.output = out;
        }
        if let Some(seed) = cli.seed {
            config.seed = seed;
        }
        run(verb, &config).map(|manifest| (config, manifest))
    });
    match result {
        Ok((config, manifest)) => {
            println!(
                "wrote {} artifacts to {}",
                manifest.len(),
                config.output.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
