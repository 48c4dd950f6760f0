use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use heatkernel_cli::commands::{self, Report};
use heatkernel_cli::config::LoadedConfig;
use heatkernel_cli::{verify, CliError};

/// Schrödinger heat kernels, bound envelopes and weight-class diagnostics.
#[derive(Parser)]
#[command(name = "heatkernel", version)]
struct Cli {
    /// Experiment config (TOML). Defaults to the built-in configs/default.toml.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides `tolerances.compare`.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Seed for randomized test families; overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the configured engine on the grid.
    Kernel,
    /// Fit every configured envelope and report feasibility.
    Bounds,
    /// Reverse Hölder, Muckenhoupt and doubling reports.
    Weights,
    /// Integrate the ansatz ODEs and compare with the closed form.
    Ode,
    /// Chain plan and chained lower bound.
    Chain,
    /// Run the acceptance suite.
    Verify,
}

fn threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("HEATKERNEL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("HEATKERNEL_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<Report, CliError> {
    threads()?;
    let mut cfg = match &cli.config {
        Some(path) => LoadedConfig::from_path(path)?,
        None => LoadedConfig::default_config()?,
    };
    if let Some(tol) = cli.tol {
        if !(tol > 0.0) {
            return Err(CliError::Config(format!("--tol must be positive, got {tol}")));
        }
        cfg.config.tolerances.compare = tol;
    }
    if let Some(seed) = cli.seed {
        cfg.config.seed = seed;
    }
    let out = &cli.out;
    match cli.command {
        Command::Kernel => commands::kernel(&cfg, out, cfg.config.tolerances.compare),
        Command::Bounds => commands::bounds(&cfg, out),
        Command::Weights => commands::weights(&cfg, out),
        Command::Ode => commands::ode(&cfg, out),
        Command::Chain => commands::chain(&cfg, out),
        Command::Verify => verify::verify(&cfg, out).map(|(_, report)| report),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => {
            for line in &report.lines {
                println!("{line}");
            }
            for path in &report.artifacts {
                println!("wrote {}", path.display());
            }
            if report.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("heatkernel: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
