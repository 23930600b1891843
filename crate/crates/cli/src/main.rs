use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ecsi_cli::{commands, CliError, CliResult, PipelineConfig};

/// Energy-consistent stochastic interpolants for 2D turbulence.
#[derive(Debug, Parser)]
#[command(name = "ecsi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON pipeline configuration (defaults are used for missing keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the DNS and write filtered train/test datasets into --out.
    Dns,
    /// Optimize the interpolant coefficients; writes JSON to --out.
    OptimizeInterpolant {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Train the drift network; writes checkpoints and report.csv into --out.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        coeffs: PathBuf,
        /// Continue from the training state in --out if present.
        #[arg(long)]
        resume: bool,
        /// Stop after this many epochs in this invocation.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Generate stochastic rollouts from every test trajectory; writes an ensemble file to --out.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        coeffs: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Compare an ensemble against reference data; writes metric files into --out.
    Evaluate {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
}

fn require_out(out: Option<&Path>) -> CliResult<&Path> {
    out.ok_or_else(|| CliError::config("--out is required"))
}

fn run(cli: &Cli) -> CliResult<()> {
    let cfg = PipelineConfig::load(cli.config.as_deref(), cli.seed)?;
    let out = require_out(cli.out.as_deref())?;
    match &cli.command {
        Command::Dns => commands::dns(&cfg, out),
        Command::OptimizeInterpolant { dataset } => {
            commands::optimize_interpolant(&cfg, dataset, out)
        }
        Command::Train {
            dataset,
            coeffs,
            resume,
            stop_after,
        } => commands::train(&cfg, dataset, coeffs, out, *resume, *stop_after),
        Command::Sample {
            checkpoint,
            coeffs,
            dataset,
        } => commands::sample(&cfg, checkpoint, coeffs, dataset, out),
        Command::Evaluate {
            ensemble,
            reference,
        } => commands::evaluate_cmd(&cfg, ensemble, reference, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
