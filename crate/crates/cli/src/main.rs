use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use poptail_cli::commands;
use poptail_cli::ExperimentConfig;
use poptail_core::Algorithm;

/// Temporal long-tail re-ranking experiments.
#[derive(Debug, Parser)]
#[command(name = "poptail", version, about)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true, default_value = "poptail.toml")]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed; replaces every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse, filter and split the raw ratings into the prepared cache.
    Prepare,
    /// Train the base recommender on the prepared train split.
    Train,
    /// Replay the test users through every configured algorithm.
    Run,
    /// Run one algorithm at several λ values.
    Sweep {
        #[arg(long)]
        algorithm: String,
        /// Comma-separated λ values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        lambdas: Vec<f64>,
    },
}

fn execute(cli: Cli) -> Result<()> {
    let config = ExperimentConfig::load(&cli.config)?.with_overrides(cli.out, cli.seed);
    match cli.command {
        Command::Prepare => {
            let outcome = commands::prepare(&config)?;
            print!("{}", commands::prepare_table(&outcome));
        }
        Command::Train => {
            let outcome = commands::train(&config)?;
            let last = outcome.objective.last().copied().unwrap_or(f64::NAN);
            println!(
                "trained {} sweeps, final objective {last:.6}, checkpoint {}",
                outcome.model.trained_sweeps,
                outcome.dir.display()
            );
        }
        Command::Run => {
            let outcome = commands::run(&config)?;
            print!("{}", commands::summary_table(&outcome.rows));
            println!("wrote {}", outcome.dir.join(commands::SUMMARY_FILE).display());
        }
        Command::Sweep { algorithm, lambdas } => {
            let algorithm: Algorithm = algorithm.parse()?;
            let (rows, path) = commands::sweep(&config, algorithm, &lambdas)?;
            println!("{:>10} {:>12} {:>12}", "lambda", "mean LCR", "mean NDCG");
            for r in rows {
                println!("{:>10} {:>12.6} {:>12.6}", r.lambda, r.mean_lcr, r.mean_ndcg);
            }
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
