use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ksum_cli::{cmd_backtest, cmd_disagreement, cmd_frontier, cmd_synth, CliResult, Outcome, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "ksum", version, about = "Multi-agency ESG portfolio selection with the k-worst score")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pairwise agency distances and their averages.
    Disagreement(Common),
    /// Efficient surface over expected return and k-worst score.
    Frontier(Common),
    /// Rolling out-of-sample backtest with metric tables.
    Backtest(Common),
    /// Seeded synthetic prices and score panels.
    Synth(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// k of the k-worst score.
    #[arg(long)]
    k: Option<usize>,
    /// Seed of the synthetic generator.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        config.apply(&Overrides {
            out: self.out.clone(),
            k: self.k,
            seed: self.seed,
        });
        Ok(config)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (common, run): (&Common, fn(&RunConfig) -> CliResult<Outcome>) = match &cli.command {
        Command::Disagreement(c) => (c, cmd_disagreement),
        Command::Frontier(c) => (c, cmd_frontier),
        Command::Backtest(c) => (c, cmd_backtest),
        Command::Synth(c) => (c, cmd_synth),
    };
    match common.resolve().and_then(|config| run(&config)) {
        Ok(outcome) => {
            if outcome.partial_failure {
                log::warn!("finished with solver failures; outputs in {}", outcome.output_dir.display());
            } else {
                log::info!("outputs in {}", outcome.output_dir.display());
            }
            ExitCode::from(outcome.exit_status().code() as u8)
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_status().code() as u8)
        }
    }
}
