//! `lgrad`: command-line driver for the graph-coordinated diffusion ensemble.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lgrad_core::harness::{self, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(
    name = "lgrad",
    version,
    about = "Train, combine and evaluate toy diffusion agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory for inputs and outputs.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the dataset, train every agent and write the knowledge base.
    TrainAgents(Common),
    /// Build the connectivity graph and its maximum spanning tree.
    BuildGraph(Common),
    /// Train the meta-model and write its checkpoint and loss curve.
    TrainMeta(Common),
    /// Sample images of one class with the trained ensemble.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        label: usize,
        /// Defaults to `eval.n_generated`.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Retrain and evaluate the meta-model on every sub-pool of agents.
    AblateModels(Common),
    /// Compare CCF, PCF and HYBRID graphs.
    AblateConnectivity(Common),
    /// Evaluate each agent and the trained ensemble.
    Metrics(Common),
}

fn load(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, HarnessError> {
    type Cmd = fn(&ExperimentConfig, &Path) -> Result<Vec<PathBuf>, HarnessError>;
    let (common, cmd): (&Common, Cmd) = match &cli.command {
        Command::TrainAgents(c) => (c, harness::cmd_train_agents),
        Command::BuildGraph(c) => (c, harness::cmd_build_graph),
        Command::TrainMeta(c) => (c, harness::cmd_train_meta),
        Command::AblateModels(c) => (c, harness::cmd_ablate_models),
        Command::AblateConnectivity(c) => (c, harness::cmd_ablate_connectivity),
        Command::Metrics(c) => (c, harness::cmd_metrics),
        Command::Generate {
            common,
            label,
            count,
        } => {
            let cfg = load(common)?;
            let count = count.unwrap_or(cfg.eval.n_generated);
            return harness::cmd_generate(&cfg, &common.out, *label, count);
        }
    };
    let cfg = load(common)?;
    cmd(&cfg, &common.out)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
