//! Command-line front end: config-driven dataset generation, training,
//! evaluation and model comparison.

pub mod commands;
pub mod config;
pub mod error;
pub mod store;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::Context;
use crate::config::ExperimentConfig;
use crate::error::CliResult;

pub const OUT_ENV: &str = "QEGM_OUT_DIR";
const DEFAULT_OUT: &str = "qegm-out";

#[derive(Debug, Parser)]
#[command(name = "qegm", version, about = "Train and evaluate a hybrid circuit-latent generative model on rare-event data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed of the stage being run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replace existing output.
    #[arg(long)]
    pub force: bool,
    /// Output root; falls back to the environment, then the config file.
    #[arg(long, env = OUT_ENV)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample or ingest data, label rare events, split and standardize.
    GenerateData(CommonArgs),
    /// Train the configured model on the generated dataset.
    Train(CommonArgs),
    /// Compute tail KL, rare recall, coverage and Wasserstein on the test split.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint to evaluate; defaults to the train stage output.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compare QEGM against the baseline across seeds, or named checkpoints.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Named checkpoint, repeatable.
        #[arg(long = "checkpoint", value_name = "NAME=PATH")]
        checkpoints: Vec<String>,
    },
}

impl CommonArgs {
    pub fn context(&self) -> CliResult<Context> {
        let config = ExperimentConfig::load(&self.config)?;
        let out = match (&self.out, &config.output.dir) {
            (Some(o), _) => o.clone(),
            (None, Some(d)) => config.resolve(d),
            (None, None) => PathBuf::from(DEFAULT_OUT),
        };
        Ok(Context {
            config,
            out,
            seed: self.seed,
            force: self.force,
        })
    }
}

/// Runs one command and returns the lines to print.
pub fn run(cli: &Cli) -> CliResult<Vec<String>> {
    match &cli.command {
        Command::GenerateData(args) => {
            let dir = commands::generate_data(&args.context()?)?;
            Ok(vec![format!("dataset written to {}", dir.display())])
        }
        Command::Train(args) => {
            let (dir, report) = commands::train_command(&args.context()?)?;
            let mut lines = vec![format!("checkpoint written to {}", dir.display())];
            if let Some(last) = report.epochs.last() {
                lines.push(format!(
                    "epochs {} best {:?} val hybrid {:.6} circuit evaluations {}",
                    report.epochs.len(),
                    report.best_epoch,
                    last.val.hybrid,
                    report.circuit_evaluations
                ));
            }
            Ok(lines)
        }
        Command::Evaluate { common, checkpoint } => {
            let (dir, r) = commands::evaluate_command(&common.context()?, checkpoint.as_deref())?;
            Ok(vec![
                format!("metrics written to {}", dir.display()),
                format!(
                    "tail_kl {:.6} rare_recall {:.6} coverage_error {:.6} wasserstein_1d {:.6}",
                    r.tail_kl, r.rare_recall.recall, r.coverage_error, r.wasserstein_1d
                ),
            ])
        }
        Command::Compare { common, checkpoints } => {
            let named = checkpoints
                .iter()
                .map(|c| commands::parse_named_checkpoint(c))
                .collect::<CliResult<Vec<_>>>()?;
            let (dir, cmp) = commands::compare_command(&common.context()?, &named)?;
            let mut lines = vec![format!("comparison written to {}", dir.display())];
            lines.extend(String::from_utf8_lossy(&cmp.table_csv()).lines().map(str::to_string));
            Ok(lines)
        }
    }
}
