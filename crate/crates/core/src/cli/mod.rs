//! Command-line driver: one subcommand per pipeline stage, all writing into
//! a run directory with a content-addressed manifest.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{execute, Command, Outcome, CACHE, CLASSIFIER, DATA, DATA_MANIFEST, DENOISER, SYNTHETIC, SYNTHETIC_META};
pub use config::{Counts, GuidanceMode, RunConfig};
pub use manifest::{ManifestEntry, RunDir, MANIFEST_FILE};

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "tardiff", version, about = "Influence-guided diffusion for time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Stage,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Key = value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true, default_value = "run")]
    pub out: PathBuf,
    /// Extra `key=value` override; may repeat.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Stage {
    /// Generate (or load), split and normalize the dataset.
    GenData,
    /// Train the downstream classifier.
    TrainClf,
    /// Train the conditional denoiser.
    TrainDiff,
    /// Build the guidance-set gradient cache.
    CacheGrads,
    /// Generate a synthetic dataset.
    Sample,
    /// Train on synthetic, test on real (with the real-data baseline).
    EvalTstr,
    /// Train on real plus synthetic at each mixing ratio.
    EvalTsrtr,
    /// Guidance-scale sweep.
    Sweep,
    /// Gradient norms, fidelity and runtime summary.
    Report,
    /// Print the resolved configuration.
    ShowConfig,
}

impl Stage {
    fn command(self) -> Option<Command> {
        Some(match self {
            Stage::GenData => Command::GenData,
            Stage::TrainClf => Command::TrainClf,
            Stage::TrainDiff => Command::TrainDiff,
            Stage::CacheGrads => Command::CacheGrads,
            Stage::Sample => Command::Sample,
            Stage::EvalTstr => Command::EvalTstr,
            Stage::EvalTsrtr => Command::EvalTsrtr,
            Stage::Sweep => Command::Sweep,
            Stage::Report => Command::Report,
            Stage::ShowConfig => return None,
        })
    }
}

impl CommonArgs {
    /// Defaults, then the config file, then `--set`, then `--seed`.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for pair in &self.overrides {
            cfg.set_pair(pair)?;
        }
        if let Some(seed) = self.seed {
            cfg.set("seed", &seed.to_string())?;
        }
        Ok(cfg)
    }
}

/// Run a parsed invocation, returning what it printed on success.
pub fn run(cli: &Cli) -> Result<String> {
    let cfg = cli.common.resolve()?;
    match cli.command.command() {
        None => Ok(cfg.render()),
        Some(command) => {
            let dir = RunDir::open(&cli.common.out)?;
            let outcome = execute(command, &cfg, &dir)?;
            Ok(serde_json::to_string(&outcome)? + "\n")
        }
    }
}
