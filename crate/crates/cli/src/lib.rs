//! Pipeline orchestration behind the `neuroprobe` binary.

pub mod artifacts;
pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use neuroprobe::Precision;

pub use artifacts::{CliError, CliResult, ExitKind};
pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "neuroprobe", version, about = "Find and steer the FFN neurons behind multiple-choice answers")]
pub struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config value, e.g. `--set attribution.k=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Artifact root directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the effective configuration.
    Config,
    /// Generate task data and the vocabulary.
    Gen,
    /// Train a model on the generated tasks.
    Train,
    /// Build and verify the planted-circuit model.
    Plant,
    /// Attribute good and bad neurons.
    Attribute,
    /// Build intervention plans over the ratio sweep.
    Intervene,
    /// Evaluate the plans.
    Eval,
    /// Write summary tables.
    Report,
    /// gen, train or plant, attribute, intervene, eval, report.
    Run,
}

impl Cli {
    pub fn config(&self) -> CliResult<RunConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        if let Some(w) = self.workers {
            overrides.push(format!("workers={w}"));
        }
        if let Some(o) = &self.out {
            overrides.push(format!("paths.root={}", toml::Value::String(o.display().to_string())));
        }
        RunConfig::load(self.config.as_deref(), &overrides)
    }
}

fn dispatch<T: neuroprobe::Scalar>(cmd: &Command, cfg: &RunConfig) -> CliResult<()> {
    use commands::*;
    match cmd {
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
        Command::Gen => cmd_gen(cfg),
        Command::Train => cmd_train::<T>(cfg),
        Command::Plant => cmd_plant::<T>(cfg),
        Command::Attribute => cmd_attribute::<T>(cfg),
        Command::Intervene => cmd_intervene(cfg),
        Command::Eval => cmd_eval::<T>(cfg),
        Command::Report => cmd_report::<T>(cfg),
        Command::Run => cmd_run::<T>(cfg),
    }
}

/// Runs one command; the error carries the exit code.
pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = cli.config()?;
    if cfg.workers > 0 {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global();
    }
    match cfg.precision {
        Precision::F32 => dispatch::<f32>(&cli.command, &cfg),
        Precision::F64 => dispatch::<f64>(&cli.command, &cfg),
    }
}
