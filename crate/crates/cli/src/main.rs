mod cli;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;
use thiserror::Error;

use cli::{Cli, Command};
use config::RunConfig;

/// Failure of one invocation, mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] tspn_core::Error),
}

impl CliError {
    /// 2 for usage errors, 4 for configuration errors, 3 for bad input data.
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_config() => 4,
            CliError::Core(_) => 3,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load_or_default(cli.config.as_deref())?;
    cfg.validate()?;
    match cli.command {
        Command::GenSynth(a) => commands::gen_synth(cfg, a),
        Command::Train(a) => commands::train_cmd(cfg, a),
        Command::Predict(a) => commands::predict_cmd(cfg, a),
        Command::Baseline(a) => commands::baseline_cmd(cfg, a),
        Command::Eval(a) => commands::eval_cmd(cfg, a),
        Command::Complexity(a) => commands::complexity_cmd(cfg, a),
        Command::Inspect(a) => commands::inspect_cmd(cfg, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
