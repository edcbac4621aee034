//! Batch runner for mdimlab experiments: JSON config in, JSON or CSV report
//! out, exit status 0 (audits pass), 1 (config error) or 2 (audit failure).

pub mod config;
pub mod report;
pub mod run;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{Command, ExperimentConfig, Format};
pub use report::{emit_report, Report};

pub const SEED_ENV: &str = "MDIMLAB_SEED";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("write error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        1
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub env_seed: Option<String>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

/// Applies overrides: the command argument replaces the config's command,
/// the seed comes from `--seed`, else the environment, else the config.
pub fn apply_overrides(mut cfg: ExperimentConfig, o: &Overrides) -> Result<ExperimentConfig, CliError> {
    if let Some(c) = o.command {
        cfg.command = Some(c);
    }
    if let Some(s) = &o.env_seed {
        let seed = s
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV} is not an unsigned integer: {s:?}")))?;
        cfg.params.seed = Some(seed);
    }
    if let Some(s) = o.seed {
        cfg.params.seed = Some(s);
    }
    if let Some(d) = &o.out {
        cfg.output.dir = Some(d.clone());
    }
    if let Some(f) = o.format {
        cfg.output.format = Some(f);
    }
    Ok(cfg)
}

/// Validates, runs and reports. Nothing is written if validation fails.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let exp = run::validate(cfg)?;
    Ok(run::execute(&exp))
}

pub fn output_path(cfg: &ExperimentConfig) -> PathBuf {
    let dir = cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let format = cfg.output.format.unwrap_or_default();
    let stem = cfg
        .output
        .name
        .clone()
        .unwrap_or_else(|| cfg.command.map_or("report", Command::name).to_string());
    dir.join(format!("{stem}.{}", format.extension()))
}

/// Full run from a config file; returns the process exit code.
pub fn run_file(path: &Path, o: &Overrides) -> (i32, Result<(PathBuf, Report), CliError>) {
    let outcome = ExperimentConfig::load(path)
        .and_then(|cfg| apply_overrides(cfg, o))
        .and_then(|cfg| {
            let report = run_experiment(&cfg)?;
            let out = output_path(&cfg);
            emit_report(&report, cfg.output.format.unwrap_or_default(), &out)?;
            Ok((out, report))
        });
    let code = match &outcome {
        Ok((_, r)) if r.passed => 0,
        Ok(_) => 2,
        Err(e) => e.exit_code(),
    };
    (code, outcome)
}
