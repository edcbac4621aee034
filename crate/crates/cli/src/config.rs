//! Experiment configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use mdimlab::systems::SystemDescriptor;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Kolmogorov,
    Intervals,
    Levelfn,
    TorusChain,
    FiberCheck,
    FullPipeline,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Kolmogorov => "kolmogorov",
            Command::Intervals => "intervals",
            Command::Levelfn => "levelfn",
            Command::TorusChain => "torus-chain",
            Command::FiberCheck => "fiber-check",
            Command::FullPipeline => "full-pipeline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

/// Numeric parameters. Each command reads the ones it needs and falls back
/// to its own defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub k: Option<usize>,
    pub d: Option<f64>,
    pub n: Option<usize>,
    pub q: Option<usize>,
    pub l: Option<usize>,
    pub m: Option<usize>,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub window: Option<u64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    /// Largest interval length for `intervals`.
    pub mesh_bound: Option<f64>,
    /// Width of the ball `U` for `levelfn`.
    pub u_width: Option<f64>,
    /// Angle of the centre of `U` (or `W`).
    pub centre: Option<f64>,
    pub arcs: Option<usize>,
    pub cells: Option<usize>,
    pub arc_overlap: Option<f64>,
    pub cell_overlap: Option<f64>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub kappa: Option<f64>,
    /// Separation radius for fiber counting; defaults to `3·eps`.
    pub sep: Option<f64>,
    pub x_samples: Option<usize>,
    pub blend_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Bound on level-function residuals.
    pub residual: f64,
    /// Agreement tolerance of windowed observable values.
    pub fiber: f64,
    /// Required covered fraction for sampled multiplicity audits.
    pub coverage: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { residual: 1e-6, fiber: 1e-9, coverage: 0.99 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    pub dir: Option<PathBuf>,
    pub format: Option<Format>,
    /// File stem; defaults to the command name.
    pub name: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Option<Command>,
    pub system: Option<SystemDescriptor>,
    pub params: Params,
    pub tolerances: Tolerances,
    pub output: Output,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config does not parse: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn seed(&self) -> u64 {
        self.params.seed.unwrap_or(0)
    }
}
