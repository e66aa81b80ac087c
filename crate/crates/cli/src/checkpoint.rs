//! Versioned JSON checkpoints.
//!
//! Parameters are stored in the model's flat order. The `sha256` field is the
//! digest of their IEEE-754 bit patterns (little-endian), so a load can detect
//! any edit to the values.

use std::path::Path;

use holokan::model::{KanNetwork, MlpNetwork, Model, ModelKind};
use holokan::training::TrainHistory;
use holokan::{SystemId, Trainable};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase", deny_unknown_fields)]
pub enum Architecture {
    Kan {
        hidden: usize,
        grid_intervals: usize,
        order: usize,
        input_range: (f64, f64),
        hidden_range: (f64, f64),
    },
    Mlp {
        hidden: usize,
        hidden_layers: usize,
    },
}

impl Architecture {
    pub fn of(model: &Model) -> Self {
        match model {
            Model::Kan(net) => {
                let g1 = net.layer1().grid();
                let g2 = net.layer2().grid();
                Architecture::Kan {
                    hidden: net.hidden(),
                    grid_intervals: net.grid_intervals(),
                    order: net.order(),
                    input_range: (g1.lo(), g1.hi()),
                    hidden_range: (g2.lo(), g2.hi()),
                }
            }
            Model::Mlp(net) => Architecture::Mlp { hidden: net.hidden(), hidden_layers: net.hidden_layers() },
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Architecture::Kan { .. } => ModelKind::Kan,
            Architecture::Mlp { .. } => ModelKind::Mlp,
        }
    }

    /// Builds a network with zero parameters of this shape.
    fn build(&self, params: &[f64]) -> holokan::Result<Model> {
        Ok(match *self {
            Architecture::Kan { hidden, grid_intervals, order, input_range, hidden_range } => Model::Kan(
                KanNetwork::from_parts(hidden, grid_intervals, order, input_range, hidden_range, params)?,
            ),
            Architecture::Mlp { hidden, hidden_layers } => {
                Model::Mlp(MlpNetwork::from_parts(hidden, hidden_layers, params)?)
            }
        })
    }

    fn expected_parameters(&self) -> usize {
        match *self {
            Architecture::Kan { hidden, grid_intervals, order, .. } => 4 * hidden * (grid_intervals + 2 * order + 3),
            Architecture::Mlp { hidden, hidden_layers } => {
                3 * hidden + (hidden_layers - 1) * (hidden * hidden + hidden) + 2 * hidden + 2
            }
        }
    }

    /// Shape comparison that ignores knot ranges, which calibration moves.
    pub fn same_shape(&self, other: &Architecture) -> bool {
        match (self, other) {
            (
                Architecture::Kan { hidden: h1, grid_intervals: g1, order: k1, .. },
                Architecture::Kan { hidden: h2, grid_intervals: g2, order: k2, .. },
            ) => (h1, g1, k1) == (h2, g2, k2),
            (a, b) => a == b,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Architecture::Kan { hidden, grid_intervals, order, .. } => {
                format!("kan [2, {hidden}, 2] G={grid_intervals} k={order}")
            }
            Architecture::Mlp { hidden, hidden_layers } => format!("mlp {hidden_layers}x{hidden} tanh"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMeta {
    pub system: SystemId,
    pub seed: u64,
    pub steps_completed: usize,
    pub best_step: usize,
    pub stopped_early: bool,
    pub final_mse: f64,
    pub final_cr: f64,
    pub final_total: f64,
}

impl TrainingMeta {
    pub fn from_history(system: SystemId, seed: u64, history: &TrainHistory) -> Self {
        let last = history.last().copied().unwrap_or_default();
        Self {
            system,
            seed,
            steps_completed: history.reports.len(),
            best_step: history.best_step,
            stopped_early: history.stopped_early,
            final_mse: last.mse,
            final_cr: last.cr,
            final_total: last.total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u64,
    pub architecture: Architecture,
    pub parameter_count: usize,
    pub parameters: Vec<f64>,
    pub sha256: String,
    pub training: TrainingMeta,
}

pub fn parameter_digest(params: &[f64]) -> String {
    let mut h = Sha256::new();
    for p in params {
        h.update(p.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl Checkpoint {
    pub fn new(model: &Model, training: TrainingMeta) -> Self {
        let parameters = model.parameters();
        Self {
            format_version: FORMAT_VERSION,
            architecture: Architecture::of(model),
            parameter_count: parameters.len(),
            sha256: parameter_digest(&parameters),
            parameters,
            training,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    /// Parses and validates: version, field counts, checksum, then the network.
    pub fn from_json(text: &str) -> Result<(Self, Model)> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Field { field: "document", message: e.to_string() })?;
        let version = raw
            .get("format_version")
            .ok_or(CliError::Field { field: "format_version", message: "missing".into() })?
            .as_u64()
            .ok_or(CliError::Field { field: "format_version", message: "not an unsigned integer".into() })?;
        if version != FORMAT_VERSION {
            return Err(CliError::VersionMismatch { found: version, expected: FORMAT_VERSION });
        }
        let ckpt: Checkpoint =
            serde_json::from_value(raw).map_err(|e| CliError::Field { field: "document", message: e.to_string() })?;
        let expected = ckpt.architecture.expected_parameters();
        if ckpt.parameter_count != expected {
            return Err(CliError::Field {
                field: "parameter_count",
                message: format!("{} does not match {} ({expected})", ckpt.parameter_count, ckpt.architecture.describe()),
            });
        }
        if ckpt.parameters.len() != ckpt.parameter_count {
            return Err(CliError::Field {
                field: "parameters",
                message: format!("has {} values, parameter_count says {}", ckpt.parameters.len(), ckpt.parameter_count),
            });
        }
        let computed = parameter_digest(&ckpt.parameters);
        if computed != ckpt.sha256 {
            return Err(CliError::ChecksumMismatch { stored: ckpt.sha256.clone(), computed });
        }
        let model = ckpt
            .architecture
            .build(&ckpt.parameters)
            .map_err(|e| CliError::Field { field: "architecture", message: e.to_string() })?;
        Ok((ckpt, model))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, Model)> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Io { .. } => e,
            other => CliError::Checkpoint { path: path.to_path_buf(), message: other.to_string() },
        })
    }

    /// Loads and rejects checkpoints whose shape differs from `expected`.
    pub fn load_expecting(path: &Path, expected: &Architecture) -> Result<(Self, Model)> {
        let (ckpt, model) = Self::load(path)?;
        if !ckpt.architecture.same_shape(expected) {
            return Err(CliError::ArchitectureMismatch {
                found: ckpt.architecture.describe(),
                expected: expected.describe(),
            });
        }
        Ok((ckpt, model))
    }
}
