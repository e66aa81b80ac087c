//! Flat experiment configuration read from TOML and overridden by flags.

use std::path::{Path, PathBuf};

use holokan::analysis::{FractalConfig, FractalMode, LyapunovConfig};
use holokan::model::{KanConfig, MlpConfig, ModelKind};
use holokan::training::{StopMetric, TrainConfig};
use holokan::SystemId;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Early-stopping metric names accepted in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopMetricName {
    Batch,
    Smoothed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemId,
    pub model: ModelKind,
    pub seed: u64,
    pub out: PathBuf,

    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub lambda_max: f64,
    pub warmup_steps: usize,
    pub clip_norm: f64,
    pub patience: usize,
    pub noise_level: f64,
    pub improvement_tolerance: f64,
    pub stop_metric: StopMetricName,
    pub smoothing: f64,
    pub calibration_step: usize,

    pub hidden: usize,
    pub grid_intervals: usize,
    pub spline_order: usize,
    pub mlp_hidden: usize,
    pub mlp_layers: usize,

    pub eval_resolution: usize,
    pub fractal_resolution: usize,
    /// Half-width of the square fractal window centred on the origin.
    pub fractal_extent: f64,
    pub max_iter: u32,
    pub bailout: f64,
    pub fractal_mode: FractalMode,
    pub lyapunov_resolution: usize,
    pub lyapunov_iter: usize,
    pub lyapunov_dt: f64,
    pub lyapunov_delta0: f64,
    pub symbolic_resolution: usize,
    pub top_k: usize,
    pub transfer_steps: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let kan = KanConfig::default();
        let mlp = MlpConfig::default();
        let lyap = LyapunovConfig::default();
        let fractal = FractalConfig::default();
        Self {
            system: SystemId::Quadratic,
            model: ModelKind::Kan,
            seed: 42,
            out: PathBuf::from("runs"),
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            steps: train.steps,
            lambda_max: train.lambda_max,
            warmup_steps: train.warmup_steps,
            clip_norm: train.clip_norm,
            patience: train.patience,
            noise_level: train.noise_level,
            improvement_tolerance: train.improvement_tolerance,
            stop_metric: StopMetricName::Smoothed,
            smoothing: 0.1,
            calibration_step: train.calibration_step,
            hidden: kan.hidden,
            grid_intervals: kan.grid_intervals,
            spline_order: kan.order,
            mlp_hidden: mlp.hidden,
            mlp_layers: mlp.hidden_layers,
            eval_resolution: 100,
            fractal_resolution: 200,
            fractal_extent: 1.5,
            max_iter: fractal.max_iter,
            bailout: fractal.bailout,
            fractal_mode: fractal.mode,
            lyapunov_resolution: 200,
            lyapunov_iter: lyap.n_iter,
            lyapunov_dt: lyap.dt,
            lyapunov_delta0: lyap.delta0,
            symbolic_resolution: 100,
            top_k: holokan::symbolic::DEFAULT_TOP_K,
            transfer_steps: 100,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|message| CliError::Config { path: path.to_path_buf(), message })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::InvalidConfig(msg));
        self.train_config(self.model).validate().map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        if self.hidden == 0 || self.grid_intervals == 0 {
            return bad("hidden and grid_intervals must be positive".into());
        }
        if self.spline_order > holokan::spline::MAX_ORDER {
            return bad(format!("spline_order must be at most {}", holokan::spline::MAX_ORDER));
        }
        if self.mlp_hidden == 0 || self.mlp_layers == 0 {
            return bad("mlp_hidden and mlp_layers must be positive".into());
        }
        for (name, n) in [
            ("eval_resolution", self.eval_resolution),
            ("fractal_resolution", self.fractal_resolution),
            ("lyapunov_resolution", self.lyapunov_resolution),
            ("symbolic_resolution", self.symbolic_resolution),
            ("lyapunov_iter", self.lyapunov_iter),
            ("top_k", self.top_k),
        ] {
            if n == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive".into());
        }
        for (name, x) in [
            ("fractal_extent", self.fractal_extent),
            ("bailout", self.bailout),
            ("lyapunov_dt", self.lyapunov_dt),
            ("lyapunov_delta0", self.lyapunov_delta0),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return bad(format!("{name} must be positive, got {x}"));
            }
        }
        Ok(())
    }

    /// Training settings for `kind`. The MLP baseline trains on MSE alone.
    pub fn train_config(&self, kind: ModelKind) -> TrainConfig {
        let stop_metric = match self.stop_metric {
            StopMetricName::Batch => StopMetric::Batch,
            StopMetricName::Smoothed => StopMetric::Smoothed(self.smoothing),
        };
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            steps: self.steps,
            lambda_max: self.lambda_max,
            warmup_steps: self.warmup_steps,
            clip_norm: self.clip_norm,
            patience: self.patience,
            seed: self.seed,
            noise_level: self.noise_level,
            improvement_tolerance: self.improvement_tolerance,
            cr_penalty: kind == ModelKind::Kan,
            calibration_step: self.calibration_step,
            stop_metric,
            ..TrainConfig::default()
        }
    }

    pub fn kan_config(&self) -> KanConfig {
        KanConfig {
            hidden: self.hidden,
            grid_intervals: self.grid_intervals,
            order: self.spline_order,
            seed: self.seed,
            ..KanConfig::default()
        }
    }

    pub fn mlp_config(&self) -> MlpConfig {
        MlpConfig { hidden: self.mlp_hidden, hidden_layers: self.mlp_layers, seed: self.seed }
    }

    pub fn fractal_config(&self) -> FractalConfig {
        FractalConfig { max_iter: self.max_iter, bailout: self.bailout, mode: self.fractal_mode }
    }

    pub fn lyapunov_config(&self) -> LyapunovConfig {
        LyapunovConfig {
            n_iter: self.lyapunov_iter,
            delta0: self.lyapunov_delta0,
            dt: self.lyapunov_dt,
            ..LyapunovConfig::default()
        }
    }

    /// First 12 hex digits of the SHA-256 of the command name and the
    /// canonical JSON form of the config, excluding the output directory.
    pub fn run_hash(&self, command: &str, extra: &[&str]) -> String {
        let mut hashed = self.clone();
        hashed.out = PathBuf::new();
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update([0]);
        h.update(serde_json::to_vec(&hashed).expect("config serializes"));
        for e in extra {
            h.update([0]);
            h.update(e.as_bytes());
        }
        hex::encode(h.finalize())[..12].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = ExperimentConfig::from_toml_str("lerning_rate = 0.1").unwrap_err();
        assert!(err.contains("lerning_rate"), "{err}");
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig { system: SystemId::Sine, steps: 77, ..ExperimentConfig::default() };
        assert_eq!(ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { out: "elsewhere".into(), ..a.clone() };
        assert_eq!(a.run_hash("train", &[]), b.run_hash("train", &[]));
        assert_ne!(a.run_hash("train", &[]), a.run_hash("evaluate", &[]));
        let c = ExperimentConfig { seed: 7, ..a.clone() };
        assert_ne!(a.run_hash("train", &[]), c.run_hash("train", &[]));
    }

    #[test]
    fn mlp_trains_without_cr_term() {
        let cfg = ExperimentConfig::default();
        assert!(!cfg.train_config(ModelKind::Mlp).cr_penalty);
        assert!(cfg.train_config(ModelKind::Kan).cr_penalty);
    }

    #[test]
    fn validation_catches_bad_values() {
        assert!(ExperimentConfig::default().validate().is_ok());
        assert!(ExperimentConfig { patience: 900, ..ExperimentConfig::default() }.validate().is_err());
        assert!(ExperimentConfig { bailout: 0.0, ..ExperimentConfig::default() }.validate().is_err());
        assert!(ExperimentConfig { noise_level: 2.0, ..ExperimentConfig::default() }.validate().is_err());
    }
}
