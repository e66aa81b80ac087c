//! In-memory experiment pipelines. The commands write their results to disk;
//! the acceptance suite consumes them directly.

use holokan::analysis::{
    boundary_agreement, escape_mask, evaluate_field, lyapunov_grid, EscapeMask, EvalGrid, FieldMetrics,
    LyapunovReport,
};
use holokan::model::{KanNetwork, MlpNetwork, Model, ModelKind};
use holokan::symbolic::{extract_family, EdgeFit, FamilyReport};
use holokan::systems::Domain;
use holokan::training::{fine_tune, train, TrainHistory};
use holokan::{SystemId, SystemSpec, Trainable, VelocityField};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::table::{Cell, ResultTable};

pub const LAMBDA_SWEEP: [f64; 5] = [0.0, 0.01, 0.1, 0.5, 1.0];
pub const GRID_SWEEP: [usize; 4] = [3, 5, 7, 10];
pub const WIDTH_SWEEP: [usize; 4] = [3, 5, 8, 10];
pub const NOISE_LEVELS: [f64; 4] = [0.0, 0.01, 0.05, 0.10];
/// Published parameter counts for the grid and width sweeps.
pub const PUBLISHED_GRID_PARAMETERS: [usize; 4] = [240, 280, 320, 380];
pub const PUBLISHED_WIDTH_PARAMETERS: [usize; 4] = [168, 280, 448, 560];

pub fn new_model(cfg: &ExperimentConfig, kind: ModelKind) -> Result<Model> {
    Ok(match kind {
        ModelKind::Kan => Model::Kan(KanNetwork::new(&cfg.kan_config())?),
        ModelKind::Mlp => Model::Mlp(MlpNetwork::new(&cfg.mlp_config())?),
    })
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub spec: SystemSpec,
    pub model: Model,
    pub history: TrainHistory,
}

pub fn train_model(cfg: &ExperimentConfig, system: SystemId, kind: ModelKind) -> Result<Trained> {
    cfg.validate()?;
    let spec = SystemSpec::new(system);
    let (model, history) = train(&spec, new_model(cfg, kind)?, &cfg.train_config(kind))?;
    Ok(Trained { spec, model, history })
}

pub fn eval_grid(spec: &SystemSpec, cfg: &ExperimentConfig) -> Result<EvalGrid> {
    Ok(EvalGrid::for_system(spec, cfg.eval_resolution)?)
}

pub fn field_metrics<F: VelocityField>(field: &F, spec: &SystemSpec, cfg: &ExperimentConfig) -> Result<FieldMetrics> {
    Ok(evaluate_field(field, spec, &eval_grid(spec, cfg)?)?)
}

#[derive(Debug, Clone)]
pub struct FractalPair {
    pub learned: EscapeMask,
    pub truth: EscapeMask,
    pub agreement: f64,
}

pub fn fractal_pair<F: VelocityField>(field: &F, spec: &SystemSpec, cfg: &ExperimentConfig) -> Result<FractalPair> {
    let e = cfg.fractal_extent;
    let grid = EvalGrid::square(cfg.fractal_resolution, Domain::new(-e, e))?;
    let fc = cfg.fractal_config();
    let learned = escape_mask(field, &grid, &fc)?;
    let truth = escape_mask(spec, &grid, &fc)?;
    let agreement = boundary_agreement(&learned, &truth)?;
    Ok(FractalPair { learned, truth, agreement })
}

/// Exponents over the system's own domain.
pub fn lyapunov<F: VelocityField>(field: &F, spec: &SystemSpec, cfg: &ExperimentConfig) -> Result<LyapunovReport> {
    let grid = EvalGrid::square(cfg.lyapunov_resolution, spec.domain)?;
    Ok(lyapunov_grid(field, &grid, &cfg.lyapunov_config())?)
}

pub fn symbolic(model: &Model, spec: &SystemSpec, cfg: &ExperimentConfig) -> Result<(Vec<EdgeFit>, FamilyReport)> {
    let net = model
        .as_kan()
        .ok_or_else(|| CliError::Usage("symbolic extraction needs a KAN checkpoint".into()))?;
    Ok(extract_family(net, spec, cfg.symbolic_resolution, cfg.top_k)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AblationKind {
    Cr,
    Grid,
    Width,
}

impl AblationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AblationKind::Cr => "cr",
            AblationKind::Grid => "grid",
            AblationKind::Width => "width",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub value: f64,
    pub parameters: usize,
    pub metrics: FieldMetrics,
    /// Escape-mask agreement with the truth; computed for the CR sweep only.
    pub boundary_agreement: Option<f64>,
}

/// One quadratic KAN per sweep setting.
pub fn ablate(cfg: &ExperimentConfig, kind: AblationKind) -> Result<Vec<AblationRow>> {
    let base = ExperimentConfig { system: SystemId::Quadratic, model: ModelKind::Kan, ..cfg.clone() };
    let settings: Vec<(f64, ExperimentConfig)> = match kind {
        AblationKind::Cr => {
            LAMBDA_SWEEP.iter().map(|&l| (l, ExperimentConfig { lambda_max: l, ..base.clone() })).collect()
        }
        AblationKind::Grid => GRID_SWEEP
            .iter()
            .map(|&g| (g as f64, ExperimentConfig { grid_intervals: g, ..base.clone() }))
            .collect(),
        AblationKind::Width => {
            WIDTH_SWEEP.iter().map(|&h| (h as f64, ExperimentConfig { hidden: h, ..base.clone() })).collect()
        }
    };
    settings
        .into_iter()
        .map(|(value, c)| {
            let t = train_model(&c, SystemId::Quadratic, ModelKind::Kan)?;
            let metrics = field_metrics(&t.model, &t.spec, &c)?;
            let boundary_agreement = match kind {
                AblationKind::Cr => Some(fractal_pair(&t.model, &t.spec, &c)?.agreement),
                _ => None,
            };
            Ok(AblationRow { value, parameters: t.model.parameter_count(), metrics, boundary_agreement })
        })
        .collect()
}

pub fn ablation_table(kind: AblationKind, rows: &[AblationRow]) -> Result<ResultTable> {
    let setting = match kind {
        AblationKind::Cr => "lambda_max",
        AblationKind::Grid => "grid_intervals",
        AblationKind::Width => "hidden",
    };
    let published: &[usize] = match kind {
        AblationKind::Cr => &[],
        AblationKind::Grid => &PUBLISHED_GRID_PARAMETERS,
        AblationKind::Width => &PUBLISHED_WIDTH_PARAMETERS,
    };
    let mut t = ResultTable::new(&[
        setting,
        "parameters",
        "published_parameters",
        "parameters_match",
        "mse",
        "r_squared",
        "cr_residual",
        "boundary_agreement",
    ]);
    for (i, r) in rows.iter().enumerate() {
        let value = if kind == AblationKind::Cr { r.value.into() } else { (r.value as usize).into() };
        let (reference, matches) = match published.get(i) {
            Some(&n) => (n.into(), (n == r.parameters).into()),
            None => (Cell::Empty, Cell::Empty),
        };
        t.push(vec![
            value,
            r.parameters.into(),
            reference,
            matches,
            r.metrics.mse.into(),
            r.metrics.r_squared.into(),
            r.metrics.cr_residual.into(),
            r.boundary_agreement.into(),
        ])?;
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRow {
    pub level: f64,
    pub kan_mse: f64,
    pub kan_degradation: f64,
    pub mlp_mse: f64,
    pub mlp_degradation: f64,
}

/// KAN and MLP trained on noisy quadratic targets, scored against the clean field.
pub fn noise(cfg: &ExperimentConfig) -> Result<Vec<NoiseRow>> {
    let mut raw = Vec::new();
    for &level in &NOISE_LEVELS {
        let c = ExperimentConfig { noise_level: level, ..cfg.clone() };
        let mut mse = [0.0; 2];
        for (slot, kind) in [ModelKind::Kan, ModelKind::Mlp].into_iter().enumerate() {
            let t = train_model(&c, SystemId::Quadratic, kind)?;
            mse[slot] = field_metrics(&t.model, &t.spec, &c)?.mse;
        }
        raw.push((level, mse));
    }
    let (kan0, mlp0) = (raw[0].1[0], raw[0].1[1]);
    Ok(raw
        .into_iter()
        .map(|(level, [k, m])| NoiseRow {
            level,
            kan_mse: k,
            kan_degradation: k / kan0,
            mlp_mse: m,
            mlp_degradation: m / mlp0,
        })
        .collect())
}

pub fn noise_table(rows: &[NoiseRow]) -> Result<ResultTable> {
    let mut t = ResultTable::new(&["noise_pct", "kan_mse", "kan_degradation", "mlp_mse", "mlp_degradation"]);
    for r in rows {
        t.push(vec![
            (100.0 * r.level).into(),
            r.kan_mse.into(),
            r.kan_degradation.into(),
            r.mlp_mse.into(),
            r.mlp_degradation.into(),
        ])?;
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferResult {
    pub steps: usize,
    pub kan_scratch_mse: f64,
    pub kan_transfer_mse: f64,
    pub mlp_scratch_mse: f64,
    pub kan_parameters: usize,
    pub mlp_parameters: usize,
}

impl TransferResult {
    /// Relative MSE reduction of transfer over scratch, in percent.
    pub fn improvement_pct(&self) -> f64 {
        100.0 * (1.0 - self.kan_transfer_mse / self.kan_scratch_mse)
    }
}

/// Quadratic-pretrained KAN fine-tuned on cubic data, against equally short
/// scratch runs of both architectures.
pub fn transfer(cfg: &ExperimentConfig) -> Result<TransferResult> {
    let steps = cfg.transfer_steps;
    let source = train_model(cfg, SystemId::Quadratic, ModelKind::Kan)?;
    let cubic = SystemSpec::new(SystemId::Cubic);
    let short = ExperimentConfig { steps, patience: cfg.patience.min(steps.max(1)), ..cfg.clone() };
    let (tuned, _) = fine_tune(source.model, &cubic, steps, &cfg.train_config(ModelKind::Kan))?;
    let kan = train_model(&short, SystemId::Cubic, ModelKind::Kan)?;
    let mlp = train_model(&short, SystemId::Cubic, ModelKind::Mlp)?;
    Ok(TransferResult {
        steps,
        kan_scratch_mse: field_metrics(&kan.model, &cubic, cfg)?.mse,
        kan_transfer_mse: field_metrics(&tuned, &cubic, cfg)?.mse,
        mlp_scratch_mse: field_metrics(&mlp.model, &cubic, cfg)?.mse,
        kan_parameters: kan.model.parameter_count(),
        mlp_parameters: mlp.model.parameter_count(),
    })
}

pub fn transfer_table(r: &TransferResult) -> Result<ResultTable> {
    let mut t = ResultTable::new(&["method", "steps", "final_mse", "parameters", "improvement_pct"]);
    t.push(vec!["kan_scratch".into(), r.steps.into(), r.kan_scratch_mse.into(), r.kan_parameters.into(), None::<f64>.into()])?;
    t.push(vec![
        "kan_transfer".into(),
        r.steps.into(),
        r.kan_transfer_mse.into(),
        r.kan_parameters.into(),
        r.improvement_pct().into(),
    ])?;
    t.push(vec!["mlp_scratch".into(), r.steps.into(), r.mlp_scratch_mse.into(), r.mlp_parameters.into(), None::<f64>.into()])?;
    Ok(t)
}
