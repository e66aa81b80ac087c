//! Subcommand implementations. Each writes its artifacts into a fresh run
//! directory and returns a short summary for the terminal.

use std::path::PathBuf;

use holokan::analysis::Stability;
use holokan::model::{Model, ModelKind};
use holokan::{SystemId, SystemSpec, Trainable};

use crate::checkpoint::{Architecture, Checkpoint, TrainingMeta};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::experiments::{self, AblationKind};
use crate::pgm::escape_pgm;
use crate::run::{file_sha256, RunDir};
use crate::table::ResultTable;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.csv";

#[derive(Debug)]
pub struct Outcome {
    pub dir: PathBuf,
    pub summary: String,
}

/// A checkpoint argument plus the flags that were given explicitly.
#[derive(Debug, Clone, Default)]
pub struct CheckpointArgs {
    pub path: Option<PathBuf>,
    /// Reference system; defaults to the one the checkpoint was trained on.
    pub system: Option<SystemId>,
    /// Reject checkpoints of another model kind.
    pub model: Option<ModelKind>,
}

struct Loaded {
    model: Model,
    meta: TrainingMeta,
    sha256: String,
    path: PathBuf,
}

fn load(args: &CheckpointArgs, cfg: &ExperimentConfig) -> Result<Loaded> {
    let path = args.path.clone().ok_or_else(|| CliError::Usage("--checkpoint is required".into()))?;
    let (ckpt, model) = match args.model {
        Some(kind) => {
            let (ckpt, model) = Checkpoint::load(&path)?;
            if ckpt.architecture.kind() != kind {
                let expected = Architecture::of(&experiments::new_model(cfg, kind)?);
                return Err(CliError::ArchitectureMismatch {
                    found: ckpt.architecture.describe(),
                    expected: expected.describe(),
                });
            }
            (ckpt, model)
        }
        None => Checkpoint::load(&path)?,
    };
    let sha256 = file_sha256(&path)?;
    Ok(Loaded { model, meta: ckpt.training, sha256, path })
}

fn fmt_table(t: &ResultTable) -> String {
    t.to_csv().trim_end().to_string()
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let trained = experiments::train_model(cfg, cfg.system, cfg.model)?;
    let meta = TrainingMeta::from_history(cfg.system, cfg.seed, &trained.history);
    let mut run = RunDir::create(cfg, "train", &[])?;
    run.write(CHECKPOINT_FILE, &Checkpoint::new(&trained.model, meta.clone()).to_json())?;
    run.write(HISTORY_FILE, &trained.history.to_csv())?;
    let dir = run.finish()?;
    Ok(Outcome {
        summary: format!(
            "trained {} {} for {} steps (best step {}, final mse {:.6})",
            cfg.model, cfg.system, meta.steps_completed, meta.best_step, meta.final_mse
        ),
        dir,
    })
}

const METRICS_COLUMNS: [&str; 6] = ["system", "model", "parameters", "mse", "r_squared", "cr_residual"];

pub fn cmd_evaluate(cfg: &ExperimentConfig, ckpt: &CheckpointArgs, self_check: bool) -> Result<Outcome> {
    cfg.validate()?;
    let mut table = ResultTable::new(&METRICS_COLUMNS);
    let mut run = if self_check {
        let system = ckpt.system.unwrap_or(cfg.system);
        let spec = SystemSpec::new(system);
        let m = experiments::field_metrics(&spec, &spec, cfg)?;
        table.push(vec![system.as_str().into(), "analytic".into(), 0usize.into(), m.mse.into(), m.r_squared.into(), m.cr_residual.into()])?;
        RunDir::create(cfg, "evaluate", &["self-check", system.as_str()])?
    } else {
        let loaded = load(ckpt, cfg)?;
        let system = ckpt.system.unwrap_or(loaded.meta.system);
        let spec = SystemSpec::new(system);
        let m = experiments::field_metrics(&loaded.model, &spec, cfg)?;
        table.push(vec![
            system.as_str().into(),
            loaded.model.kind().to_string().into(),
            loaded.model.parameter_count().into(),
            m.mse.into(),
            m.r_squared.into(),
            m.cr_residual.into(),
        ])?;
        let mut run = RunDir::create(cfg, "evaluate", &[&loaded.sha256, system.as_str()])?;
        run.add_input(&loaded.path)?;
        run
    };
    run.write("metrics.csv", &table.to_csv())?;
    Ok(Outcome { summary: fmt_table(&table), dir: run.finish()? })
}

pub fn cmd_fractal(cfg: &ExperimentConfig, ckpt: &CheckpointArgs, analytic: bool) -> Result<Outcome> {
    cfg.validate()?;
    let (pair, system, source, mut run) = if analytic {
        let system = ckpt.system.unwrap_or(cfg.system);
        let spec = SystemSpec::new(system);
        let pair = experiments::fractal_pair(&spec, &spec, cfg)?;
        (pair, system, "analytic".to_string(), RunDir::create(cfg, "fractal", &["analytic", system.as_str()])?)
    } else {
        let loaded = load(ckpt, cfg)?;
        let system = ckpt.system.unwrap_or(loaded.meta.system);
        let pair = experiments::fractal_pair(&loaded.model, &SystemSpec::new(system), cfg)?;
        let mut run = RunDir::create(cfg, "fractal", &[&loaded.sha256, system.as_str()])?;
        run.add_input(&loaded.path)?;
        (pair, system, loaded.model.kind().to_string(), run)
    };
    run.write("learned.pgm", &escape_pgm(&pair.learned))?;
    run.write("true.pgm", &escape_pgm(&pair.truth))?;
    let mut t = ResultTable::new(&[
        "system",
        "source",
        "resolution",
        "max_iter",
        "mode",
        "agreement",
        "learned_escaped_fraction",
        "true_escaped_fraction",
    ]);
    t.push(vec![
        system.as_str().into(),
        source.into(),
        cfg.fractal_resolution.into(),
        (cfg.max_iter as usize).into(),
        format!("{:?}", cfg.fractal_mode).to_lowercase().into(),
        pair.agreement.into(),
        pair.learned.escaped_fraction().into(),
        pair.truth.escaped_fraction().into(),
    ])?;
    run.write("agreement.csv", &t.to_csv())?;
    Ok(Outcome { summary: fmt_table(&t), dir: run.finish()? })
}

pub fn cmd_lyapunov(cfg: &ExperimentConfig, ckpt: &CheckpointArgs) -> Result<Outcome> {
    cfg.validate()?;
    let loaded = load(ckpt, cfg)?;
    let system = ckpt.system.unwrap_or(loaded.meta.system);
    let spec = SystemSpec::new(system);
    let learned = experiments::lyapunov(&loaded.model, &spec, cfg)?;
    let truth = experiments::lyapunov(&spec, &spec, cfg)?;
    let mut t = lyapunov_table();
    push_lyapunov(&mut t, system, learned.mean_lambda, learned.classification, truth.mean_lambda, truth.classification)?;
    let mut run = RunDir::create(cfg, "lyapunov", &[&loaded.sha256, system.as_str()])?;
    run.add_input(&loaded.path)?;
    run.write("lyapunov.csv", &t.to_csv())?;
    Ok(Outcome { summary: fmt_table(&t), dir: run.finish()? })
}

fn lyapunov_table() -> ResultTable {
    ResultTable::new(&["system", "mean_lambda", "classification", "true_mean_lambda", "true_classification"])
}

fn push_lyapunov(
    t: &mut ResultTable,
    system: SystemId,
    lambda: f64,
    class: Stability,
    true_lambda: f64,
    true_class: Stability,
) -> Result<()> {
    t.push(vec![
        system.as_str().into(),
        lambda.into(),
        class.to_string().into(),
        true_lambda.into(),
        true_class.to_string().into(),
    ])
}

fn symbolic_tables(
    system: SystemId,
    fits: &[holokan::symbolic::EdgeFit],
    report: &holokan::symbolic::FamilyReport,
    summary: &mut ResultTable,
) -> Result<ResultTable> {
    summary.push(vec![
        system.as_str().into(),
        system.family().as_str().into(),
        report.detected_family.as_str().into(),
        (report.detected_family == system.family()).into(),
        report.mean_r2.into(),
        report.family_r2.into(),
    ])?;
    let mut edges = ResultTable::new(&[
        "system",
        "layer",
        "from",
        "to",
        "candidate",
        "a",
        "c0",
        "r_squared",
        "range_lo",
        "range_hi",
        "importance",
    ]);
    for f in fits {
        edges.push(vec![
            system.as_str().into(),
            f.layer.into(),
            f.from_node.into(),
            f.to_node.into(),
            f.candidate.as_str().into(),
            f.a.into(),
            f.c0.into(),
            f.r_squared.into(),
            f.active_range.0.into(),
            f.active_range.1.into(),
            f.importance.into(),
        ])?;
    }
    Ok(edges)
}

fn symbolic_summary_table() -> ResultTable {
    ResultTable::new(&["system", "true_family", "detected_family", "correct", "mean_r2", "family_r2"])
}

pub fn cmd_symbolic(cfg: &ExperimentConfig, ckpt: &CheckpointArgs) -> Result<Outcome> {
    cfg.validate()?;
    let loaded = load(ckpt, cfg)?;
    let system = ckpt.system.unwrap_or(loaded.meta.system);
    let (fits, report) = experiments::symbolic(&loaded.model, &SystemSpec::new(system), cfg)?;
    let mut summary = symbolic_summary_table();
    let edges = symbolic_tables(system, &fits, &report, &mut summary)?;
    let mut run = RunDir::create(cfg, "symbolic", &[&loaded.sha256, system.as_str()])?;
    run.add_input(&loaded.path)?;
    run.write("symbolic.csv", &summary.to_csv())?;
    run.write("edges.csv", &edges.to_csv())?;
    Ok(Outcome { summary: fmt_table(&summary), dir: run.finish()? })
}

pub fn cmd_ablate(cfg: &ExperimentConfig, kind: AblationKind) -> Result<Outcome> {
    cfg.validate()?;
    let t = experiments::ablation_table(kind, &experiments::ablate(cfg, kind)?)?;
    let mut run = RunDir::create(cfg, "ablate", &[kind.as_str()])?;
    run.write(&format!("ablate_{}.csv", kind.as_str()), &t.to_csv())?;
    Ok(Outcome { summary: fmt_table(&t), dir: run.finish()? })
}

pub fn cmd_noise(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let t = experiments::noise_table(&experiments::noise(cfg)?)?;
    let mut run = RunDir::create(cfg, "noise", &[])?;
    run.write("noise.csv", &t.to_csv())?;
    Ok(Outcome { summary: fmt_table(&t), dir: run.finish()? })
}

pub fn cmd_transfer(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let t = experiments::transfer_table(&experiments::transfer(cfg)?)?;
    let mut run = RunDir::create(cfg, "transfer", &[])?;
    run.write("transfer.csv", &t.to_csv())?;
    Ok(Outcome { summary: fmt_table(&t), dir: run.finish()? })
}

/// Every table in one run directory: per-system checkpoints and histories,
/// accuracy and CR residuals, symbolic families, fractal agreement,
/// Lyapunov classes, the three ablations, noise and transfer.
pub fn cmd_reproduce_all(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<Outcome> {
    cfg.validate()?;
    let mut run = RunDir::create(cfg, "reproduce-all", &[])?;
    let mut metrics = ResultTable::new(&METRICS_COLUMNS);
    let mut symbolic = symbolic_summary_table();
    let mut all_edges: Option<ResultTable> = None;
    let mut fractal = ResultTable::new(&["system", "agreement", "learned_escaped_fraction", "true_escaped_fraction"]);
    let mut lyap = lyapunov_table();

    for system in SystemId::ALL {
        for kind in [ModelKind::Kan, ModelKind::Mlp] {
            if system == SystemId::PotentialFlow && kind == ModelKind::Mlp {
                continue;
            }
            progress(&format!("training {kind} on {system}"));
            let c = ExperimentConfig { system, model: kind, ..cfg.clone() };
            let t = experiments::train_model(&c, system, kind)?;
            let meta = TrainingMeta::from_history(system, cfg.seed, &t.history);
            run.write(&format!("checkpoints/{system}_{kind}.json"), &Checkpoint::new(&t.model, meta).to_json())?;
            run.write(&format!("history/{system}_{kind}.csv"), &t.history.to_csv())?;
            let m = experiments::field_metrics(&t.model, &t.spec, cfg)?;
            metrics.push(vec![
                system.as_str().into(),
                kind.to_string().into(),
                t.model.parameter_count().into(),
                m.mse.into(),
                m.r_squared.into(),
                m.cr_residual.into(),
            ])?;
            if kind == ModelKind::Mlp || system == SystemId::PotentialFlow {
                continue;
            }
            let (fits, report) = experiments::symbolic(&t.model, &t.spec, cfg)?;
            let edges = symbolic_tables(system, &fits, &report, &mut symbolic)?;
            match &mut all_edges {
                Some(acc) => {
                    for row in edges.rows() {
                        acc.push(row.clone())?;
                    }
                }
                None => all_edges = Some(edges),
            }
            let pair = experiments::fractal_pair(&t.model, &t.spec, cfg)?;
            run.write(&format!("fractal/{system}_learned.pgm"), &escape_pgm(&pair.learned))?;
            run.write(&format!("fractal/{system}_true.pgm"), &escape_pgm(&pair.truth))?;
            fractal.push(vec![
                system.as_str().into(),
                pair.agreement.into(),
                pair.learned.escaped_fraction().into(),
                pair.truth.escaped_fraction().into(),
            ])?;
            let learned = experiments::lyapunov(&t.model, &t.spec, cfg)?;
            let truth = experiments::lyapunov(&t.spec, &t.spec, cfg)?;
            push_lyapunov(&mut lyap, system, learned.mean_lambda, learned.classification, truth.mean_lambda, truth.classification)?;
        }
    }
    run.write("accuracy.csv", &metrics.to_csv())?;
    run.write("symbolic.csv", &symbolic.to_csv())?;
    if let Some(edges) = all_edges {
        run.write("symbolic_edges.csv", &edges.to_csv())?;
    }
    run.write("fractal.csv", &fractal.to_csv())?;
    run.write("lyapunov.csv", &lyap.to_csv())?;

    for kind in [AblationKind::Cr, AblationKind::Grid, AblationKind::Width] {
        progress(&format!("ablation sweep: {}", kind.as_str()));
        let t = experiments::ablation_table(kind, &experiments::ablate(cfg, kind)?)?;
        run.write(&format!("ablate_{}.csv", kind.as_str()), &t.to_csv())?;
    }
    progress("noise sweep");
    run.write("noise.csv", &experiments::noise_table(&experiments::noise(cfg)?)?.to_csv())?;
    progress("transfer");
    run.write("transfer.csv", &experiments::transfer_table(&experiments::transfer(cfg)?)?.to_csv())?;

    let dir = run.finish()?;
    Ok(Outcome { summary: format!("wrote all tables to {}", dir.display()), dir })
}
