//! Acceptance criteria 1 to 12, one PASS/FAIL line each.
//!
//! The process exits 0 after reporting every line so that the rest of the
//! workspace suite still runs. Set `HOLOKAN_ACCEPTANCE_STRICT=1` to exit
//! nonzero when any criterion fails.

use std::time::Instant;

use holokan::analysis::{integrate_trajectory, lyapunov_grid, EvalGrid, LyapunovConfig, Stability};
use holokan::model::{KanConfig, KanNetwork, MlpConfig, MlpNetwork, ModelKind};
use holokan::rng::SeededRng;
use holokan::symbolic::{CandidateBasis, Family};
use holokan::systems::Domain;
use holokan::training::{clip_gradient, cr_loss, mse_loss, parameter_gradient, warmup_weight, TrainConfig};
use holokan::{ComplexPoint, InputJacobian, SystemId, SystemSpec, Trainable, VelocityField};
use holokan_cli::experiments::{self, AblationKind, Trained};
use holokan_cli::{Checkpoint, ExperimentConfig, TrainingMeta};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

type Outcome = Result<Verdict, String>;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn total_loss<M: Trainable>(net: &M, batch: &[ComplexPoint], targets: &[ComplexPoint], lambda: f64) -> f64 {
    let (pred, jac): (Vec<ComplexPoint>, Vec<InputJacobian>) =
        batch.iter().map(|&z| net.velocity_and_jacobian(z).unwrap()).unzip();
    mse_loss(&pred, targets).unwrap() + lambda * cr_loss(&jac).unwrap()
}

/// Largest relative error between the reverse-mode gradient and central differences.
fn gradient_error<M: Trainable>(net: &M, rng: &mut SeededRng, lambda: f64) -> f64 {
    let batch: Vec<ComplexPoint> =
        (0..8).map(|_| ComplexPoint::new(rng.uniform_in(-2.0, 2.0), rng.uniform_in(-2.0, 2.0))).collect();
    let targets: Vec<ComplexPoint> =
        (0..8).map(|_| ComplexPoint::new(rng.uniform_in(-3.0, 3.0), rng.uniform_in(-3.0, 3.0))).collect();
    let exact = parameter_gradient(net, &batch, &targets, lambda, true).unwrap().gradient;
    let theta = net.parameters();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for i in 0..theta.len() {
        let mut p = theta.clone();
        p[i] = theta[i] + h;
        probe.set_parameters(&p).unwrap();
        let up = total_loss(&probe, &batch, &targets, lambda);
        p[i] = theta[i] - h;
        probe.set_parameters(&p).unwrap();
        let down = total_loss(&probe, &batch, &targets, lambda);
        worst = worst.max(rel_err(exact[i], (up - down) / (2.0 * h)));
    }
    worst
}

fn jacobian_error<F: VelocityField>(f: &F, rng: &mut SeededRng) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..8 {
        let z = ComplexPoint::new(rng.uniform_in(-2.0, 2.0), rng.uniform_in(-2.0, 2.0));
        let (_, j) = f.velocity_and_jacobian(z).unwrap();
        let fx = (f.velocity(z + h).unwrap() - f.velocity(z - h).unwrap()) / (2.0 * h);
        let dy = ComplexPoint::new(0.0, h);
        let fy = (f.velocity(z + dy).unwrap() - f.velocity(z - dy).unwrap()) / (2.0 * h);
        for (a, b) in [(j.u_x, fx.re), (j.u_y, fy.re), (j.v_x, fx.im), (j.v_y, fy.im)] {
            worst = worst.max(rel_err(a, b));
        }
    }
    worst
}

fn criterion_1() -> Outcome {
    let mut rng = SeededRng::new(2024);
    let (mut grad_worst, mut jac_worst): (f64, f64) = (0.0, 0.0);
    for i in 0..20 {
        let config = KanConfig {
            hidden: 2 + i % 3,
            grid_intervals: 3 + i % 3,
            init_std: 0.5,
            seed: 1000 + i as u64,
            ..KanConfig::default()
        };
        let net = KanNetwork::new(&config).map_err(|e| e.to_string())?;
        for lambda in [0.0, 0.5] {
            grad_worst = grad_worst.max(gradient_error(&net, &mut rng, lambda));
        }
        jac_worst = jac_worst.max(jacobian_error(&net, &mut rng));
    }
    for i in 0..5 {
        let net = MlpNetwork::new(&MlpConfig { hidden: 8, hidden_layers: 2, seed: 2000 + i }).map_err(|e| e.to_string())?;
        for lambda in [0.0, 0.5] {
            grad_worst = grad_worst.max(gradient_error(&net, &mut rng, lambda));
        }
        jac_worst = jac_worst.max(jacobian_error(&net, &mut rng));
    }
    Ok(verdict(
        grad_worst < 1e-3 && jac_worst < 1e-4,
        format!("max gradient rel. error {grad_worst:.2e} (< 1e-3), max Jacobian rel. error {jac_worst:.2e} (< 1e-4)"),
    ))
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for id in SystemId::ALL {
        let spec = SystemSpec::new(id);
        let grid = EvalGrid::for_system(&spec, 100).map_err(|e| e.to_string())?;
        for z in grid.points() {
            let (_, j) = spec.velocity_and_jacobian(z).map_err(|e| e.to_string())?;
            worst = worst.max(j.cr_violation());
        }
    }
    Ok(verdict(worst < 1e-4, format!("max CR residual of the 7 analytic fields {worst:.2e} (< 1e-4)")))
}

fn criterion_3(trained: &[Trained], cfg: &ExperimentConfig) -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for t in trained {
        let r2 = experiments::field_metrics(&t.model, &t.spec, cfg).map_err(|e| e.to_string())?.r_squared;
        pass &= r2 >= 0.90;
        parts.push(format!("{} {r2:.3}", t.spec.id));
    }
    Ok(verdict(pass, format!("R^2 >= 0.90: {}", parts.join(", "))))
}

fn criterion_4(trained: &[Trained], cfg: &ExperimentConfig) -> Outcome {
    let mut correct = 0;
    let mut parts = Vec::new();
    let mut quad_ok = false;
    let mut quad_note = String::new();
    for t in trained {
        let (_, report) = experiments::symbolic(&t.model, &t.spec, cfg).map_err(|e| e.to_string())?;
        let ok = report.detected_family == t.spec.family();
        correct += usize::from(ok);
        parts.push(format!("{}->{}", t.spec.id, report.detected_family));
        if t.spec.id == SystemId::Quadratic {
            let x2 = report.dominant_fits.iter().filter(|f| f.candidate == CandidateBasis::X2).count();
            quad_ok = report.detected_family == Family::PolyX2 && report.family_r2 >= 0.90;
            quad_note = format!("quadratic X2 edges in top {}: {x2}, family R^2 {:.3}", cfg.top_k, report.family_r2);
        }
    }
    Ok(verdict(
        correct >= 5 && quad_ok,
        format!("{correct}/6 correct (need >= 5) [{}]; {quad_note} (need X2 at >= 0.90)", parts.join(", ")),
    ))
}

fn criterion_5(trained: &[Trained], cfg: &ExperimentConfig) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for t in trained {
        let a = experiments::fractal_pair(&t.model, &t.spec, cfg).map_err(|e| e.to_string())?.agreement;
        pass &= a >= 85.0;
        parts.push(format!("{} {a:.1}", t.spec.id));
    }
    Ok(verdict(pass, format!("agreement >= 85%: {}", parts.join(", "))))
}

struct Linear(f64);

impl VelocityField for Linear {
    fn velocity(&self, z: ComplexPoint) -> holokan::Result<ComplexPoint> {
        Ok(self.0 * z)
    }

    fn velocity_and_jacobian(&self, z: ComplexPoint) -> holokan::Result<(ComplexPoint, InputJacobian)> {
        Ok((self.0 * z, InputJacobian { u_x: self.0, v_y: self.0, ..InputJacobian::default() }))
    }
}

fn criterion_6(trained: &[Trained], cfg: &ExperimentConfig) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for t in trained {
        let expected = match t.spec.id {
            SystemId::Quadratic => Some(Stability::Chaotic),
            SystemId::Exponential | SystemId::Sine | SystemId::Cosine | SystemId::MixedExp => Some(Stability::Stable),
            _ => None,
        };
        let report = experiments::lyapunov(&t.model, &t.spec, cfg).map_err(|e| e.to_string())?;
        let mark = match expected {
            Some(e) => {
                pass &= report.classification == e;
                if report.classification == e { "ok" } else { "WRONG" }
            }
            None => "unchecked",
        };
        parts.push(format!("{} {:+.3} {} ({mark})", t.spec.id, report.mean_lambda, report.classification));
    }
    let grid = EvalGrid::square(40, Domain::new(-0.8, 0.8)).map_err(|e| e.to_string())?;
    let contract = lyapunov_grid(&Linear(-0.5), &grid, &LyapunovConfig::default()).map_err(|e| e.to_string())?;
    let expand = lyapunov_grid(&Linear(1.0), &grid, &LyapunovConfig { n_iter: 3, ..LyapunovConfig::default() })
        .map_err(|e| e.to_string())?;
    let linear_err = contract
        .exponents
        .iter()
        .map(|e| (e.unwrap_or(f64::NAN) - 0.5f64.ln()).abs())
        .chain(expand.exponents.iter().map(|e| (e.unwrap_or(f64::NAN) - 2f64.ln()).abs()))
        .fold(0.0, f64::max);
    let linear_ok = linear_err < 1e-9;
    Ok(verdict(
        pass && linear_ok,
        format!("{}; linear maps max |lambda - ln|m|| {linear_err:.1e} (< 1e-9)", parts.join(", ")),
    ))
}

fn criterion_7(cfg: &ExperimentConfig) -> Outcome {
    let rows = experiments::ablate(cfg, AblationKind::Cr).map_err(|e| e.to_string())?;
    let cr: Vec<f64> = rows.iter().map(|r| r.metrics.cr_residual).collect();
    let mse: Vec<f64> = rows.iter().map(|r| r.metrics.mse).collect();
    let monotone = cr.windows(2).all(|w| w[1] <= w[0]);
    let tradeoff = mse[4] > mse[0];
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    Ok(verdict(
        monotone && tradeoff,
        format!(
            "CR residual over lambda_max 0..1 [{}] nonincreasing: {monotone}; MSE [{}] with MSE(1.0) > MSE(0): {tradeoff}",
            fmt(&cr),
            fmt(&mse)
        ),
    ))
}

fn criterion_8(cfg: &ExperimentConfig) -> Outcome {
    let rows = experiments::noise(cfg).map_err(|e| e.to_string())?;
    let last = rows.last().ok_or("no noise rows")?;
    Ok(verdict(
        last.kan_degradation < 2.0 && last.mlp_degradation > last.kan_degradation,
        format!(
            "at 10% noise KAN {:.2}x (< 2.0), MLP {:.2}x (> KAN); clean MSE KAN {:.4}, MLP {:.4}",
            last.kan_degradation, last.mlp_degradation, rows[0].kan_mse, rows[0].mlp_mse
        ),
    ))
}

fn criterion_9(cfg: &ExperimentConfig) -> Outcome {
    let r = experiments::transfer(cfg).map_err(|e| e.to_string())?;
    let imp = r.improvement_pct();
    Ok(verdict(
        r.kan_transfer_mse < r.kan_scratch_mse && imp >= 50.0,
        format!(
            "{}-step transfer MSE {:.3} vs scratch {:.3}: improvement {imp:.1}% (>= 50%)",
            r.steps, r.kan_transfer_mse, r.kan_scratch_mse
        ),
    ))
}

fn criterion_10(quadratic: &Trained) -> Outcome {
    let counts: Vec<usize> = [3, 5, 8, 10]
        .iter()
        .map(|&h| KanNetwork::new(&KanConfig { hidden: h, ..KanConfig::default() }).map(|n| n.parameter_count()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mlp = MlpNetwork::new(&MlpConfig::default()).map_err(|e| e.to_string())?.parameter_count();
    let tc = TrainConfig::default();
    let warm = warmup_weight(0, &tc) == 0.0 && warmup_weight(tc.warmup_steps, &tc) == tc.lambda_max;

    let mut rng = SeededRng::new(5);
    let mut clip_max: f64 = 0.0;
    for _ in 0..1000 {
        let scale = 10f64.powf(rng.uniform_in(-3.0, 3.0));
        let mut g: Vec<f64> = (0..280).map(|_| scale * rng.standard_normal()).collect();
        clip_gradient(&mut g, 1.0);
        clip_max = clip_max.max(g.iter().map(|x| x * x).sum::<f64>().sqrt());
    }

    let meta = TrainingMeta::from_history(SystemId::Quadratic, 42, &quadratic.history);
    let ckpt = Checkpoint::new(&quadratic.model, meta);
    let (_, back) = Checkpoint::from_json(&ckpt.to_json()).map_err(|e| e.to_string())?;
    let bitwise = (0..100).all(|_| {
        let z = ComplexPoint::new(rng.uniform_in(-2.0, 2.0), rng.uniform_in(-2.0, 2.0));
        let (a, b) = (quadratic.model.velocity(z).unwrap(), back.velocity(z).unwrap());
        a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits()
    });

    let pass = counts == [168, 280, 448, 560] && mlp == 4482 && warm && clip_max <= 1.0 + 1e-12 && bitwise;
    Ok(verdict(
        pass,
        format!(
            "KAN counts {counts:?}, MLP {mlp}, warmup endpoints {warm}, max clipped norm {clip_max:.15}, checkpoint bitwise {bitwise}"
        ),
    ))
}

struct Rotation;

impl VelocityField for Rotation {
    fn velocity(&self, z: ComplexPoint) -> holokan::Result<ComplexPoint> {
        Ok(ComplexPoint::i() * z)
    }

    fn velocity_and_jacobian(&self, z: ComplexPoint) -> holokan::Result<(ComplexPoint, InputJacobian)> {
        Ok((ComplexPoint::i() * z, InputJacobian { u_y: -1.0, v_x: 1.0, ..InputJacobian::default() }))
    }
}

fn criterion_11() -> Outcome {
    let horizon = 1.0;
    let exact = (ComplexPoint::i() * horizon).exp();
    let err = |dt: f64| -> Result<f64, String> {
        let t = integrate_trajectory(&Rotation, ComplexPoint::new(1.0, 0.0), horizon, dt, 10.0).map_err(|e| e.to_string())?;
        Ok((t.states.last().ok_or("empty trajectory")? - exact).norm())
    };
    let ratio = err(0.1)? / err(0.05)?;
    let fine = err(0.01)?;
    Ok(verdict(
        (ratio - 16.0).abs() < 1.5 && fine < 1e-6,
        format!("error ratio on halving dt {ratio:.2} (~16), endpoint error at dt=0.01 {fine:.1e} (< 1e-6)"),
    ))
}

fn criterion_12(cfg: &ExperimentConfig) -> Outcome {
    let t = experiments::train_model(cfg, SystemId::PotentialFlow, ModelKind::Kan).map_err(|e| e.to_string())?;
    let r2 = experiments::field_metrics(&t.model, &t.spec, cfg).map_err(|e| e.to_string())?.r_squared;
    Ok(verdict(
        r2.is_finite(),
        format!("excluded from assertion; potential-flow run completed with R^2 {r2:.3}, loss history emitted as CSV"),
    ))
}

fn report(n: usize, title: &str, outcome: Outcome, started: Instant, failures: &mut usize) {
    let secs = started.elapsed().as_secs_f64();
    match outcome {
        Ok(v) => {
            if !v.pass {
                *failures += 1;
            }
            println!("criterion {n:>2} {} {title}: {} [{secs:.1}s]", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        }
        Err(e) => {
            *failures += 1;
            println!("criterion {n:>2} FAIL {title}: error {e} [{secs:.1}s]");
        }
    }
}

fn main() {
    let cfg = ExperimentConfig::default();
    let mut failures = 0;

    let t = Instant::now();
    report(1, "gradient correctness", criterion_1(), t, &mut failures);
    let t = Instant::now();
    report(2, "holomorphic oracle", criterion_2(), t, &mut failures);

    let t = Instant::now();
    let trained: Result<Vec<Trained>, String> = SystemId::PURE
        .iter()
        .map(|&id| experiments::train_model(&cfg, id, ModelKind::Kan).map_err(|e| e.to_string()))
        .collect();
    match &trained {
        Ok(trained) => {
            report(3, "velocity accuracy", criterion_3(trained, &cfg), t, &mut failures);
            let t = Instant::now();
            report(4, "symbolic families", criterion_4(trained, &cfg), t, &mut failures);
            let t = Instant::now();
            report(5, "fractal agreement", criterion_5(trained, &cfg), t, &mut failures);
            let t = Instant::now();
            report(6, "Lyapunov classes", criterion_6(trained, &cfg), t, &mut failures);
        }
        Err(e) => {
            for (n, title) in [(3, "velocity accuracy"), (4, "symbolic families"), (5, "fractal agreement"), (6, "Lyapunov classes")] {
                report(n, title, Err(format!("training failed: {e}")), t, &mut failures);
            }
        }
    }

    let t = Instant::now();
    report(7, "CR ablation trend", criterion_7(&cfg), t, &mut failures);
    let t = Instant::now();
    report(8, "noise robustness trend", criterion_8(&cfg), t, &mut failures);
    let t = Instant::now();
    report(9, "transfer improvement", criterion_9(&cfg), t, &mut failures);
    let t = Instant::now();
    let c10 = match &trained {
        Ok(trained) => criterion_10(&trained[0]),
        Err(e) => Err(format!("training failed: {e}")),
    };
    report(10, "exact counts and round trip", c10, t, &mut failures);
    let t = Instant::now();
    report(11, "RK4 order", criterion_11(), t, &mut failures);
    let t = Instant::now();
    report(12, "desk-scale exclusions", criterion_12(&cfg), t, &mut failures);

    println!("acceptance: {} of 12 criteria passed", 12 - failures);
    if failures > 0 && std::env::var("HOLOKAN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

