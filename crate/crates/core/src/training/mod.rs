//! Losses, the warmup schedule, Adam with clipping, noise injection and the
//! training loops.

mod trajectory;

pub use trajectory::{trajectory_loss, trajectory_loss_and_gradient, TrajectoryConfig};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InputJacobian, OutputAdjoint, Trainable};
use crate::rng::SeededRng;
use crate::systems::{ComplexPoint, SystemSpec};

/// Samples handled by one task when the batch gradient is split across threads.
const GRADIENT_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub lambda_max: f64,
    pub warmup_steps: usize,
    pub clip_norm: f64,
    pub patience: usize,
    pub seed: u64,
    /// Target noise as a fraction of each component's RMS.
    pub noise_level: f64,
    pub improvement_tolerance: f64,
    /// Include the Cauchy–Riemann term. When off, `cr` and `lambda` are logged as 0.
    pub cr_penalty: bool,
    /// Calibrate the hidden knot range once while training from scratch.
    pub calibrate: bool,
    /// Step at which calibration runs; by default the end of warmup.
    pub calibration_step: usize,
    pub calibration_samples: usize,
    pub stop_metric: StopMetric,
}

/// Quantity tracked by early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMetric {
    /// Velocity MSE of the current batch.
    Batch,
    /// Exponential moving average of the batch velocity MSE with this weight
    /// on the newest batch.
    Smoothed(f64),
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            batch_size: 128,
            steps: 500,
            lambda_max: 0.5,
            warmup_steps: 100,
            clip_norm: 1.0,
            patience: 50,
            seed: 42,
            noise_level: 0.0,
            improvement_tolerance: 1e-6,
            cr_penalty: true,
            calibrate: true,
            calibration_step: 100,
            calibration_samples: 2048,
            stop_metric: StopMetric::Smoothed(0.1),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lambda_max >= 0.0 && self.lambda_max.is_finite()) {
            return bad(format!("lambda_max must be non-negative, got {}", self.lambda_max));
        }
        if self.warmup_steps == 0 {
            return bad("warmup_steps must be positive".into());
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        if self.patience == 0 || self.patience > self.steps.max(1) {
            return bad(format!("patience must lie in 1..={}, got {}", self.steps.max(1), self.patience));
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            return bad(format!("noise_level must lie in [0, 1], got {}", self.noise_level));
        }
        if let StopMetric::Smoothed(alpha) = self.stop_metric {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return bad(format!("smoothing weight must lie in (0, 1], got {alpha}"));
            }
        }
        if !(self.improvement_tolerance >= 0.0) {
            return bad("improvement_tolerance must be non-negative".into());
        }
        if self.calibrate && self.calibration_samples == 0 {
            return bad("calibration_samples must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: usize,
    pub mse: f64,
    pub cr: f64,
    pub lambda_cr: f64,
    pub total: f64,
    pub grad_norm_preclip: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub reports: Vec<LossReport>,
    pub stopped_early: bool,
    pub best_step: usize,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "step,mse,cr,lambda,total,grad_norm";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.reports {
            out.push_str(&format!("{},{},{},{},{},{}\n", r.step, r.mse, r.cr, r.lambda_cr, r.total, r.grad_norm_preclip));
        }
        out
    }

    pub fn last(&self) -> Option<&LossReport> {
        self.reports.last()
    }
}

/// `(1/N) Σ [(u - u*)^2 + (v - v*)^2]`.
pub fn mse_loss(pred: &[ComplexPoint], target: &[ComplexPoint]) -> Result<f64> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::InvalidArgument(format!(
            "mse_loss needs equal non-empty batches, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).norm_sqr()).sum::<f64>() / pred.len() as f64)
}

/// Mean squared Cauchy–Riemann violation over a batch.
pub fn cr_loss(jacobians: &[InputJacobian]) -> Result<f64> {
    if jacobians.is_empty() {
        return Err(Error::InvalidArgument("cr_loss needs a non-empty batch".into()));
    }
    Ok(jacobians.iter().map(InputJacobian::cr_violation).sum::<f64>() / jacobians.len() as f64)
}

/// Linear ramp from 0 to `lambda_max` over the warmup steps.
pub fn warmup_weight(step: usize, config: &TrainConfig) -> f64 {
    let ramp = step as f64 / config.warmup_steps as f64 * config.lambda_max;
    ramp.min(config.lambda_max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub mse: f64,
    pub cr: f64,
    pub total: f64,
    pub gradient: Vec<f64>,
}

/// Total loss `mse + lambda·cr` over a batch and its gradient in the parameters.
/// With `with_cr` off only the MSE term is formed and `cr` is reported as 0.
pub fn parameter_gradient<M: Trainable>(
    net: &M,
    batch: &[ComplexPoint],
    targets: &[ComplexPoint],
    lambda_cr: f64,
    with_cr: bool,
) -> Result<LossGradient> {
    if batch.is_empty() || batch.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "batch and targets must be equal and non-empty, got {} and {}",
            batch.len(),
            targets.len()
        )));
    }
    let n = batch.len() as f64;
    let p = net.parameter_count();
    let partials: Vec<(f64, f64, Vec<f64>)> = batch
        .par_chunks(GRADIENT_CHUNK)
        .zip(targets.par_chunks(GRADIENT_CHUNK))
        .map(|(zs, ts)| {
            let mut grad = vec![0.0; p];
            let (mut se, mut cr) = (0.0, 0.0);
            for (&z, &t) in zs.iter().zip(ts) {
                let (f, jac) = net.velocity_and_jacobian(z)?;
                let e = f - t;
                se += e.norm_sqr();
                let mut adj = OutputAdjoint::values_only(2.0 * e.re / n, 2.0 * e.im / n);
                if with_cr {
                    cr += jac.cr_violation();
                    let a = 2.0 * lambda_cr * (jac.u_x - jac.v_y) / n;
                    let b = 2.0 * lambda_cr * (jac.u_y + jac.v_x) / n;
                    adj.u_x = a;
                    adj.v_y = -a;
                    adj.u_y = b;
                    adj.v_x = b;
                }
                net.backward(z, &adj, &mut grad)?;
            }
            Ok((se, cr, grad))
        })
        .collect::<Result<_>>()?;

    let mut gradient = vec![0.0; p];
    let (mut se, mut cr) = (0.0, 0.0);
    for (s, c, g) in partials {
        se += s;
        cr += c;
        gradient.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    let mse = se / n;
    let cr = if with_cr { cr / n } else { 0.0 };
    let total = mse + lambda_cr * cr;
    if !(total.is_finite() && gradient.iter().all(|g| g.is_finite())) {
        return Err(Error::NonFinite("loss gradient"));
    }
    Ok(LossGradient { mse, cr, total, gradient })
}

/// Rescales `g` onto the ball of radius `max_norm`; returns the norm before clipping.
pub fn clip_gradient(g: &mut [f64], max_norm: f64) -> f64 {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        g.iter_mut().for_each(|x| *x *= scale);
    }
    norm
}

/// Adam moments with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::ParameterCount { expected: self.m.len(), found: params.len().max(grad.len()) });
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Adds `Normal(0, (level·rms)^2)` to each component, with `rms` taken per
/// component over the clean targets.
pub fn inject_noise(targets: &[ComplexPoint], level: f64, seed: u64) -> Vec<ComplexPoint> {
    inject_noise_with(targets, level, &mut SeededRng::new(seed))
}

fn inject_noise_with(targets: &[ComplexPoint], level: f64, rng: &mut SeededRng) -> Vec<ComplexPoint> {
    if level == 0.0 || targets.is_empty() {
        return targets.to_vec();
    }
    let n = targets.len() as f64;
    let rms_u = (targets.iter().map(|t| t.re * t.re).sum::<f64>() / n).sqrt();
    let rms_v = (targets.iter().map(|t| t.im * t.im).sum::<f64>() / n).sqrt();
    targets
        .iter()
        .map(|t| {
            let du = rng.normal(0.0, level * rms_u);
            let dv = rng.normal(0.0, level * rms_v);
            ComplexPoint::new(t.re + du, t.im + dv)
        })
        .collect()
}

enum Schedule {
    Warmup,
    Saturated,
}

/// Trains from the given initial network, calibrating the hidden knot range at
/// `config.calibration_step` when `config.calibrate` is set.
pub fn train<M: Trainable>(spec: &SystemSpec, net: M, config: &TrainConfig) -> Result<(M, TrainHistory)> {
    config.validate()?;
    spec.validate()?;
    run(spec, net, config, config.steps, Schedule::Warmup)
}

/// Continues training on `spec` for `steps` steps with fresh optimizer state
/// and the CR weight at `lambda_max` throughout.
pub fn fine_tune<M: Trainable>(net: M, spec: &SystemSpec, steps: usize, config: &TrainConfig) -> Result<(M, TrainHistory)> {
    let config = TrainConfig { steps, patience: config.patience.min(steps.max(1)), ..config.clone() };
    config.validate()?;
    spec.validate()?;
    run(spec, net, &config, steps, Schedule::Saturated)
}

fn run<M: Trainable>(
    spec: &SystemSpec,
    mut net: M,
    config: &TrainConfig,
    steps: usize,
    schedule: Schedule,
) -> Result<(M, TrainHistory)> {
    let mut rng = SeededRng::new(config.seed);
    let mut params = net.parameters();
    let mut adam = Adam::new(params.len());
    let mut history = TrainHistory::default();
    let stop_after = match schedule {
        Schedule::Warmup => config.warmup_steps,
        Schedule::Saturated => 0,
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;
    let mut smoothed: Option<f64> = None;

    for step in 0..steps {
        if config.calibrate && matches!(schedule, Schedule::Warmup) && step == config.calibration_step {
            net.calibrate(spec, config.calibration_samples, config.seed)?;
            params = net.parameters();
        }
        let lambda = match (config.cr_penalty, &schedule) {
            (false, _) => 0.0,
            (true, Schedule::Warmup) => warmup_weight(step, config),
            (true, Schedule::Saturated) => config.lambda_max,
        };
        let batch = spec.sample_with(&mut rng, config.batch_size);
        let clean = batch.iter().map(|&z| spec.velocity(z)).collect::<Result<Vec<_>>>()?;
        let targets = inject_noise_with(&clean, config.noise_level, &mut rng);

        let LossGradient { mse, cr, total, mut gradient } =
            parameter_gradient(&net, &batch, &targets, lambda, config.cr_penalty)
                .map_err(|e| Error::Diverged { step, reason: e.to_string() })?;
        let grad_norm = clip_gradient(&mut gradient, config.clip_norm);
        history.reports.push(LossReport { step, mse, cr, lambda_cr: lambda, total, grad_norm_preclip: grad_norm });

        let metric = match config.stop_metric {
            StopMetric::Batch => mse,
            StopMetric::Smoothed(alpha) => {
                smoothed = Some(smoothed.map_or(mse, |s: f64| s + alpha * (mse - s)));
                smoothed.unwrap()
            }
        };
        if step >= stop_after {
            match &best {
                Some((b, _)) if metric >= b - config.improvement_tolerance => since_best += 1,
                _ => {
                    best = Some((metric, params.clone()));
                    history.best_step = step;
                    since_best = 0;
                }
            }
            if since_best >= config.patience {
                history.stopped_early = true;
                break;
            }
        }

        adam.step(&mut params, &gradient, config.learning_rate)?;
        net.set_parameters(&params)?;
    }

    if history.stopped_early {
        if let Some((_, p)) = best {
            net.set_parameters(&p)?;
        }
    } else if let Some(last) = history.reports.last() {
        history.best_step = last.step;
    }
    Ok((net, history))
}
