//! Trajectory-matching loss: RK4 rollouts under the network against rollouts
//! under the analytic field, differentiated by unrolling the integrator.

use serde::{Deserialize, Serialize};

use crate::analysis::{rk4_step, step_sizes};
use crate::error::{Error, Result};
use crate::model::{OutputAdjoint, Trainable, VelocityField};
use crate::systems::{ComplexPoint, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub horizon: f64,
    pub dt: f64,
    pub bailout: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self { horizon: 0.5, dt: 0.05, bailout: 10.0 }
    }
}

impl TrajectoryConfig {
    fn steps(&self) -> Result<Vec<f64>> {
        if !(self.horizon >= self.dt) {
            return Err(Error::InvalidArgument(format!("horizon {} is shorter than dt {}", self.horizon, self.dt)));
        }
        step_sizes(self.horizon, self.dt)
    }
}

fn guard(z: ComplexPoint, bailout: f64, step: usize, who: &str) -> Result<ComplexPoint> {
    if z.norm() <= bailout {
        Ok(z)
    } else {
        Err(Error::Diverged { step, reason: format!("{who} trajectory left radius {bailout}") })
    }
}

fn diverged(step: usize, who: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Diverged { step, reason: format!("{who} trajectory: {e}") }
}

/// `(1 / (P·N)) Σ_p Σ_{n=1..N} |z_net(t_n) - z_true(t_n)|^2` over `P` initial points.
pub fn trajectory_loss<F: VelocityField>(
    net: &F,
    spec: &SystemSpec,
    initial: &[ComplexPoint],
    config: &TrajectoryConfig,
) -> Result<f64> {
    let steps = config.steps()?;
    if initial.is_empty() {
        return Err(Error::InvalidArgument("trajectory loss needs at least one initial point".into()));
    }
    let mut sum = 0.0;
    for &z0 in initial {
        let (mut a, mut b) = (z0, z0);
        for (n, &h) in steps.iter().enumerate() {
            a = guard(rk4_step(net, a, h).map_err(diverged(n, "model"))?, config.bailout, n, "model")?;
            b = guard(rk4_step(spec, b, h).map_err(diverged(n, "reference"))?, config.bailout, n, "reference")?;
            sum += (a - b).norm_sqr();
        }
    }
    Ok(sum / (initial.len() * steps.len()) as f64)
}

/// Stage inputs of one RK4 step.
struct Stages {
    inputs: [ComplexPoint; 4],
    h: f64,
}

/// Loss and its parameter gradient by reverse-mode through every RK4 stage.
pub fn trajectory_loss_and_gradient<M: Trainable>(
    net: &M,
    spec: &SystemSpec,
    initial: &[ComplexPoint],
    config: &TrajectoryConfig,
) -> Result<(f64, Vec<f64>)> {
    let steps = config.steps()?;
    if initial.is_empty() {
        return Err(Error::InvalidArgument("trajectory loss needs at least one initial point".into()));
    }
    let scale = 1.0 / (initial.len() * steps.len()) as f64;
    let mut grad = vec![0.0; net.parameter_count()];
    let mut sum = 0.0;

    for &z0 in initial {
        let mut z = z0;
        let mut truth = z0;
        let mut tape = Vec::with_capacity(steps.len());
        let mut residuals = Vec::with_capacity(steps.len());
        for (n, &h) in steps.iter().enumerate() {
            let f = |w: ComplexPoint| net.velocity(w).map_err(diverged(n, "model"));
            let k1 = f(z)?;
            let s2 = z + 0.5 * h * k1;
            let k2 = f(s2)?;
            let s3 = z + 0.5 * h * k2;
            let k3 = f(s3)?;
            let s4 = z + h * k3;
            let k4 = f(s4)?;
            tape.push(Stages { inputs: [z, s2, s3, s4], h });
            z = guard(z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), config.bailout, n, "model")?;
            truth = guard(rk4_step(spec, truth, h).map_err(diverged(n, "reference"))?, config.bailout, n, "reference")?;
            let r = z - truth;
            sum += r.norm_sqr();
            residuals.push(r);
        }

        // Adjoints are (d/dx, d/dy) pairs stored in a complex number.
        let mut adj = ComplexPoint::new(0.0, 0.0);
        for (stage, r) in tape.iter().zip(&residuals).rev() {
            adj += 2.0 * scale * r;
            let h = stage.h;
            let mut back = |s: ComplexPoint, k_adj: ComplexPoint| -> Result<ComplexPoint> {
                let (x, y) = net.backward(s, &OutputAdjoint::values_only(k_adj.re, k_adj.im), &mut grad)?;
                Ok(ComplexPoint::new(x, y))
            };
            let mut k_adj = [h / 6.0 * adj, h / 3.0 * adj, h / 3.0 * adj, h / 6.0 * adj];
            let mut z_adj = adj;
            let s4 = back(stage.inputs[3], k_adj[3])?;
            z_adj += s4;
            k_adj[2] += h * s4;
            let s3 = back(stage.inputs[2], k_adj[2])?;
            z_adj += s3;
            k_adj[1] += 0.5 * h * s3;
            let s2 = back(stage.inputs[1], k_adj[1])?;
            z_adj += s2;
            k_adj[0] += 0.5 * h * s2;
            z_adj += back(stage.inputs[0], k_adj[0])?;
            adj = z_adj;
        }
    }
    Ok((sum * scale, grad))
}
