//! Field metrics, escape-time masks, Lyapunov exponents and RK4 trajectories.
//!
//! Grids are stored row-major with row 0 at the top of the domain (largest
//! imaginary part), matching image layout.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::VelocityField;
use crate::systems::{ComplexPoint, Domain, SystemSpec};

/// Cell-centre lattice over a rectangle, optionally with a disk removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub nx: usize,
    pub ny: usize,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    /// Cells with `|z| <= exclusion_radius` are skipped by [`EvalGrid::points`].
    pub exclusion_radius: f64,
}

impl EvalGrid {
    pub fn square(n: usize, domain: Domain) -> Result<Self> {
        Self::new(n, n, (domain.lo, domain.hi), (domain.lo, domain.hi))
    }

    pub fn new(nx: usize, ny: usize, x_range: (f64, f64), y_range: (f64, f64)) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument(format!("grid resolution {nx}x{ny} is empty")));
        }
        if !(x_range.0 < x_range.1 && y_range.0 < y_range.1) {
            return Err(Error::InvalidArgument("grid ranges must satisfy lo < hi".into()));
        }
        Ok(Self { nx, ny, x_range, y_range, exclusion_radius: 0.0 })
    }

    /// Lattice over a system's domain that avoids its exclusion disk.
    pub fn for_system(spec: &SystemSpec, n: usize) -> Result<Self> {
        let mut grid = Self::square(n, spec.domain)?;
        grid.exclusion_radius = spec.exclusion_radius;
        Ok(grid)
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell(&self, row: usize, col: usize) -> ComplexPoint {
        let hx = (self.x_range.1 - self.x_range.0) / self.nx as f64;
        let hy = (self.y_range.1 - self.y_range.0) / self.ny as f64;
        ComplexPoint::new(self.x_range.0 + (col as f64 + 0.5) * hx, self.y_range.1 - (row as f64 + 0.5) * hy)
    }

    /// Every cell centre, row-major.
    pub fn cells(&self) -> Vec<ComplexPoint> {
        (0..self.ny).flat_map(|r| (0..self.nx).map(move |c| self.cell(r, c))).collect()
    }

    /// Cell centres outside the exclusion disk.
    pub fn points(&self) -> Vec<ComplexPoint> {
        let r = self.exclusion_radius;
        self.cells().into_iter().filter(|z| r <= 0.0 || z.norm() > r).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldMetrics {
    /// Mean squared error over both components of every grid point.
    pub mse: f64,
    pub r_squared: f64,
    /// Mean squared Cauchy–Riemann violation of the evaluated field.
    pub cr_residual: f64,
    /// Variance of the reference components, pooled over `u` and `v`.
    pub var_true: f64,
}

/// Compares `a` against the reference `b` on the non-excluded grid points.
pub fn evaluate_field<A: VelocityField, B: VelocityField>(a: &A, b: &B, grid: &EvalGrid) -> Result<FieldMetrics> {
    let points = grid.points();
    if points.is_empty() {
        return Err(Error::InvalidArgument("evaluation grid has no usable points".into()));
    }
    let rows: Vec<(ComplexPoint, ComplexPoint, f64)> = points
        .par_iter()
        .map(|&z| {
            let (fa, jac) = a.velocity_and_jacobian(z)?;
            let fb = b.velocity(z)?;
            Ok((fa, fb, jac.cr_violation()))
        })
        .collect::<Result<_>>()?;

    let n = rows.len() as f64;
    let components = 2.0 * n;
    let mse = rows.iter().map(|(fa, fb, _)| (fa - fb).norm_sqr()).sum::<f64>() / components;
    let mean = rows.iter().map(|(_, fb, _)| fb.re + fb.im).sum::<f64>() / components;
    let var_true = rows.iter().map(|(_, fb, _)| (fb.re - mean).powi(2) + (fb.im - mean).powi(2)).sum::<f64>() / components;
    if var_true < 1e-12 {
        return Err(Error::DegenerateVariance(var_true));
    }
    let cr_residual = rows.iter().map(|r| r.2).sum::<f64>() / n;
    Ok(FieldMetrics { mse, r_squared: 1.0 - mse / var_true, cr_residual, var_true })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FractalMode {
    /// `z <- f(z)`.
    #[default]
    Direct,
    /// `z <- z + f(z)`.
    Euler,
}

impl std::str::FromStr for FractalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(FractalMode::Direct),
            "euler" => Ok(FractalMode::Euler),
            other => Err(Error::InvalidArgument(format!("unknown fractal mode `{other}` (expected direct|euler)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractalConfig {
    pub max_iter: u32,
    pub bailout: f64,
    pub mode: FractalMode,
}

impl Default for FractalConfig {
    fn default() -> Self {
        Self { max_iter: 50, bailout: 2.0, mode: FractalMode::Direct }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeMask {
    pub nx: usize,
    pub ny: usize,
    pub max_iter: u32,
    pub escaped: Vec<bool>,
    /// Number of map applications before escape, or `max_iter`.
    pub iterations: Vec<u32>,
}

impl EscapeMask {
    pub fn resolution(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn escaped_fraction(&self) -> f64 {
        self.escaped.iter().filter(|&&e| e).count() as f64 / self.escaped.len() as f64
    }
}

/// Escape-time iteration from every cell centre. A cell escapes at the first
/// application `n < max_iter` that leaves the bailout radius or produces a
/// non-finite value.
pub fn escape_mask<F: VelocityField>(f: &F, grid: &EvalGrid, config: &FractalConfig) -> Result<EscapeMask> {
    if config.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    let iterations: Vec<u32> = grid
        .cells()
        .par_iter()
        .map(|&z0| {
            let mut z = z0;
            for n in 1..config.max_iter {
                z = match (f.velocity(z), config.mode) {
                    (Ok(w), FractalMode::Direct) => w,
                    (Ok(w), FractalMode::Euler) => z + w,
                    (Err(_), _) => return n,
                };
                if !(z.norm() <= config.bailout) {
                    return n;
                }
            }
            config.max_iter
        })
        .collect();
    let escaped = iterations.iter().map(|&n| n < config.max_iter).collect();
    Ok(EscapeMask { nx: grid.nx, ny: grid.ny, max_iter: config.max_iter, escaped, iterations })
}

/// Percentage of cells whose escaped flags agree.
pub fn boundary_agreement(a: &EscapeMask, b: &EscapeMask) -> Result<f64> {
    if a.resolution() != b.resolution() {
        return Err(Error::ResolutionMismatch { left: a.resolution(), right: b.resolution() });
    }
    let same = a.escaped.iter().zip(&b.escaped).filter(|(x, y)| x == y).count();
    Ok(100.0 * same as f64 / a.escaped.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConfig {
    pub n_iter: usize,
    pub delta0: f64,
    pub dt: f64,
    pub bailout: f64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self { n_iter: 50, delta0: 1e-8, dt: 1.0, bailout: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Chaotic,
    Stable,
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stability::Chaotic => "Chaotic",
            Stability::Stable => "Stable",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub mean_lambda: f64,
    pub classification: Stability,
    pub nx: usize,
    pub ny: usize,
    /// Per-cell exponent; `None` where the orbit left before its first step.
    pub exponents: Vec<Option<f64>>,
}

/// Largest Lyapunov exponent of `z <- z + dt·f(z)` from every cell centre.
///
/// A companion orbit is kept at distance `delta0` from the reference orbit and
/// renormalised after each step. The log growth is summed over the steps taken
/// before the orbit leaves the bailout radius and divided by `n_iter`.
pub fn lyapunov_grid<F: VelocityField>(f: &F, grid: &EvalGrid, config: &LyapunovConfig) -> Result<LyapunovReport> {
    if !(config.delta0 > 0.0) || !(config.dt > 0.0) {
        return Err(Error::InvalidArgument("delta0 and dt must be positive".into()));
    }
    let exponents: Vec<Option<f64>> = grid.cells().par_iter().map(|&z0| point_exponent(f, z0, config)).collect();
    let valid: Vec<f64> = exponents.iter().flatten().copied().collect();
    let mean_lambda = if valid.is_empty() { f64::NAN } else { valid.iter().sum::<f64>() / valid.len() as f64 };
    let classification = if mean_lambda > 0.0 { Stability::Chaotic } else { Stability::Stable };
    Ok(LyapunovReport { mean_lambda, classification, nx: grid.nx, ny: grid.ny, exponents })
}

fn point_exponent<F: VelocityField>(f: &F, z0: ComplexPoint, config: &LyapunovConfig) -> Option<f64> {
    let step = |z: ComplexPoint| f.velocity(z).ok().map(|v| z + config.dt * v);
    let mut z = z0;
    let mut w = z0 + config.delta0;
    let (mut sum, mut count) = (0.0, 0usize);
    for _ in 0..config.n_iter {
        let before = (w - z).norm();
        let (Some(z1), Some(w1)) = (step(z), step(w)) else { break };
        if !(z1.norm() <= config.bailout) || !(w1.re.is_finite() && w1.im.is_finite()) {
            break;
        }
        let after = (w1 - z1).norm();
        if !(after > 0.0 && after.is_finite()) {
            break;
        }
        sum += (after / before).ln();
        count += 1;
        z = z1;
        w = z1 + (w1 - z1) * (config.delta0 / after);
    }
    (count > 0).then(|| sum / config.n_iter as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ComplexPoint>,
    pub diverged: bool,
}

/// Step sizes covering `[0, horizon]`: `dt` repeated, with a shorter final step
/// landing exactly on the horizon.
pub fn step_sizes(horizon: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) || !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("need dt > 0 and horizon >= 0, got dt={dt}, T={horizon}")));
    }
    let n = ((horizon / dt) - 1e-9).ceil().max(0.0) as usize;
    let mut steps = vec![dt; n];
    if let Some(last) = steps.last_mut() {
        *last = horizon - (n - 1) as f64 * dt;
    }
    Ok(steps)
}

/// One classical RK4 step.
pub fn rk4_step<F: VelocityField + ?Sized>(f: &F, z: ComplexPoint, h: f64) -> Result<ComplexPoint> {
    let k1 = f.velocity(z)?;
    let k2 = f.velocity(z + 0.5 * h * k1)?;
    let k3 = f.velocity(z + 0.5 * h * k2)?;
    let k4 = f.velocity(z + h * k3)?;
    Ok(z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// Fixed-step RK4 from `z0` to `horizon`, truncated at the first state outside
/// `bailout` or the first failed field evaluation.
pub fn integrate_trajectory<F: VelocityField>(f: &F, z0: ComplexPoint, horizon: f64, dt: f64, bailout: f64) -> Result<Trajectory> {
    let steps = step_sizes(horizon, dt)?;
    let mut traj = Trajectory { times: vec![0.0], states: vec![z0], diverged: false };
    let mut z = z0;
    let mut t = 0.0;
    for (i, &h) in steps.iter().enumerate() {
        match rk4_step(f, z, h) {
            Ok(next) if next.norm() <= bailout => z = next,
            _ => {
                traj.diverged = true;
                break;
            }
        }
        t = if i + 1 == steps.len() { horizon } else { t + h };
        traj.times.push(t);
        traj.states.push(z);
    }
    Ok(traj)
}
