//! The `[2, H, 2]` Kolmogorov–Arnold network.
//!
//! Every edge carries `φ(x) = w_b·silu(x) + w_s·S(x)`. The spline `S` is stored
//! as `G + 2k + 1` control values, one per knot of the extended grid. Basis
//! function `m` takes as its coefficient the binomial mix
//! `Σ_j C(k+1, j) / 2^(k+1) · ctrl[m + j]` of the control values on its support,
//! so control values sampled from a linear function reproduce that function
//! exactly. With the silu weight and spline scale this gives `G + 2k + 3`
//! parameters per edge (14 for `G = 5, k = 3`, 280 for the default network).
//!
//! Parameter order: layer-1 edges by `(input, hidden)` with the input index
//! major, then layer-2 edges by `(hidden, output)`; within an edge the control
//! values come first, then `w_b`, then `w_s`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_len, finite, InputJacobian, Jet, JetAdjoint, OutputAdjoint, Trainable, VelocityField};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::spline::{KnotGrid, LocalBasis, MAX_ORDER};
use crate::systems::{ComplexPoint, SystemSpec};

/// Fraction of the observed hidden range added on top of it by calibration.
pub const CALIBRATION_PADDING: f64 = 0.1;

/// Points used to refit layer-2 splines after a grid change.
const REFIT_POINTS: usize = 201;

/// Least-squares weight of refit samples outside the previous knot range.
const OUTSIDE_WEIGHT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KanConfig {
    pub hidden: usize,
    pub grid_intervals: usize,
    pub order: usize,
    pub input_range: (f64, f64),
    /// Layer-2 knot range before calibration.
    pub hidden_range: (f64, f64),
    pub init_std: f64,
    pub seed: u64,
}

impl Default for KanConfig {
    fn default() -> Self {
        Self {
            hidden: 5,
            grid_intervals: 5,
            order: 3,
            input_range: (-2.5, 2.5),
            hidden_range: (-2.5, 2.5),
            init_std: 0.1,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineEdge {
    pub coefficients: Vec<f64>,
    pub base_weight: f64,
    pub spline_scale: f64,
}

fn silu(x: f64) -> (f64, f64, f64) {
    let s = 1.0 / (1.0 + (-x).exp());
    let d1 = s * (1.0 + x * (1.0 - s));
    let d2 = s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s));
    (x * s, d1, d2)
}

/// Edge quantities at one input: spline part, silu part and their sum.
struct EdgeEval {
    basis: LocalBasis,
    spline: [f64; 3],
    base: [f64; 3],
    total: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct KanLayer {
    grid: KnotGrid,
    mix: Vec<f64>,
    n_in: usize,
    n_out: usize,
    edges: Vec<SplineEdge>,
}

impl KanLayer {
    fn new(grid: KnotGrid, n_in: usize, n_out: usize, mut init: impl FnMut() -> SplineEdge) -> Self {
        let mix = binomial_mix(grid.order());
        let edges = (0..n_in * n_out).map(|_| init()).collect();
        Self { grid, mix, n_in, n_out, edges }
    }

    pub fn grid(&self) -> &KnotGrid {
        &self.grid
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn edges(&self) -> &[SplineEdge] {
        &self.edges
    }

    pub fn edges_mut(&mut self) -> &mut [SplineEdge] {
        &mut self.edges
    }

    pub fn edge_index(&self, from: usize, to: usize) -> usize {
        from * self.n_out + to
    }

    pub fn edge(&self, from: usize, to: usize) -> &SplineEdge {
        &self.edges[self.edge_index(from, to)]
    }

    pub fn edge_mut(&mut self, from: usize, to: usize) -> &mut SplineEdge {
        let idx = self.edge_index(from, to);
        &mut self.edges[idx]
    }

    /// Control values per edge.
    pub fn n_coefficients(&self) -> usize {
        self.grid.n_basis() + self.grid.order() + 1
    }

    pub fn params_per_edge(&self) -> usize {
        self.n_coefficients() + 2
    }

    pub fn parameter_count(&self) -> usize {
        self.edges.len() * self.params_per_edge()
    }

    fn spline_at(&self, edge: &SplineEdge, basis: &LocalBasis) -> [f64; 3] {
        let mut out = [0.0; 3];
        for r in 0..basis.len {
            let coeff = self.effective_coefficient(edge, basis.start + r);
            out[0] += coeff * basis.values[r];
            out[1] += coeff * basis.first[r];
            out[2] += coeff * basis.second[r];
        }
        out
    }

    fn effective_coefficient(&self, edge: &SplineEdge, m: usize) -> f64 {
        self.mix.iter().zip(&edge.coefficients[m..]).map(|(w, c)| w * c).sum()
    }

    fn eval(&self, edge: &SplineEdge, x: f64) -> EdgeEval {
        let basis = self.grid.local(x);
        let spline = self.spline_at(edge, &basis);
        let (s0, s1, s2) = silu(x);
        let base = [s0, s1, s2];
        let total = [
            edge.base_weight * s0 + edge.spline_scale * spline[0],
            edge.base_weight * s1 + edge.spline_scale * spline[1],
            edge.base_weight * s2 + edge.spline_scale * spline[2],
        ];
        EdgeEval { basis, spline, base, total }
    }

    /// The spline term `S(x)` of an edge, without silu or scale.
    pub fn spline_value(&self, from: usize, to: usize, x: f64) -> f64 {
        let basis = self.grid.local(x);
        self.spline_at(self.edge(from, to), &basis)[0]
    }

    /// `φ(x)` for the edge `from -> to`.
    pub fn activation(&self, from: usize, to: usize, x: f64) -> f64 {
        self.eval(self.edge(from, to), x).total[0]
    }

    fn forward_values(&self, inputs: &[f64], mut observe: impl FnMut(usize, f64, f64)) -> Vec<f64> {
        let mut out = vec![0.0; self.n_out];
        for (from, &x) in inputs.iter().enumerate() {
            for (to, acc) in out.iter_mut().enumerate() {
                let idx = self.edge_index(from, to);
                let a = self.eval(&self.edges[idx], x).total[0];
                observe(idx, x, a);
                *acc += a;
            }
        }
        out
    }

    fn forward_jets(&self, inputs: &[Jet]) -> Vec<Jet> {
        let mut out = vec![Jet::default(); self.n_out];
        for (from, p) in inputs.iter().enumerate() {
            for (to, acc) in out.iter_mut().enumerate() {
                let e = self.eval(self.edge(from, to), p.v);
                acc.add_assign(p.chain(e.total[0], e.total[1]));
            }
        }
        out
    }

    /// Reverse pass over the jet forward pass; `grad` covers this layer only.
    fn backward(&self, inputs: &[Jet], out_adjoint: &[JetAdjoint], grad: &mut [f64]) -> Vec<JetAdjoint> {
        let per_edge = self.params_per_edge();
        let n_coef = self.n_coefficients();
        let mut in_adjoint = vec![Jet::default(); self.n_in];
        for (from, p) in inputs.iter().enumerate() {
            for (to, o) in out_adjoint.iter().enumerate() {
                let idx = self.edge_index(from, to);
                let edge = &self.edges[idx];
                let e = self.eval(edge, p.v);
                // Sensitivity carried by the derivative channels.
                let s = o.dx * p.dx + o.dy * p.dy;
                let g = &mut grad[idx * per_edge..(idx + 1) * per_edge];
                for r in 0..e.basis.len {
                    let g_eff = edge.spline_scale * (e.basis.values[r] * o.v + e.basis.first[r] * s);
                    let m = e.basis.start + r;
                    for (j, w) in self.mix.iter().enumerate() {
                        g[m + j] += w * g_eff;
                    }
                }
                g[n_coef] += e.base[0] * o.v + e.base[1] * s;
                g[n_coef + 1] += e.spline[0] * o.v + e.spline[1] * s;

                let adj = &mut in_adjoint[from];
                adj.v += o.v * e.total[1] + s * e.total[2];
                adj.dx += o.dx * e.total[1];
                adj.dy += o.dy * e.total[1];
            }
        }
        in_adjoint
    }

    fn write_parameters(&self, out: &mut Vec<f64>) {
        for edge in &self.edges {
            out.extend_from_slice(&edge.coefficients);
            out.push(edge.base_weight);
            out.push(edge.spline_scale);
        }
    }

    fn read_parameters(&mut self, params: &[f64]) {
        let n_coef = self.n_coefficients();
        for (edge, chunk) in self.edges.iter_mut().zip(params.chunks_exact(n_coef + 2)) {
            edge.coefficients.copy_from_slice(&chunk[..n_coef]);
            edge.base_weight = chunk[n_coef];
            edge.spline_scale = chunk[n_coef + 1];
        }
    }

    /// Moves the layer to `new_grid`, re-expressing each edge's spline term by
    /// least squares over the new knot range.
    fn regrid(&mut self, new_grid: KnotGrid) -> Result<()> {
        let n_basis = new_grid.n_basis();
        let n_coef = self.n_coefficients();
        let xs: Vec<f64> = (0..REFIT_POINTS)
            .map(|i| new_grid.lo() + (new_grid.hi() - new_grid.lo()) * i as f64 / (REFIT_POINTS - 1) as f64)
            .collect();
        // Outside the old range the old curve is only its clamped extension.
        let weights: Vec<f64> = xs
            .iter()
            .map(|&x| if (self.grid.lo()..=self.grid.hi()).contains(&x) { 1.0 } else { OUTSIDE_WEIGHT })
            .collect();
        let design = DMatrix::from_fn(REFIT_POINTS, n_basis, |i, m| {
            let b = new_grid.local(xs[i]);
            if (b.start..b.start + b.len).contains(&m) {
                weights[i] * b.values[m - b.start]
            } else {
                0.0
            }
        });
        let mixing = DMatrix::from_fn(n_basis, n_coef, |m, c| {
            if (m..m + self.mix.len()).contains(&c) {
                self.mix[c - m]
            } else {
                0.0
            }
        });
        let design_svd = design.clone().svd(true, true);
        let gram = (&mixing * mixing.transpose())
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("coefficient mixing matrix is singular".into()))?;

        let mut refit = Vec::with_capacity(self.edges.len());
        for edge in &self.edges {
            let target = DVector::from_iterator(
                REFIT_POINTS,
                xs.iter().zip(&weights).map(|(&x, w)| w * self.spline_at(edge, &self.grid.local(x))[0]),
            );
            let effective = design_svd
                .solve(&target, 1e-12)
                .map_err(|e| Error::InvalidArgument(format!("spline refit failed: {e}")))?;
            let current = DVector::from_column_slice(&edge.coefficients);
            let correction = mixing.transpose() * gram.solve(&(effective - &mixing * &current));
            refit.push(current + correction);
        }
        for (edge, coeffs) in self.edges.iter_mut().zip(refit) {
            edge.coefficients.copy_from_slice(coeffs.as_slice());
        }
        self.grid = new_grid;
        Ok(())
    }
}

/// Weights `C(k+1, j) / 2^(k+1)`, `j = 0..=k+1`.
fn binomial_mix(order: usize) -> Vec<f64> {
    let n = order + 1;
    debug_assert!(order <= MAX_ORDER);
    let mut row = vec![1.0f64];
    for _ in 0..n {
        let mut next = vec![1.0; row.len() + 1];
        for j in 1..row.len() {
            next[j] = row[j - 1] + row[j];
        }
        row = next;
    }
    let total = 2f64.powi(n as i32);
    row.into_iter().map(|c| c / total).collect()
}

/// Observed range `[min, max]` widened by [`CALIBRATION_PADDING`] of its width,
/// split evenly on both sides.
pub fn calibration_range(min: f64, max: f64) -> Result<(f64, f64)> {
    let width = max - min;
    if !(width >= 1e-9) {
        return Err(Error::DegenerateRange { lo: min, hi: max });
    }
    let pad = 0.5 * CALIBRATION_PADDING * width;
    Ok((min - pad, max + pad))
}

/// Record of one edge's scalar inputs and outputs over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTrace {
    pub layer: usize,
    pub from: usize,
    pub to: usize,
    pub inputs: Vec<f64>,
    pub outputs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KanNetwork {
    layer1: KanLayer,
    layer2: KanLayer,
}

impl KanNetwork {
    pub fn new(config: &KanConfig) -> Result<Self> {
        let mut rng = SeededRng::new(config.seed);
        let std = config.init_std;
        Self::build(config, |n| SplineEdge {
            coefficients: (0..n).map(|_| rng.normal(0.0, std)).collect(),
            base_weight: 1.0,
            spline_scale: 1.0,
        })
    }

    /// Every parameter zero except `w_s = 1`: the network outputs `(0, 0)`.
    pub fn zeroed(config: &KanConfig) -> Result<Self> {
        Self::build(config, |n| SplineEdge { coefficients: vec![0.0; n], base_weight: 0.0, spline_scale: 1.0 })
    }

    fn build(config: &KanConfig, mut init: impl FnMut(usize) -> SplineEdge) -> Result<Self> {
        if config.hidden == 0 {
            return Err(Error::InvalidArgument("hidden width must be positive".into()));
        }
        let (g, k) = (config.grid_intervals, config.order);
        let grid1 = KnotGrid::new(config.input_range.0, config.input_range.1, g, k)?;
        let grid2 = KnotGrid::new(config.hidden_range.0, config.hidden_range.1, g, k)?;
        let n_coef = g + 2 * k + 1;
        let layer1 = KanLayer::new(grid1, 2, config.hidden, || init(n_coef));
        let layer2 = KanLayer::new(grid2, config.hidden, 2, || init(n_coef));
        Ok(Self { layer1, layer2 })
    }

    /// Rebuilds a network from its architecture and a flat parameter vector.
    pub fn from_parts(
        hidden: usize,
        grid_intervals: usize,
        order: usize,
        input_range: (f64, f64),
        hidden_range: (f64, f64),
        params: &[f64],
    ) -> Result<Self> {
        let config = KanConfig { hidden, grid_intervals, order, input_range, hidden_range, ..KanConfig::default() };
        let mut net = Self::zeroed(&config)?;
        net.set_parameters(params)?;
        Ok(net)
    }

    pub fn hidden(&self) -> usize {
        self.layer1.n_out
    }

    pub fn grid_intervals(&self) -> usize {
        self.layer1.grid.intervals()
    }

    pub fn order(&self) -> usize {
        self.layer1.grid.order()
    }

    pub fn layer1(&self) -> &KanLayer {
        &self.layer1
    }

    pub fn layer2(&self) -> &KanLayer {
        &self.layer2
    }

    pub fn layer1_mut(&mut self) -> &mut KanLayer {
        &mut self.layer1
    }

    pub fn layer2_mut(&mut self) -> &mut KanLayer {
        &mut self.layer2
    }

    pub fn layer(&self, index: usize) -> &KanLayer {
        if index == 0 {
            &self.layer1
        } else {
            &self.layer2
        }
    }

    pub fn edge_count(&self) -> usize {
        self.layer1.edges.len() + self.layer2.edges.len()
    }

    /// Hidden node values at `z`.
    pub fn hidden_values(&self, z: ComplexPoint) -> Vec<f64> {
        self.layer1.forward_values(&[z.re, z.im], |_, _, _| {})
    }

    /// Outputs over a batch.
    pub fn forward(&self, batch: &[ComplexPoint]) -> Result<Vec<ComplexPoint>> {
        batch.iter().map(|&z| self.velocity(z)).collect()
    }

    /// Outputs over a batch, recording every edge's input and activation.
    pub fn forward_recorded(&self, batch: &[ComplexPoint]) -> Result<(Vec<ComplexPoint>, Vec<EdgeTrace>)> {
        let mut traces: Vec<EdgeTrace> = [&self.layer1, &self.layer2]
            .iter()
            .enumerate()
            .flat_map(|(layer, l)| {
                (0..l.n_in).flat_map(move |from| {
                    (0..l.n_out).map(move |to| EdgeTrace {
                        layer,
                        from,
                        to,
                        inputs: Vec::with_capacity(batch.len()),
                        outputs: Vec::with_capacity(batch.len()),
                    })
                })
            })
            .collect();
        let offset = self.layer1.edges.len();
        let mut outputs = Vec::with_capacity(batch.len());
        for &z in batch {
            let (head, tail) = traces.split_at_mut(offset);
            let out = self.forward_observed(z, |layer, idx, x, a| {
                let trace = if layer == 0 { &mut head[idx] } else { &mut tail[idx] };
                trace.inputs.push(x);
                trace.outputs.push(a);
            })?;
            outputs.push(out);
        }
        Ok((outputs, traces))
    }

    fn forward_observed(&self, z: ComplexPoint, mut observe: impl FnMut(usize, usize, f64, f64)) -> Result<ComplexPoint> {
        let hidden = self.layer1.forward_values(&[z.re, z.im], |i, x, a| observe(0, i, x, a));
        let out = self.layer2.forward_values(&hidden, |i, x, a| observe(1, i, x, a));
        finite(ComplexPoint::new(out[0], out[1]), "KAN activation")
    }

    fn forward_jets(&self, z: ComplexPoint) -> (Vec<Jet>, Vec<Jet>, Vec<Jet>) {
        let inputs = vec![Jet::new(z.re, 1.0, 0.0), Jet::new(z.im, 0.0, 1.0)];
        let hidden = self.layer1.forward_jets(&inputs);
        let out = self.layer2.forward_jets(&hidden);
        (inputs, hidden, out)
    }

    /// Batch outputs with exact input-Jacobians.
    pub fn forward_with_input_jacobian(&self, batch: &[ComplexPoint]) -> Result<Vec<(ComplexPoint, InputJacobian)>> {
        batch.iter().map(|&z| self.velocity_and_jacobian(z)).collect()
    }

    /// Sets the layer-2 knot range from the hidden values seen over `n` domain
    /// samples and refits the layer-2 splines onto it. Returns the new range.
    pub fn calibrate_hidden_grid(&mut self, spec: &SystemSpec, n: usize, seed: u64) -> Result<(f64, f64)> {
        let sample = spec.sample_domain(n, seed);
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &z in &sample.points {
            for h in self.hidden_values(z) {
                if !h.is_finite() {
                    return Err(Error::NonFinite("hidden activation"));
                }
                min = min.min(h);
                max = max.max(h);
            }
        }
        let (lo, hi) = calibration_range(min, max)?;
        let grid = self.layer2.grid.with_range(lo, hi)?;
        self.layer2.regrid(grid)?;
        Ok((lo, hi))
    }
}

impl VelocityField for KanNetwork {
    fn velocity(&self, z: ComplexPoint) -> Result<ComplexPoint> {
        self.forward_observed(z, |_, _, _, _| {})
    }

    fn velocity_and_jacobian(&self, z: ComplexPoint) -> Result<(ComplexPoint, InputJacobian)> {
        let (_, _, out) = self.forward_jets(z);
        let (u, v) = (out[0], out[1]);
        let jac = InputJacobian { u_x: u.dx, u_y: u.dy, v_x: v.dx, v_y: v.dy };
        if !jac.is_finite() {
            return Err(Error::NonFinite("KAN input-Jacobian"));
        }
        Ok((finite(ComplexPoint::new(u.v, v.v), "KAN activation")?, jac))
    }
}

impl Trainable for KanNetwork {
    fn parameter_count(&self) -> usize {
        self.layer1.parameter_count() + self.layer2.parameter_count()
    }

    fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        self.layer1.write_parameters(&mut out);
        self.layer2.write_parameters(&mut out);
        out
    }

    fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        check_len(self.parameter_count(), params.len())?;
        let split = self.layer1.parameter_count();
        self.layer1.read_parameters(&params[..split]);
        self.layer2.read_parameters(&params[split..]);
        Ok(())
    }

    fn backward(&self, z: ComplexPoint, adjoint: &OutputAdjoint, grad: &mut [f64]) -> Result<(f64, f64)> {
        check_len(self.parameter_count(), grad.len())?;
        let (inputs, hidden, _) = self.forward_jets(z);
        let (g1, g2) = grad.split_at_mut(self.layer1.parameter_count());
        let hidden_adjoint = self.layer2.backward(&hidden, &adjoint.jets(), g2);
        let input_adjoint = self.layer1.backward(&inputs, &hidden_adjoint, g1);
        Ok((input_adjoint[0].v, input_adjoint[1].v))
    }

    fn calibrate(&mut self, spec: &SystemSpec, samples: usize, seed: u64) -> Result<()> {
        self.calibrate_hidden_grid(spec, samples, seed).map(|_| ())
    }
}
