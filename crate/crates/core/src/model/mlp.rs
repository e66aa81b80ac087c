//! Dense `2 -> 64 -> 64 -> 2` baseline with tanh hidden units.
//!
//! Parameter order: for each layer, the weight matrix row-major
//! (`out x in`) followed by the bias.

use serde::{Deserialize, Serialize};

use super::{check_len, finite, InputJacobian, Jet, OutputAdjoint, Trainable, VelocityField};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::systems::ComplexPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: usize,
    pub hidden_layers: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { hidden: 64, hidden_layers: 2, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn apply(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.n_in)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>() + b)
            .collect()
    }

    fn apply_jets(&self, input: &[Jet]) -> Vec<Jet> {
        self.weights
            .chunks_exact(self.n_in)
            .zip(&self.bias)
            .map(|(row, &b)| {
                let mut acc = Jet::new(b, 0.0, 0.0);
                for (w, a) in row.iter().zip(input) {
                    acc.v += w * a.v;
                    acc.dx += w * a.dx;
                    acc.dy += w * a.dy;
                }
                acc
            })
            .collect()
    }

    /// Accumulates weight and bias gradients; returns the input adjoint.
    fn backward(&self, input: &[Jet], out_adjoint: &[Jet], grad: &mut [f64]) -> Vec<Jet> {
        let (gw, gb) = grad.split_at_mut(self.weights.len());
        let mut in_adjoint = vec![Jet::default(); self.n_in];
        for (r, o) in out_adjoint.iter().enumerate() {
            gb[r] += o.v;
            let row = &self.weights[r * self.n_in..(r + 1) * self.n_in];
            let grow = &mut gw[r * self.n_in..(r + 1) * self.n_in];
            for c in 0..self.n_in {
                let a = input[c];
                grow[c] += o.v * a.v + o.dx * a.dx + o.dy * a.dy;
                in_adjoint[c].v += row[c] * o.v;
                in_adjoint[c].dx += row[c] * o.dx;
                in_adjoint[c].dy += row[c] * o.dy;
            }
        }
        in_adjoint
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<DenseLayer>,
}

impl MlpNetwork {
    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn new(config: &MlpConfig) -> Result<Self> {
        let mut rng = SeededRng::new(config.seed);
        Self::build(config, |fan_in| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            rng.uniform_in(-bound, bound)
        })
    }

    pub fn zeroed(config: &MlpConfig) -> Result<Self> {
        Self::build(config, |_| 0.0)
    }

    fn build(config: &MlpConfig, mut init: impl FnMut(usize) -> f64) -> Result<Self> {
        if config.hidden == 0 || config.hidden_layers == 0 {
            return Err(Error::InvalidArgument("MLP needs at least one non-empty hidden layer".into()));
        }
        let mut dims = vec![2];
        dims.extend(std::iter::repeat_n(config.hidden, config.hidden_layers));
        dims.push(2);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                DenseLayer {
                    n_in,
                    n_out,
                    weights: (0..n_in * n_out).map(|_| init(n_in)).collect(),
                    bias: (0..n_out).map(|_| init(n_in)).collect(),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_parts(hidden: usize, hidden_layers: usize, params: &[f64]) -> Result<Self> {
        let mut net = Self::zeroed(&MlpConfig { hidden, hidden_layers, seed: 0 })?;
        net.set_parameters(params)?;
        Ok(net)
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].n_out
    }

    pub fn hidden_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn forward(&self, batch: &[ComplexPoint]) -> Result<Vec<ComplexPoint>> {
        batch.iter().map(|&z| self.velocity(z)).collect()
    }

    /// Per layer: its input jets and its pre-activation jets.
    fn forward_jets(&self, z: ComplexPoint) -> Vec<(Vec<Jet>, Vec<Jet>)> {
        let mut input = vec![Jet::new(z.re, 1.0, 0.0), Jet::new(z.im, 0.0, 1.0)];
        let mut trace = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let pre = layer.apply_jets(&input);
            let next = if l + 1 < self.layers.len() {
                pre.iter()
                    .map(|p| {
                        let t = p.v.tanh();
                        p.chain(t, 1.0 - t * t)
                    })
                    .collect()
            } else {
                pre.clone()
            };
            trace.push((std::mem::replace(&mut input, next), pre));
        }
        trace
    }
}

impl VelocityField for MlpNetwork {
    fn velocity(&self, z: ComplexPoint) -> Result<ComplexPoint> {
        let mut act = vec![z.re, z.im];
        for (l, layer) in self.layers.iter().enumerate() {
            act = layer.apply(&act);
            if l + 1 < self.layers.len() {
                act.iter_mut().for_each(|a| *a = a.tanh());
            }
        }
        finite(ComplexPoint::new(act[0], act[1]), "MLP output")
    }

    fn velocity_and_jacobian(&self, z: ComplexPoint) -> Result<(ComplexPoint, InputJacobian)> {
        let trace = self.forward_jets(z);
        let out = &trace.last().unwrap().1;
        let jac = InputJacobian { u_x: out[0].dx, u_y: out[0].dy, v_x: out[1].dx, v_y: out[1].dy };
        if !jac.is_finite() {
            return Err(Error::NonFinite("MLP input-Jacobian"));
        }
        Ok((finite(ComplexPoint::new(out[0].v, out[1].v), "MLP output")?, jac))
    }
}

impl Trainable for MlpNetwork {
    fn parameter_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::parameter_count).sum()
    }

    fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        check_len(self.parameter_count(), params.len())?;
        let mut rest = params;
        for layer in &mut self.layers {
            let (w, tail) = rest.split_at(layer.weights.len());
            let (b, tail) = tail.split_at(layer.bias.len());
            layer.weights.copy_from_slice(w);
            layer.bias.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    fn backward(&self, z: ComplexPoint, adjoint: &OutputAdjoint, grad: &mut [f64]) -> Result<(f64, f64)> {
        check_len(self.parameter_count(), grad.len())?;
        let trace = self.forward_jets(z);
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.parameter_count();
        }

        let mut adj: Vec<Jet> = adjoint.jets().to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (input, pre) = &trace[l];
            if l + 1 < self.layers.len() {
                // adj is w.r.t. tanh(pre); move it onto pre.
                adj = adj
                    .iter()
                    .zip(pre)
                    .map(|(o, p)| {
                        let t = p.v.tanh();
                        let d1 = 1.0 - t * t;
                        let d2 = -2.0 * t * d1;
                        let s = o.dx * p.dx + o.dy * p.dy;
                        Jet::new(o.v * d1 + s * d2, o.dx * d1, o.dy * d1)
                    })
                    .collect();
            }
            let g = &mut grad[offsets[l]..offsets[l] + layer.parameter_count()];
            adj = layer.backward(input, &adj, g);
        }
        Ok((adj[0].v, adj[1].v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameter_count() {
        let net = MlpNetwork::new(&MlpConfig::default()).unwrap();
        assert_eq!(net.parameter_count(), 2 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2);
        assert_eq!(net.parameter_count(), 4482);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = MlpNetwork::zeroed(&MlpConfig::default()).unwrap();
        assert_eq!(net.velocity(ComplexPoint::new(1.3, -0.2)).unwrap(), ComplexPoint::new(0.0, 0.0));
    }

    #[test]
    fn batch_rows_are_independent() {
        let net = MlpNetwork::new(&MlpConfig::default()).unwrap();
        let batch: Vec<_> = (0..10).map(|i| ComplexPoint::new(0.3 * i as f64 - 1.5, 0.1 * i as f64)).collect();
        let all = net.forward(&batch).unwrap();
        let single = net.forward(&batch[4..5]).unwrap();
        assert_eq!(all[4], single[0]);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let net = MlpNetwork::new(&MlpConfig { seed: 3, ..MlpConfig::default() }).unwrap();
        let h = 1e-5;
        for &z in &[ComplexPoint::new(0.2, -1.0), ComplexPoint::new(-1.7, 1.9)] {
            let (_, jac) = net.velocity_and_jacobian(z).unwrap();
            let fx = (net.velocity(z + h).unwrap() - net.velocity(z - h).unwrap()) / (2.0 * h);
            let dy = ComplexPoint::new(0.0, h);
            let fy = (net.velocity(z + dy).unwrap() - net.velocity(z - dy).unwrap()) / (2.0 * h);
            for (a, b) in [(jac.u_x, fx.re), (jac.u_y, fy.re), (jac.v_x, fx.im), (jac.v_y, fy.im)] {
                assert!((a - b).abs() / a.abs().max(b.abs()).max(1e-2) < 1e-4, "{a} vs {b}");
            }
        }
    }
}
