//! Trainable field approximators mapping `(x, y) -> (u, v)`.
//!
//! Both networks propagate a [`Jet`] per scalar: its value together with its
//! derivatives with respect to the two inputs. The forward pass therefore
//! yields the exact input-Jacobian, and the reverse pass differentiates the
//! whole jet computation, which is what the Cauchy–Riemann penalty needs.

mod kan;
mod mlp;

pub use kan::{calibration_range, EdgeTrace, KanConfig, KanLayer, KanNetwork, SplineEdge};
pub use mlp::{DenseLayer, MlpConfig, MlpNetwork};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::systems::{ComplexPoint, SystemSpec};

/// Input-Jacobian of `(u, v)` with respect to `(x, y)` at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InputJacobian {
    pub u_x: f64,
    pub u_y: f64,
    pub v_x: f64,
    pub v_y: f64,
}

impl InputJacobian {
    /// Squared Cauchy–Riemann violation `(u_x - v_y)^2 + (u_y + v_x)^2`.
    pub fn cr_violation(&self) -> f64 {
        (self.u_x - self.v_y).powi(2) + (self.u_y + self.v_x).powi(2)
    }

    pub fn is_finite(&self) -> bool {
        self.u_x.is_finite() && self.u_y.is_finite() && self.v_x.is_finite() && self.v_y.is_finite()
    }
}

/// A scalar with its partial derivatives in `x` and `y`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Jet {
    pub const fn new(v: f64, dx: f64, dy: f64) -> Self {
        Self { v, dx, dy }
    }

    pub fn add_assign(&mut self, other: Jet) {
        self.v += other.v;
        self.dx += other.dx;
        self.dy += other.dy;
    }

    /// Applies a scalar function with derivative `d1` at `self.v`.
    pub fn chain(self, value: f64, d1: f64) -> Jet {
        Jet { v: value, dx: d1 * self.dx, dy: d1 * self.dy }
    }
}

/// Adjoint of a scalar jet computation: sensitivity of the loss to each channel.
pub type JetAdjoint = Jet;

/// Sensitivities of a scalar objective to the outputs and their input-derivatives.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OutputAdjoint {
    pub u: f64,
    pub v: f64,
    pub u_x: f64,
    pub u_y: f64,
    pub v_x: f64,
    pub v_y: f64,
}

impl OutputAdjoint {
    pub fn values_only(u: f64, v: f64) -> Self {
        Self { u, v, ..Self::default() }
    }

    pub(crate) fn jets(&self) -> [JetAdjoint; 2] {
        [Jet::new(self.u, self.u_x, self.u_y), Jet::new(self.v, self.v_x, self.v_y)]
    }
}

/// Anything that maps a complex point to a complex velocity.
pub trait VelocityField: Sync {
    fn velocity(&self, z: ComplexPoint) -> Result<ComplexPoint>;

    fn velocity_and_jacobian(&self, z: ComplexPoint) -> Result<(ComplexPoint, InputJacobian)>;
}

impl<F: VelocityField + ?Sized> VelocityField for &F {
    fn velocity(&self, z: ComplexPoint) -> Result<ComplexPoint> {
        (**self).velocity(z)
    }

    fn velocity_and_jacobian(&self, z: ComplexPoint) -> Result<(ComplexPoint, InputJacobian)> {
        (**self).velocity_and_jacobian(z)
    }
}

/// A field with a flat parameter vector and a reverse pass.
pub trait Trainable: VelocityField + Clone + Send {
    fn parameter_count(&self) -> usize;

    /// Flat view of all parameters in the model's documented order.
    fn parameters(&self) -> Vec<f64>;

    fn set_parameters(&mut self, params: &[f64]) -> Result<()>;

    /// Adds `adjoint · d(outputs, Jacobian)/dθ` into `grad` and returns the
    /// adjoint with respect to the input point `(x, y)`.
    fn backward(&self, z: ComplexPoint, adjoint: &OutputAdjoint, grad: &mut [f64]) -> Result<(f64, f64)>;

    /// One-time data-dependent setup before training from scratch.
    fn calibrate(&mut self, _spec: &SystemSpec, _samples: usize, _seed: u64) -> Result<()> {
        Ok(())
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::ParameterCount { expected, found })
    }
}

pub(crate) fn finite(z: ComplexPoint, what: &'static str) -> Result<ComplexPoint> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(z)
    } else {
        Err(Error::NonFinite(what))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Kan,
    Mlp,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Kan => "kan",
            ModelKind::Mlp => "mlp",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kan" => Ok(ModelKind::Kan),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::InvalidArgument(format!("unknown model `{other}` (expected kan|mlp)"))),
        }
    }
}

/// Either network, for code that picks the architecture at runtime.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Kan(KanNetwork),
    Mlp(MlpNetwork),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Kan(_) => ModelKind::Kan,
            Model::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn as_kan(&self) -> Option<&KanNetwork> {
        match self {
            Model::Kan(net) => Some(net),
            Model::Mlp(_) => None,
        }
    }
}

impl From<KanNetwork> for Model {
    fn from(net: KanNetwork) -> Self {
        Model::Kan(net)
    }
}

impl From<MlpNetwork> for Model {
    fn from(net: MlpNetwork) -> Self {
        Model::Mlp(net)
    }
}

impl VelocityField for Model {
    fn velocity(&self, z: ComplexPoint) -> Result<ComplexPoint> {
        match self {
            Model::Kan(net) => net.velocity(z),
            Model::Mlp(net) => net.velocity(z),
        }
    }

    fn velocity_and_jacobian(&self, z: ComplexPoint) -> Result<(ComplexPoint, InputJacobian)> {
        match self {
            Model::Kan(net) => net.velocity_and_jacobian(z),
            Model::Mlp(net) => net.velocity_and_jacobian(z),
        }
    }
}

impl Trainable for Model {
    fn parameter_count(&self) -> usize {
        match self {
            Model::Kan(net) => net.parameter_count(),
            Model::Mlp(net) => net.parameter_count(),
        }
    }

    fn parameters(&self) -> Vec<f64> {
        match self {
            Model::Kan(net) => net.parameters(),
            Model::Mlp(net) => net.parameters(),
        }
    }

    fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        match self {
            Model::Kan(net) => net.set_parameters(params),
            Model::Mlp(net) => net.set_parameters(params),
        }
    }

    fn backward(&self, z: ComplexPoint, adjoint: &OutputAdjoint, grad: &mut [f64]) -> Result<(f64, f64)> {
        match self {
            Model::Kan(net) => net.backward(z, adjoint, grad),
            Model::Mlp(net) => net.backward(z, adjoint, grad),
        }
    }

    fn calibrate(&mut self, spec: &SystemSpec, samples: usize, seed: u64) -> Result<()> {
        match self {
            Model::Kan(net) => net.calibrate(spec, samples, seed),
            Model::Mlp(net) => net.calibrate(spec, samples, seed),
        }
    }
}
