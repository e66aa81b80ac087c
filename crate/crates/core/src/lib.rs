//! Holomorphic velocity-field learning with Kolmogorov–Arnold networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`systems`]: the analytic complex velocity fields used as ground truth.
//! - [`spline`]: uniform-knot B-spline bases and their derivatives.
//! - [`model`]: the `[2, H, 2]` KAN and the MLP baseline, with exact
//!   input-Jacobians and hand-written reverse passes.
//! - [`training`]: losses, warmup, Adam, clipping, noise, and the training loops.
//! - [`symbolic`]: spline-to-formula fitting and family classification.
//! - [`analysis`]: field metrics, escape-time masks, Lyapunov exponents and RK4.

pub mod analysis;
pub mod error;
pub mod model;
pub mod rng;
pub mod spline;
pub mod symbolic;
pub mod systems;
pub mod training;

pub use error::{Error, Result};
pub use model::{InputJacobian, KanNetwork, MlpNetwork, Model, OutputAdjoint, Trainable, VelocityField};
pub use systems::{ComplexPoint, SystemId, SystemSpec};
