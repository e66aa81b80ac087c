//! Analytic complex velocity fields used as ground truth.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InputJacobian, VelocityField};
use crate::rng::SeededRng;
use crate::symbolic::Family;

/// A point `z = x + iy`. Both components are expected to be finite.
pub type ComplexPoint = Complex64;

/// Default constant for the pure systems.
pub const DEFAULT_C: ComplexPoint = Complex64::new(-0.4, 0.6);

/// Multiple of the cylinder radius excluded around the potential-flow singularity.
pub const DEFAULT_EXCLUSION_FACTOR: f64 = 1.1;

/// Step for the central-difference Jacobian of analytic fields.
const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemId {
    Quadratic,
    Cubic,
    #[serde(rename = "exp")]
    Exponential,
    #[serde(rename = "sin")]
    Sine,
    #[serde(rename = "cos")]
    Cosine,
    #[serde(rename = "zexp")]
    MixedExp,
    #[serde(rename = "potential")]
    PotentialFlow,
}

impl SystemId {
    pub const ALL: [SystemId; 7] = [
        SystemId::Quadratic,
        SystemId::Cubic,
        SystemId::Exponential,
        SystemId::Sine,
        SystemId::Cosine,
        SystemId::MixedExp,
        SystemId::PotentialFlow,
    ];

    /// The six systems parameterised by the constant `c`.
    pub const PURE: [SystemId; 6] = [
        SystemId::Quadratic,
        SystemId::Cubic,
        SystemId::Exponential,
        SystemId::Sine,
        SystemId::Cosine,
        SystemId::MixedExp,
    ];

    /// Identifier accepted on the command line.
    pub fn as_str(self) -> &'static str {
        match self {
            SystemId::Quadratic => "quadratic",
            SystemId::Cubic => "cubic",
            SystemId::Exponential => "exp",
            SystemId::Sine => "sin",
            SystemId::Cosine => "cos",
            SystemId::MixedExp => "zexp",
            SystemId::PotentialFlow => "potential",
        }
    }

    pub fn formula(self) -> &'static str {
        match self {
            SystemId::Quadratic => "z^2 + c",
            SystemId::Cubic => "z^3 + c",
            SystemId::Exponential => "e^z + c",
            SystemId::Sine => "sin(z) + c",
            SystemId::Cosine => "cos(z) + c",
            SystemId::MixedExp => "z*e^z + c",
            SystemId::PotentialFlow => "U*z + U*a^2/z",
        }
    }

    /// Ground-truth symbolic family.
    pub fn family(self) -> Family {
        match self {
            SystemId::Quadratic => Family::PolyX2,
            SystemId::Cubic => Family::PolyX3,
            SystemId::Exponential => Family::Exponential,
            SystemId::Sine | SystemId::Cosine => Family::Trigonometric,
            SystemId::MixedExp => Family::MixedExp,
            SystemId::PotentialFlow => Family::Rational,
        }
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SystemId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown system `{s}` (expected quadratic|cubic|exp|sin|cos|zexp|potential)"
                ))
            })
    }
}

/// Axis-aligned square `[lo, hi]²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, z: ComplexPoint) -> bool {
        (self.lo..=self.hi).contains(&z.re) && (self.lo..=self.hi).contains(&z.im)
    }
}

impl Default for Domain {
    fn default() -> Self {
        Domain::new(-2.0, 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub id: SystemId,
    /// Additive constant of the pure systems (unused by potential flow).
    pub c: ComplexPoint,
    pub free_stream_u: f64,
    pub radius_a: f64,
    pub domain: Domain,
    /// Radius of the disk around the origin removed from sampling and evaluation.
    pub exclusion_radius: f64,
}

impl SystemSpec {
    pub fn new(id: SystemId) -> Self {
        let (free_stream_u, radius_a) = (1.0, 1.0);
        let exclusion_radius = match id {
            SystemId::PotentialFlow => DEFAULT_EXCLUSION_FACTOR * radius_a,
            _ => 0.0,
        };
        Self { id, c: DEFAULT_C, free_stream_u, radius_a, domain: Domain::default(), exclusion_radius }
    }

    pub fn with_c(mut self, c: ComplexPoint) -> Self {
        self.c = c;
        self
    }

    pub fn potential_flow(free_stream_u: f64, radius_a: f64, exclusion_factor: f64) -> Self {
        Self {
            free_stream_u,
            radius_a,
            exclusion_radius: exclusion_factor * radius_a,
            ..Self::new(SystemId::PotentialFlow)
        }
    }

    pub fn family(&self) -> Family {
        self.id.family()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c.re.is_finite() && self.c.im.is_finite()) {
            return Err(Error::InvalidArgument("c must be finite".into()));
        }
        if !(self.domain.lo < self.domain.hi) {
            return Err(Error::InvalidArgument("domain must have lo < hi".into()));
        }
        if !(self.exclusion_radius >= 0.0 && self.exclusion_radius < 0.5 * self.domain.width()) {
            return Err(Error::InvalidArgument(format!(
                "exclusion radius {} must lie in [0, half the domain width)",
                self.exclusion_radius
            )));
        }
        Ok(())
    }

    pub fn is_excluded(&self, z: ComplexPoint) -> bool {
        self.exclusion_radius > 0.0 && z.norm() <= self.exclusion_radius
    }

    /// Ground-truth velocity `f(z)`; `(u, v) = (re, im)` of the result.
    pub fn velocity(&self, z: ComplexPoint) -> Result<ComplexPoint> {
        if self.is_excluded(z) {
            return Err(Error::SingularInput { re: z.re, im: z.im, radius: self.exclusion_radius });
        }
        let c = self.c;
        let f = match self.id {
            SystemId::Quadratic => z * z + c,
            SystemId::Cubic => z * z * z + c,
            SystemId::Exponential => z.exp() + c,
            SystemId::Sine => z.sin() + c,
            SystemId::Cosine => z.cos() + c,
            SystemId::MixedExp => z * z.exp() + c,
            SystemId::PotentialFlow => {
                let (u, a) = (self.free_stream_u, self.radius_a);
                u * z + u * a * a / z
            }
        };
        if f.re.is_finite() && f.im.is_finite() {
            Ok(f)
        } else {
            Err(Error::NonFinite("velocity"))
        }
    }

    /// `n` points drawn uniformly from the domain, resampling any that fall in
    /// the exclusion disk.
    pub fn sample_domain(&self, n: usize, seed: u64) -> DomainSample {
        let mut rng = SeededRng::new(seed);
        DomainSample { points: self.sample_with(&mut rng, n), seed, count: n }
    }

    pub(crate) fn sample_with(&self, rng: &mut SeededRng, n: usize) -> Vec<ComplexPoint> {
        let Domain { lo, hi } = self.domain;
        let mut points = Vec::with_capacity(n);
        while points.len() < n {
            let z = Complex64::new(rng.uniform_in(lo, hi), rng.uniform_in(lo, hi));
            if !self.is_excluded(z) {
                points.push(z);
            }
        }
        points
    }
}

impl VelocityField for SystemSpec {
    fn velocity(&self, z: ComplexPoint) -> Result<ComplexPoint> {
        SystemSpec::velocity(self, z)
    }

    /// Central finite differences of the analytic field.
    fn velocity_and_jacobian(&self, z: ComplexPoint) -> Result<(ComplexPoint, InputJacobian)> {
        let f = self.velocity(z)?;
        let dx = Complex64::new(FD_STEP, 0.0);
        let dy = Complex64::new(0.0, FD_STEP);
        let fx = (self.velocity(z + dx)? - self.velocity(z - dx)?) / (2.0 * FD_STEP);
        let fy = (self.velocity(z + dy)? - self.velocity(z - dy)?) / (2.0 * FD_STEP);
        Ok((f, InputJacobian { u_x: fx.re, u_y: fy.re, v_x: fx.im, v_y: fy.im }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSample {
    pub points: Vec<ComplexPoint>,
    pub seed: u64,
    pub count: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quadratic_closed_forms() {
        let spec = SystemSpec::new(SystemId::Quadratic);
        assert_eq!(spec.velocity(Complex64::new(0.0, 0.0)).unwrap(), Complex64::new(-0.4, 0.6));
        let f = spec.velocity(Complex64::new(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(f.re, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(f.im, 0.6, epsilon = 1e-15);
    }

    #[test]
    fn potential_flow_on_axis() {
        let spec = SystemSpec::new(SystemId::PotentialFlow);
        let f = spec.velocity(Complex64::new(2.0, 0.0)).unwrap();
        assert_abs_diff_eq!(f.re, 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(f.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn exponential_at_i() {
        // e^{i} = cos 1 + i sin 1, evaluated independently of Complex64::exp.
        let spec = SystemSpec::new(SystemId::Exponential);
        let f = spec.velocity(Complex64::new(0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(f.re, 1f64.cos() - 0.4, epsilon = 1e-14);
        assert_abs_diff_eq!(f.im, 1f64.sin() + 0.6, epsilon = 1e-14);
        assert_abs_diff_eq!(f.re, 0.1403, epsilon = 1e-4);
        assert_abs_diff_eq!(f.im, 1.4415, epsilon = 1e-4);
    }

    #[test]
    fn singular_input_inside_disk() {
        let spec = SystemSpec::new(SystemId::PotentialFlow);
        assert!(matches!(
            spec.velocity(Complex64::new(0.5, 0.5)),
            Err(Error::SingularInput { .. })
        ));
        // Pure systems have no exclusion disk.
        assert!(SystemSpec::new(SystemId::Cubic).velocity(Complex64::new(0.0, 0.0)).is_ok());
    }

    #[test]
    fn overflow_is_non_finite() {
        let spec = SystemSpec::new(SystemId::Exponential);
        assert_eq!(spec.velocity(Complex64::new(800.0, 0.0)), Err(Error::NonFinite("velocity")));
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = SystemSpec::new(SystemId::Quadratic);
        assert_eq!(spec.sample_domain(128, 42), spec.sample_domain(128, 42));
        assert_ne!(spec.sample_domain(128, 42).points, spec.sample_domain(128, 43).points);
    }

    #[test]
    fn sampling_respects_exclusion() {
        let spec = SystemSpec::new(SystemId::PotentialFlow);
        let sample = spec.sample_domain(1000, 7);
        assert_eq!(sample.points.len(), 1000);
        assert!(sample.points.iter().all(|z| z.norm() > 1.1));
    }

    #[test]
    fn sampling_stays_in_domain() {
        let spec = SystemSpec::new(SystemId::Quadratic);
        let sample = spec.sample_domain(4, 0);
        assert_eq!(sample.count, 4);
        assert!(sample.points.iter().all(|&z| spec.domain.contains(z)));
    }

    #[test]
    fn sample_mean_near_center() {
        let spec = SystemSpec::new(SystemId::Sine);
        let sample = spec.sample_domain(100_000, 3);
        let mean = sample.points.iter().sum::<Complex64>() / 100_000.0;
        assert!(mean.re.abs() < 0.05 && mean.im.abs() < 0.05, "{mean}");
    }

    #[test]
    fn parse_cli_ids() {
        for id in SystemId::ALL {
            assert_eq!(id.as_str().parse::<SystemId>().unwrap(), id);
        }
        assert!("quartic".parse::<SystemId>().is_err());
    }

    #[test]
    fn validation() {
        assert!(SystemSpec::new(SystemId::PotentialFlow).validate().is_ok());
        let bad = SystemSpec::potential_flow(1.0, 1.0, 2.5);
        assert!(bad.validate().is_err());
    }
}
