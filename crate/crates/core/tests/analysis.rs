//! Escape masks, agreement and Lyapunov exponents on closed-form maps.

use holokan::analysis::{
    boundary_agreement, escape_mask, lyapunov_grid, EvalGrid, FractalConfig, LyapunovConfig, Stability,
};
use holokan::systems::Domain;
use holokan::{ComplexPoint, InputJacobian, SystemId, SystemSpec, VelocityField};
use proptest::prelude::*;

struct Scale(ComplexPoint);

impl VelocityField for Scale {
    fn velocity(&self, z: ComplexPoint) -> holokan::Result<ComplexPoint> {
        Ok(self.0 * z)
    }

    fn velocity_and_jacobian(&self, z: ComplexPoint) -> holokan::Result<(ComplexPoint, InputJacobian)> {
        let m = self.0;
        Ok((m * z, InputJacobian { u_x: m.re, u_y: -m.im, v_x: m.im, v_y: m.re }))
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    /// The discrete map is `z + f(z) = (1 + m) z`, so every exponent is `ln|1 + m|`.
    #[test]
    fn linear_maps_give_log_multiplier(re in -1.5f64..-0.2, im in -0.5f64..0.5) {
        let m = ComplexPoint::new(re, im);
        let expected = (1.0 + m).norm().ln();
        prop_assume!((1.0 + m).norm() < 0.95);
        let grid = EvalGrid::square(12, Domain::new(-2.0, 2.0)).unwrap();
        let report = lyapunov_grid(&Scale(m), &grid, &LyapunovConfig::default()).unwrap();
        for e in &report.exponents {
            prop_assert!((e.unwrap() - expected).abs() < 1e-6);
        }
        prop_assert_eq!(report.classification, Stability::Stable);
    }

    #[test]
    fn agreement_is_symmetric_and_bounded(a in 0usize..6, b in 0usize..6, max_iter in 5u32..40) {
        let grid = EvalGrid::square(30, Domain::new(-1.5, 1.5)).unwrap();
        let cfg = FractalConfig { max_iter, ..FractalConfig::default() };
        let ma = escape_mask(&SystemSpec::new(SystemId::PURE[a]), &grid, &cfg).unwrap();
        let mb = escape_mask(&SystemSpec::new(SystemId::PURE[b]), &grid, &cfg).unwrap();
        let ab = boundary_agreement(&ma, &mb).unwrap();
        prop_assert_eq!(ab, boundary_agreement(&mb, &ma).unwrap());
        prop_assert!((0.0..=100.0).contains(&ab));
        for (&esc, &it) in ma.escaped.iter().zip(&ma.iterations) {
            prop_assert!(it <= max_iter);
            prop_assert_eq!(esc, it < max_iter);
        }
    }
}

#[test]
fn classification_follows_the_sign_of_the_mean() {
    let grid = EvalGrid::square(10, Domain::new(-0.1, 0.1)).unwrap();
    let grow = lyapunov_grid(&Scale(ComplexPoint::new(0.5, 0.0)), &grid, &LyapunovConfig::default()).unwrap();
    assert!(grow.mean_lambda > 0.0);
    assert_eq!(grow.classification, Stability::Chaotic);
}
