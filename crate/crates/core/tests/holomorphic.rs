//! Every analytic system satisfies the Cauchy–Riemann equations on its domain.

use holokan::analysis::{evaluate_field, EvalGrid};
use holokan::{ComplexPoint, SystemId, SystemSpec, VelocityField};
use proptest::prelude::*;

#[test]
fn residual_vanishes_on_every_evaluation_grid() {
    for id in SystemId::ALL {
        let spec = SystemSpec::new(id);
        let grid = EvalGrid::for_system(&spec, 100).unwrap();
        let metrics = evaluate_field(&spec, &spec, &grid).unwrap();
        assert!(metrics.cr_residual < 1e-4, "{id}: {}", metrics.cr_residual);
        assert_eq!(metrics.mse, 0.0);
        assert_eq!(metrics.r_squared, 1.0);
        for z in grid.points() {
            let (_, j) = spec.velocity_and_jacobian(z).unwrap();
            assert!(j.cr_violation() < 1e-4, "{id} at {z}");
        }
    }
}

#[test]
fn potential_grid_skips_the_cylinder() {
    let spec = SystemSpec::new(SystemId::PotentialFlow);
    let grid = EvalGrid::for_system(&spec, 100).unwrap();
    assert!(grid.points().len() < grid.len());
    assert!(grid.points().iter().all(|z| z.norm() > spec.exclusion_radius));
}

proptest! {
    #[test]
    fn residual_vanishes_at_random_points(
        id in prop::sample::select(SystemId::ALL.to_vec()),
        x in -2.0f64..2.0,
        y in -2.0f64..2.0,
    ) {
        let spec = SystemSpec::new(id);
        let z = ComplexPoint::new(x, y);
        prop_assume!(!spec.is_excluded(z));
        let (_, j) = spec.velocity_and_jacobian(z).unwrap();
        prop_assert!(j.cr_violation() < 1e-4);
    }

    #[test]
    fn jacobian_matches_complex_derivative(
        id in prop::sample::select(SystemId::PURE.to_vec()),
        x in -2.0f64..2.0,
        y in -2.0f64..2.0,
    ) {
        let spec = SystemSpec::new(id);
        let z = ComplexPoint::new(x, y);
        let d = match id {
            SystemId::Quadratic => 2.0 * z,
            SystemId::Cubic => 3.0 * z * z,
            SystemId::Exponential => z.exp(),
            SystemId::Sine => z.cos(),
            SystemId::Cosine => -z.sin(),
            SystemId::MixedExp => (1.0 + z) * z.exp(),
            SystemId::PotentialFlow => unreachable!(),
        };
        let (_, j) = spec.velocity_and_jacobian(z).unwrap();
        let tol = 1e-6 * d.norm().max(1.0);
        prop_assert!((j.u_x - d.re).abs() < tol && (j.v_x - d.im).abs() < tol);
    }
}
