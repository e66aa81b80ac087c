//! Training-loop invariants and worked examples.

use holokan::analysis::{evaluate_field, EvalGrid};
use holokan::model::KanConfig;
use holokan::training::{clip_gradient, fine_tune, train, warmup_weight, TrainConfig};
use holokan::{KanNetwork, SystemId, SystemSpec};
use proptest::prelude::*;

fn quadratic() -> SystemSpec {
    SystemSpec::new(SystemId::Quadratic)
}

fn grid() -> EvalGrid {
    EvalGrid::for_system(&quadratic(), 100).unwrap()
}

#[test]
fn default_quadratic_reaches_paper_accuracy() {
    let (net, history) = train(&quadratic(), KanNetwork::new(&KanConfig::default()).unwrap(), &TrainConfig::default()).unwrap();
    assert!(history.reports.len() <= 500);
    let m = evaluate_field(&net, &quadratic(), &grid()).unwrap();
    assert!(m.mse <= 0.2, "{}", m.mse);
    for r in &history.reports {
        assert!((r.total - (r.mse + r.lambda_cr * r.cr)).abs() <= 1e-12 * r.total.abs().max(1.0));
    }
    assert!(history.reports.windows(2).all(|w| w[0].step < w[1].step));
}

#[test]
fn training_is_bitwise_deterministic() {
    let cfg = TrainConfig { steps: 80, patience: 20, ..TrainConfig::default() };
    let run = || train(&quadratic(), KanNetwork::new(&KanConfig::default()).unwrap(), &cfg).unwrap();
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(ha, hb);
    assert_eq!(a, b);
}

#[test]
fn cr_penalty_lowers_the_residual() {
    let residual = |lambda_max: f64| {
        let cfg = TrainConfig { lambda_max, ..TrainConfig::default() };
        let (net, _) = train(&quadratic(), KanNetwork::new(&KanConfig::default()).unwrap(), &cfg).unwrap();
        evaluate_field(&net, &quadratic(), &grid()).unwrap().cr_residual
    };
    assert!(residual(0.0) > residual(0.5));
}

#[test]
fn fine_tuning_on_the_source_system_is_stable() {
    let cfg = TrainConfig::default();
    let (net, history) = train(&quadratic(), KanNetwork::new(&KanConfig::default()).unwrap(), &cfg).unwrap();
    let best = history.reports.iter().map(|r| r.mse).fold(f64::INFINITY, f64::min);
    let before = evaluate_field(&net, &quadratic(), &grid()).unwrap().mse;
    let (tuned, h) = fine_tune(net, &quadratic(), 100, &cfg).unwrap();
    assert!(h.reports.iter().all(|r| r.lambda_cr == cfg.lambda_max));
    let after = evaluate_field(&tuned, &quadratic(), &grid()).unwrap().mse;
    assert!(after <= 2.0 * before.max(best), "{after} vs {before}");
}

proptest! {
    #[test]
    fn warmup_is_monotone_and_saturates(a in 0usize..400, b in 0usize..400, lambda_max in 0.0f64..2.0, tw in 1usize..200) {
        let cfg = TrainConfig { lambda_max, warmup_steps: tw, ..TrainConfig::default() };
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(warmup_weight(lo, &cfg) <= warmup_weight(hi, &cfg));
        prop_assert!(warmup_weight(hi, &cfg) <= lambda_max);
        prop_assert_eq!(warmup_weight(tw + a, &cfg), lambda_max);
        prop_assert_eq!(warmup_weight(0, &cfg), 0.0);
    }

    #[test]
    fn clipping_bounds_the_norm(g in prop::collection::vec(-1e3f64..1e3, 1..300), max in 0.1f64..10.0) {
        let mut clipped = g.clone();
        let pre = clip_gradient(&mut clipped, max);
        let norm = clipped.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(norm <= max * (1.0 + 1e-12));
        if pre <= max {
            prop_assert_eq!(clipped, g);
        }
    }
}
