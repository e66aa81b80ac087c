//! Fitting trained spline edges against a fixed candidate library and
//! classifying the learned system's functional family.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::analysis::EvalGrid;
use crate::error::{Error, Result};
use crate::model::KanNetwork;
use crate::systems::SystemSpec;

/// Points of the uniform 1-D grid each edge is sampled on for fitting.
pub const FIT_POINTS: usize = 200;

/// Activation standard deviation below which an edge counts as constant.
pub const FLAT_STD: f64 = 1e-6;

/// R² differences below this are ties, resolved by library order.
const R2_TIE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    PolyX2,
    PolyX3,
    Exponential,
    Trigonometric,
    MixedExp,
    Linear,
    Constant,
    /// Only ever a ground-truth label: the library has no rational candidate.
    Rational,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::PolyX2 => "poly_x2",
            Family::PolyX3 => "poly_x3",
            Family::Exponential => "exponential",
            Family::Trigonometric => "trigonometric",
            Family::MixedExp => "mixed_exp",
            Family::Linear => "linear",
            Family::Constant => "constant",
            Family::Rational => "rational",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CandidateBasis {
    One,
    X,
    X2,
    X3,
    Sin,
    Cos,
    Exp,
    XExp,
}

impl CandidateBasis {
    /// Library order, which also breaks R² ties.
    pub const ALL: [CandidateBasis; 8] = [
        CandidateBasis::One,
        CandidateBasis::X,
        CandidateBasis::X2,
        CandidateBasis::X3,
        CandidateBasis::Sin,
        CandidateBasis::Cos,
        CandidateBasis::Exp,
        CandidateBasis::XExp,
    ];

    pub fn eval(self, x: f64) -> f64 {
        match self {
            CandidateBasis::One => 1.0,
            CandidateBasis::X => x,
            CandidateBasis::X2 => x * x,
            CandidateBasis::X3 => x * x * x,
            CandidateBasis::Sin => x.sin(),
            CandidateBasis::Cos => x.cos(),
            CandidateBasis::Exp => x.exp(),
            CandidateBasis::XExp => x * x.exp(),
        }
    }

    pub fn family(self) -> Family {
        match self {
            CandidateBasis::One => Family::Constant,
            CandidateBasis::X => Family::Linear,
            CandidateBasis::X2 => Family::PolyX2,
            CandidateBasis::X3 => Family::PolyX3,
            CandidateBasis::Sin | CandidateBasis::Cos => Family::Trigonometric,
            CandidateBasis::Exp => Family::Exponential,
            CandidateBasis::XExp => Family::MixedExp,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CandidateBasis::One => "1",
            CandidateBasis::X => "x",
            CandidateBasis::X2 => "x^2",
            CandidateBasis::X3 => "x^3",
            CandidateBasis::Sin => "sin(x)",
            CandidateBasis::Cos => "cos(x)",
            CandidateBasis::Exp => "exp(x)",
            CandidateBasis::XExp => "x*exp(x)",
        }
    }
}

impl fmt::Display for CandidateBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One edge observed over a domain sweep, resampled on its active range.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSweep {
    pub layer: usize,
    pub from: usize,
    pub to: usize,
    pub active_range: (f64, f64),
    /// Standard deviation of the activation over the domain sweep.
    pub importance: f64,
    /// Uniform grid over `active_range`.
    pub xs: Vec<f64>,
    /// Edge activation at `xs`.
    pub ys: Vec<f64>,
}

/// Records every edge over a `resolution x resolution` lattice of the domain.
pub fn sweep_edges(net: &KanNetwork, spec: &SystemSpec, resolution: usize) -> Result<Vec<EdgeSweep>> {
    let grid = EvalGrid::for_system(spec, resolution)?;
    let (_, traces) = net.forward_recorded(&grid.points())?;
    Ok(traces
        .into_iter()
        .map(|t| {
            let lo = t.inputs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = t.inputs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let layer = net.layer(t.layer);
            let xs: Vec<f64> = (0..FIT_POINTS).map(|i| lo + (hi - lo) * i as f64 / (FIT_POINTS - 1) as f64).collect();
            let ys = xs.iter().map(|&x| layer.activation(t.from, t.to, x)).collect();
            EdgeSweep { layer: t.layer, from: t.from, to: t.to, active_range: (lo, hi), importance: std_dev(&t.outputs), xs, ys }
        })
        .collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateFit {
    pub a: f64,
    pub c0: f64,
    pub r_squared: f64,
}

/// Least-squares fit `ys ≈ a·b(xs) + c0`.
pub fn fit_candidate(xs: &[f64], ys: &[f64], candidate: CandidateBasis) -> Result<CandidateFit> {
    if xs.len() < 3 || xs.len() != ys.len() {
        return Err(Error::DegenerateFit("need at least three paired samples"));
    }
    let b: Vec<f64> = xs.iter().map(|&x| candidate.eval(x)).collect();
    let (mb, my) = (mean(&b), mean(ys));
    let n = b.len() as f64;
    let var_b = b.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / n;
    if !(var_b >= 1e-12) {
        return Err(Error::DegenerateFit("candidate is constant over the sample range"));
    }
    let cov = b.iter().zip(ys).map(|(v, y)| (v - mb) * (y - my)).sum::<f64>() / n;
    let a = cov / var_b;
    let c0 = my - a * mb;
    let ss_res: f64 = b.iter().zip(ys).map(|(v, y)| (y - a * v - c0).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(CandidateFit { a, c0, r_squared })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeFit {
    pub layer: usize,
    pub from_node: usize,
    pub to_node: usize,
    pub candidate: CandidateBasis,
    pub a: f64,
    pub c0: f64,
    pub r_squared: f64,
    pub active_range: (f64, f64),
    pub importance: f64,
}

/// The highest-R² candidate for one edge. `One` is chosen only for flat edges.
pub fn best_fit(sweep: &EdgeSweep) -> EdgeFit {
    let flat = sweep.ys.is_empty() || std_dev(&sweep.ys) < FLAT_STD;
    let mut best = (CandidateBasis::One, CandidateFit { a: 0.0, c0: mean(&sweep.ys), r_squared: if flat { 1.0 } else { 0.0 } });
    if !flat {
        let mut best_r2 = f64::NEG_INFINITY;
        for cand in &CandidateBasis::ALL[1..] {
            if let Ok(fit) = fit_candidate(&sweep.xs, &sweep.ys, *cand) {
                if fit.r_squared > best_r2 + R2_TIE {
                    best_r2 = fit.r_squared;
                    best = (*cand, fit);
                }
            }
        }
    }
    let (candidate, fit) = best;
    EdgeFit {
        layer: sweep.layer,
        from_node: sweep.from,
        to_node: sweep.to,
        candidate,
        a: fit.a,
        c0: fit.c0,
        r_squared: fit.r_squared,
        active_range: sweep.active_range,
        importance: sweep.importance,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub detected_family: Family,
    pub dominant_fits: Vec<EdgeFit>,
    /// Mean R² over all dominant edges.
    pub mean_r2: f64,
    /// Mean R² over the dominant edges that voted for the detected family.
    pub family_r2: f64,
}

/// Default number of most important edges that vote on the family.
pub const DEFAULT_TOP_K: usize = 4;

/// Majority family among the `top_k` most important edges; ties go to the
/// family whose voters have the higher mean R².
pub fn classify_family(fits: &[EdgeFit], top_k: usize) -> Result<FamilyReport> {
    if fits.is_empty() || top_k == 0 {
        return Err(Error::InvalidArgument("classification needs at least one fit and top_k >= 1".into()));
    }
    let mut order: Vec<usize> = (0..fits.len()).collect();
    order.sort_by(|&i, &j| fits[j].importance.total_cmp(&fits[i].importance));
    let dominant: Vec<EdgeFit> = order.iter().take(top_k).map(|&i| fits[i].clone()).collect();

    let mut tally: Vec<(Family, usize, f64)> = Vec::new();
    for fit in &dominant {
        let fam = fit.candidate.family();
        match tally.iter_mut().find(|t| t.0 == fam) {
            Some(t) => {
                t.1 += 1;
                t.2 += fit.r_squared;
            }
            None => tally.push((fam, 1, fit.r_squared)),
        }
    }
    let (family, count, r2_sum) = tally
        .into_iter()
        .reduce(|best, t| {
            let (mb, mt) = (best.2 / best.1 as f64, t.2 / t.1 as f64);
            if t.1 > best.1 || (t.1 == best.1 && mt > mb) {
                t
            } else {
                best
            }
        })
        .expect("dominant set is non-empty");
    let mean_r2 = dominant.iter().map(|f| f.r_squared).sum::<f64>() / dominant.len() as f64;
    Ok(FamilyReport { detected_family: family, dominant_fits: dominant, mean_r2, family_r2: r2_sum / count as f64 })
}

/// Sweep, fit every edge, and classify.
pub fn extract_family(net: &KanNetwork, spec: &SystemSpec, resolution: usize, top_k: usize) -> Result<(Vec<EdgeFit>, FamilyReport)> {
    let fits: Vec<EdgeFit> = sweep_edges(net, spec, resolution)?.iter().map(best_fit).collect();
    let report = classify_family(&fits, top_k)?;
    Ok((fits, report))
}
