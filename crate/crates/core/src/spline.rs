//! Uniform-knot B-spline bases.
//!
//! A [`KnotGrid`] with `G` intervals over `[lo, hi]` and order `k` carries the
//! extended knot vector `t_i = lo + (i - k) h`, `i = 0..G+2k`, `h = (hi - lo)/G`,
//! giving `G + k` basis functions. Inputs outside `[lo, hi]` are clamped before
//! evaluation, so values are held constant there and derivatives vanish.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest supported spline order.
pub const MAX_ORDER: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotGrid {
    lo: f64,
    hi: f64,
    intervals: usize,
    order: usize,
    knots: Vec<f64>,
}

impl KnotGrid {
    pub fn new(lo: f64, hi: f64, intervals: usize, order: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!("knot range [{lo}, {hi}] is empty")));
        }
        if order > MAX_ORDER {
            return Err(Error::InvalidArgument(format!("spline order {order} exceeds {MAX_ORDER}")));
        }
        if intervals == 0 {
            return Err(Error::InvalidArgument("grid needs at least one interval".into()));
        }
        let h = (hi - lo) / intervals as f64;
        let knots = (0..intervals + 2 * order + 1)
            .map(|i| lo + (i as f64 - order as f64) * h)
            .collect();
        Ok(Self { lo, hi, intervals, order, knots })
    }

    /// Same intervals and order over a new range.
    pub fn with_range(&self, lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, self.intervals, self.order)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_basis(&self) -> usize {
        self.intervals + self.order
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn basis_values(&self, x: f64) -> Vec<f64> {
        self.local(x).scatter(self.n_basis(), |l| &l.values)
    }

    pub fn basis_derivatives(&self, x: f64) -> Vec<f64> {
        self.local(x).scatter(self.n_basis(), |l| &l.first)
    }

    pub fn basis_second_derivatives(&self, x: f64) -> Vec<f64> {
        self.local(x).scatter(self.n_basis(), |l| &l.second)
    }

    /// The `k + 1` bases that can be nonzero at `x`, with first and second
    /// derivatives, via the Cox–de Boor triangle on the knot span containing
    /// the clamped input.
    pub fn local(&self, x: f64) -> LocalBasis {
        let k = self.order;
        let t = &self.knots;
        let outside = !(self.lo..=self.hi).contains(&x);
        let x = if x.is_nan() { self.lo } else { self.clamp(x) };

        // Span j with t_j <= x < t_{j+1}; x = hi uses the last interior span.
        let h = (self.hi - self.lo) / self.intervals as f64;
        let cell = (((x - self.lo) / h).floor().max(0.0) as usize).min(self.intervals - 1);
        let span = k + cell;

        // levels[d][r] = B_{span-d+r, d}(x), r = 0..=d
        let mut levels = [[0.0; MAX_ORDER + 1]; MAX_ORDER + 1];
        levels[0][0] = 1.0;
        for d in 1..=k {
            for r in 0..=d {
                let i = span + r - d;
                let mut acc = 0.0;
                if r >= 1 {
                    acc += (x - t[i]) / (t[i + d] - t[i]) * levels[d - 1][r - 1];
                }
                if r < d {
                    acc += (t[i + d + 1] - x) / (t[i + d + 1] - t[i + 1]) * levels[d - 1][r];
                }
                levels[d][r] = acc;
            }
        }

        // Derivative recurrence: order-d derivative from order-(d-1) entries.
        let derive = |lower: &[f64], d: usize| -> [f64; MAX_ORDER + 1] {
            let mut out = [0.0; MAX_ORDER + 1];
            let df = d as f64;
            for r in 0..=d {
                let i = span + r - d;
                if r >= 1 {
                    out[r] += df / (t[i + d] - t[i]) * lower[r - 1];
                }
                if r < d {
                    out[r] -= df / (t[i + d + 1] - t[i + 1]) * lower[r];
                }
            }
            out
        };

        let mut basis = LocalBasis {
            start: span - k,
            len: k + 1,
            values: levels[k],
            first: [0.0; MAX_ORDER + 1],
            second: [0.0; MAX_ORDER + 1],
        };
        if !outside && k >= 1 {
            basis.first = derive(&levels[k - 1], k);
            if k >= 2 {
                let lower_first = derive(&levels[k - 2], k - 1);
                basis.second = derive(&lower_first, k);
            }
        }
        basis
    }
}

/// Nonzero window of the basis at one point: entry `r` belongs to basis
/// function `start + r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalBasis {
    pub start: usize,
    pub len: usize,
    pub values: [f64; MAX_ORDER + 1],
    pub first: [f64; MAX_ORDER + 1],
    pub second: [f64; MAX_ORDER + 1],
}

impl LocalBasis {
    fn scatter(&self, n: usize, pick: impl Fn(&Self) -> &[f64; MAX_ORDER + 1]) -> Vec<f64> {
        let mut out = vec![0.0; n];
        out[self.start..self.start + self.len].copy_from_slice(&pick(self)[..self.len]);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(g: usize) -> KnotGrid {
        KnotGrid::new(-2.5, 2.5, g, 3).unwrap()
    }

    #[test]
    fn knot_layout() {
        let g = grid(5);
        assert_eq!(g.knots().len(), 5 + 2 * 3 + 1);
        assert_eq!(g.n_basis(), 8);
        assert!(g.knots().windows(2).all(|w| w[0] < w[1]));
        assert!((g.knots()[3] + 2.5).abs() < 1e-12);
        assert!((g.knots()[8] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_empty_range() {
        assert!(KnotGrid::new(1.0, 1.0, 5, 3).is_err());
        assert!(KnotGrid::new(0.0, 1.0, 0, 3).is_err());
    }

    #[test]
    fn symmetric_grid_gives_palindrome_at_zero() {
        let v = grid(5).basis_values(0.0);
        for i in 0..v.len() {
            assert!((v[i] - v[v.len() - 1 - i]).abs() < 1e-14, "{v:?}");
        }
    }

    #[test]
    fn clamps_below_range() {
        let g = grid(5);
        assert_eq!(g.basis_values(-2.5), g.basis_values(-3.5));
        assert_eq!(g.basis_values(2.5), g.basis_values(9.0));
    }

    #[test]
    fn derivative_vanishes_in_clamp_region() {
        let g = grid(5);
        assert!(g.basis_derivatives(-3.0).iter().all(|&d| d == 0.0));
        assert!(g.basis_second_derivatives(3.0).iter().all(|&d| d == 0.0));
    }

    #[test]
    fn partition_of_unity_at_endpoints() {
        for g in [3, 5, 7, 10] {
            let grid = grid(g);
            for x in [grid.lo(), grid.hi()] {
                let s: f64 = grid.basis_values(x).iter().sum();
                assert!((s - 1.0).abs() < 1e-12, "G={g} x={x} sum={s}");
            }
        }
    }

    /// Central differences of the basis values; independent of the derivative recurrence.
    fn fd_first(grid: &KnotGrid, x: f64, h: f64) -> Vec<f64> {
        let p = grid.basis_values(x + h);
        let m = grid.basis_values(x - h);
        p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    }

    fn fd_second(grid: &KnotGrid, x: f64, h: f64) -> Vec<f64> {
        let p = grid.basis_derivatives(x + h);
        let m = grid.basis_derivatives(x - h);
        p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn derivatives_match_finite_differences_at_100_points() {
        let g = grid(5);
        let mut rng = crate::rng::SeededRng::new(11);
        for _ in 0..100 {
            let x = rng.uniform_in(-2.45, 2.45);
            let exact = g.basis_derivatives(x);
            let approx = fd_first(&g, x, 1e-5);
            for (a, b) in exact.iter().zip(&approx) {
                assert!(rel_err(*a, *b) < 1e-5, "x={x} exact={a} fd={b}");
            }
            let exact2 = g.basis_second_derivatives(x);
            let approx2 = fd_second(&g, x, 1e-5);
            for (a, b) in exact2.iter().zip(&approx2) {
                assert!(rel_err(*a, *b) < 1e-4, "x={x} exact={a} fd={b}");
            }
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity_and_nonnegativity(
            gi in prop::sample::select(vec![3usize, 5, 7, 10]),
            x in -2.5f64..=2.5,
        ) {
            let g = grid(gi);
            let v = g.basis_values(x);
            prop_assert_eq!(v.len(), gi + 3);
            prop_assert!(v.iter().all(|&b| b >= 0.0));
            prop_assert!(v.iter().filter(|&&b| b != 0.0).count() <= 4);
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn derivative_sums_to_zero(gi in prop::sample::select(vec![3usize, 5, 7, 10]), x in -2.49f64..2.49) {
            let g = grid(gi);
            prop_assert!(g.basis_derivatives(x).iter().sum::<f64>().abs() < 1e-10);
            prop_assert!(g.basis_second_derivatives(x).iter().sum::<f64>().abs() < 1e-9);
        }

        #[test]
        fn local_support(gi in prop::sample::select(vec![3usize, 5, 7, 10]), x in -2.5f64..=2.5) {
            let g = grid(gi);
            let t = g.knots();
            for (m, b) in g.basis_values(x).iter().enumerate() {
                if x < t[m] || x > t[m + 4] {
                    prop_assert_eq!(*b, 0.0);
                }
            }
        }
    }
}
