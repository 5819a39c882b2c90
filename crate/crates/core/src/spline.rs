//! Uniform-grid B-spline bases.
//!
//! A grid with `G` intervals on `[lo, hi]` and order `d` carries
//! `G + 2d + 1` knots (`d` uniform padding knots beyond each end) and
//! `K = G + d` basis functions. Basis `k` is supported on
//! `[t_k, t_{k+d+1}]`; at any point at most `d + 1` are nonzero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineGrid {
    lo: f64,
    hi: f64,
    intervals: usize,
    order: usize,
    knots: Vec<f64>,
}

impl SplineGrid {
    pub fn new(lo: f64, hi: f64, intervals: usize, order: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("spline domain [{lo}, {hi}] is empty")));
        }
        if intervals == 0 {
            return Err(Error::Config("spline grid needs at least one interval".into()));
        }
        let h = (hi - lo) / intervals as f64;
        let knots = (0..intervals + 2 * order + 1)
            .map(|i| lo + (i as f64 - order as f64) * h)
            .collect();
        Ok(Self {
            lo,
            hi,
            intervals,
            order,
            knots,
        })
    }

    /// Grid on the default domain `[-1, 1]`.
    pub fn uniform(intervals: usize, order: usize) -> Result<Self> {
        Self::new(-1.0, 1.0, intervals, order)
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

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.intervals as f64
    }

    /// Number of basis functions, `G + d`.
    pub fn basis_count(&self) -> usize {
        self.intervals + self.order
    }

    /// Nonzero bases at a point, `d + 1`.
    pub fn active_count(&self) -> usize {
        self.order + 1
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    /// Knot span `m` with `t_m ≤ x < t_{m+1}`, restricted to the domain.
    fn span(&self, x: f64) -> usize {
        let d = self.order;
        let rel = ((x - self.lo) / self.spacing()).floor();
        let cell = if rel <= 0.0 {
            0
        } else {
            (rel as usize).min(self.intervals - 1)
        };
        // Floating error in the division can put x one cell off near a knot.
        let mut m = cell + d;
        if x < self.knots[m] && m > d {
            m -= 1;
        } else if m + 1 < d + self.intervals && x >= self.knots[m + 1] {
            m += 1;
        }
        m
    }

    /// Evaluates the `d + 1` possibly-nonzero bases at `x` (clamped into the
    /// domain) into `out`, returning the index of the first one.
    pub fn eval_active(&self, x: f64, out: &mut [f64]) -> usize {
        debug_assert_eq!(out.len(), self.order + 1);
        let x = self.clamp(x);
        let m = self.span(x);
        self.cox_de_boor(x, m, self.order, out);
        m - self.order
    }

    /// Like [`eval_active`](Self::eval_active) but also writes `dB_k/dx`.
    /// Inputs outside the domain are clamped, so their derivative is zero.
    pub fn eval_active_with_deriv(&self, x: f64, out: &mut [f64], deriv: &mut [f64]) -> usize {
        let d = self.order;
        debug_assert_eq!(out.len(), d + 1);
        debug_assert_eq!(deriv.len(), d + 1);
        let outside = x < self.lo || x > self.hi;
        let xc = self.clamp(x);
        let m = self.span(xc);
        self.cox_de_boor(xc, m, d, out);
        if d == 0 || outside {
            deriv.iter_mut().for_each(|v| *v = 0.0);
            return m - d;
        }
        // B'_{k,d} = (B_{k,d-1} − B_{k+1,d-1}) / h on a uniform grid.
        let mut lower = vec![0.0; d];
        self.cox_de_boor(xc, m, d - 1, &mut lower);
        let inv_h = 1.0 / self.spacing();
        for r in 0..=d {
            let left = if r >= 1 { lower[r - 1] } else { 0.0 };
            let right = if r < d { lower[r] } else { 0.0 };
            deriv[r] = (left - right) * inv_h;
        }
        m - d
    }

    /// Triangular Cox–de Boor evaluation of the order-`p` bases
    /// `B_{m-p..=m}` on span `m`.
    fn cox_de_boor(&self, x: f64, m: usize, p: usize, out: &mut [f64]) {
        let t = &self.knots;
        let mut left = [0.0f64; 16];
        let mut right = [0.0f64; 16];
        let (mut lv, mut rv);
        let (left, right): (&mut [f64], &mut [f64]) = if p < 16 {
            (&mut left[..=p], &mut right[..=p])
        } else {
            lv = vec![0.0; p + 1];
            rv = vec![0.0; p + 1];
            (&mut lv[..], &mut rv[..])
        };
        out[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[m + 1 - j];
            right[j] = t[m + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
    }

    /// All `K` basis values at `x` (clamped into the domain).
    pub fn basis_eval(&self, x: f64) -> Vec<f64> {
        let mut active = vec![0.0; self.order + 1];
        let start = self.eval_active(x, &mut active);
        let mut all = vec![0.0; self.basis_count()];
        all[start..start + active.len()].copy_from_slice(&active);
        all
    }

    /// Support `[t_k, t_{k+d+1}]` of basis `k`.
    pub fn basis_support(&self, k: usize) -> Result<(f64, f64)> {
        if k >= self.basis_count() {
            return Err(Error::OutOfRange {
                index: k,
                len: self.basis_count(),
            });
        }
        Ok((self.knots[k], self.knots[k + self.order + 1]))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `x · sigmoid(x)`.
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_deriv(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    /// Literal recursive Cox–de Boor with half-open indicator at order 0.
    fn literal(t: &[f64], k: usize, p: usize, x: f64) -> f64 {
        if p == 0 {
            return if t[k] <= x && x < t[k + 1] { 1.0 } else { 0.0 };
        }
        let a = (x - t[k]) / (t[k + p] - t[k]) * literal(t, k, p - 1, x);
        let b = (t[k + p + 1] - x) / (t[k + p + 1] - t[k + 1]) * literal(t, k + 1, p - 1, x);
        a + b
    }

    #[test]
    fn knot_layout() {
        let g = SplineGrid::uniform(5, 3).unwrap();
        assert_eq!(g.knots().len(), 5 + 2 * 3 + 1);
        assert_eq!(g.basis_count(), 8);
        assert!(g.knots().windows(2).all(|w| w[0] < w[1]));
        assert!((g.knots()[3] + 1.0).abs() < 1e-15);
        assert!((g.knots()[8] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(SplineGrid::new(1.0, 1.0, 5, 3).is_err());
        assert!(SplineGrid::new(-1.0, 1.0, 0, 3).is_err());
    }

    #[test]
    fn x_zero_matches_literal_recursion() {
        let g = SplineGrid::uniform(5, 3).unwrap();
        let fast = g.basis_eval(0.0);
        for (k, v) in fast.iter().enumerate() {
            let oracle = literal(g.knots(), k, 3, 0.0);
            assert!((v - oracle).abs() < 1e-12, "k={k}: {v} vs {oracle}");
        }
    }

    #[test]
    fn random_points_match_literal_recursion() {
        let mut rng = Rng::new(17);
        for (gi, d) in [(5, 3), (3, 2), (7, 1), (10, 0), (4, 5)] {
            let g = SplineGrid::uniform(gi, d).unwrap();
            for _ in 0..200 {
                let x = rng.uniform_in(-0.999_999, 0.999_999);
                let fast = g.basis_eval(x);
                for (k, v) in fast.iter().enumerate() {
                    let oracle = literal(g.knots(), k, d, x);
                    assert!((v - oracle).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn support_of_first_basis() {
        let g = SplineGrid::uniform(5, 3).unwrap();
        let (a, b) = g.basis_support(0).unwrap();
        assert!((a + 2.2).abs() < 1e-12 && (b + 0.6).abs() < 1e-12);
        assert!(g.basis_support(8).is_err());
    }

    #[test]
    fn zero_right_of_support() {
        let g = SplineGrid::uniform(5, 3).unwrap();
        let (_, b) = g.basis_support(0).unwrap();
        for x in [b + 1e-9, 0.0, 0.5, 1.0, 3.0] {
            assert_eq!(g.basis_eval(x)[0], 0.0);
        }
    }

    #[test]
    fn distant_supports_share_at_most_a_point() {
        let g = SplineGrid::uniform(5, 3).unwrap();
        for k in 0..(g.basis_count() - 4) {
            let (_, b0) = g.basis_support(k).unwrap();
            let (a1, _) = g.basis_support(k + 4).unwrap();
            assert!(b0 <= a1);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let g = SplineGrid::uniform(5, 3).unwrap();
        let mut vals = vec![0.0; 4];
        let mut ders = vec![0.0; 4];
        let h = 1e-6;
        for &x in &[-0.95, -0.31, 0.0, 0.123, 0.77] {
            let start = g.eval_active_with_deriv(x, &mut vals, &mut ders);
            let up = g.basis_eval(x + h);
            let down = g.basis_eval(x - h);
            for r in 0..4 {
                let fd = (up[start + r] - down[start + r]) / (2.0 * h);
                assert!((fd - ders[r]).abs() < 1e-6, "x={x} r={r}: {fd} vs {}", ders[r]);
            }
        }
    }

    #[test]
    fn clamping_outside_domain() {
        let g = SplineGrid::uniform(5, 3).unwrap();
        assert_eq!(g.basis_eval(-7.0), g.basis_eval(-1.0));
        assert_eq!(g.basis_eval(2.5), g.basis_eval(1.0));
        let mut v = vec![0.0; 4];
        let mut d = vec![0.0; 4];
        g.eval_active_with_deriv(1.5, &mut v, &mut d);
        assert!(d.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn silu_values() {
        assert_eq!(silu(0.0), 0.0);
        assert!((silu(20.0) - 20.0).abs() < 1e-7);
        // -1 / (1 + e)
        let expected = -1.0 / (1.0 + std::f64::consts::E);
        assert!((silu(-1.0) - expected).abs() < 1e-15);
        assert!((silu(-1.0) + 0.268_941_421_369_995_1).abs() < 1e-12);
        let h = 1e-6;
        for x in [-3.0, -0.2, 0.0, 1.7] {
            let fd = (silu(x + h) - silu(x - h)) / (2.0 * h);
            assert!((fd - silu_deriv(x)).abs() < 1e-8);
        }
    }
}
