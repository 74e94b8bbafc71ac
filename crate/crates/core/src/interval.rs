//! Intervals of `[0,1]` and the graded grids built on them.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Which end of a component is excluded (and numerically truncated).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub enum Openness {
    #[default]
    Closed,
    /// `[a, b)`: the grid stops at `b - eps_edge (b - a)`.
    OpenHi,
    /// `(a, b]`: the grid starts at `a + eps_edge (b - a)`.
    OpenLo,
}

/// A closed subinterval `[lo, hi]` of `[0, 1]` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> Interval<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        let slack = T::c(1e-12);
        if !(lo < hi) || lo < -slack || hi > T::one() + slack || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInterval { lo: lo.f64(), hi: hi.f64() });
        }
        Ok(Self { lo, hi })
    }

    pub fn unit() -> Self {
        Self { lo: T::zero(), hi: T::one() }
    }

    pub fn len(&self) -> T {
        self.hi - self.lo
    }

    pub fn mid(&self) -> T {
        (self.lo + self.hi) / T::c(2.0)
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Numerical stand-in for a half-open interval: the open end is pulled in
    /// by `eps_edge` times the length.
    pub fn truncated(&self, open: Openness, eps_edge: f64) -> Self {
        let e = self.len() * T::c(eps_edge);
        match open {
            Openness::Closed => *self,
            Openness::OpenHi => Self { lo: self.lo, hi: self.hi - e },
            Openness::OpenLo => Self { lo: self.lo + e, hi: self.hi },
        }
    }

    /// `[lo + rho L, hi - rho L]`.
    pub fn shrink(&self, rho: f64) -> Self {
        let e = self.len() * T::c(rho);
        Self { lo: self.lo + e, hi: self.hi - e }
    }

    pub fn same_as(&self, other: &Self, tol: T) -> bool {
        (self.lo - other.lo).abs() <= tol && (self.hi - other.hi).abs() <= tol
    }
}

/// Cosine-graded grid with `n` nodes on `[lo, hi]`.
///
/// The two halves are generated from opposite ends so the grid is exactly
/// mirror-symmetric, both endpoints are reproduced bitwise and, for odd `n`,
/// the midpoint is a node.
pub fn cosine_grid<T: Real>(iv: &Interval<T>, n: usize) -> Vec<T> {
    assert!(n >= 2, "grid needs at least two nodes");
    let len = iv.len();
    let m = T::c((n - 1) as f64);
    let half = T::FRAC_PI_2();
    let mut xs = Vec::with_capacity(n);
    for i in 0..n {
        let x = if 2 * i < n - 1 {
            let s = (half * T::c(i as f64) / m).sin();
            iv.lo + len * s * s
        } else if 2 * i == n - 1 {
            iv.mid()
        } else {
            let s = (half * T::c((n - 1 - i) as f64) / m).sin();
            iv.hi - len * s * s
        };
        xs.push(x);
    }
    xs[0] = iv.lo;
    xs[n - 1] = iv.hi;
    xs
}

/// Uniform grid with `n` nodes including both ends.
pub fn uniform_grid<T: Real>(iv: &Interval<T>, n: usize) -> Vec<T> {
    assert!(n >= 2);
    let m = T::c((n - 1) as f64);
    (0..n)
        .map(|i| {
            if i == n - 1 {
                iv.hi
            } else {
                iv.lo + iv.len() * T::c(i as f64) / m
            }
        })
        .collect()
}

/// `k` Chebyshev points of the first kind on `iv`, increasing.
pub fn chebyshev_points<T: Real>(iv: &Interval<T>, k: usize) -> Vec<T> {
    let kk = T::c(k as f64);
    (0..k)
        .rev()
        .map(|j| {
            let th = T::PI() * (T::c(j as f64) + T::c(0.5)) / kk;
            iv.mid() + iv.len() / T::c(2.0) * th.cos()
        })
        .collect()
}

/// Index `i` with `xs[i] <= x <= xs[i + 1]`, clamped to the valid range.
pub fn locate<T: Real>(xs: &[T], x: T) -> usize {
    let n = xs.len();
    if x <= xs[0] {
        return 0;
    }
    if x >= xs[n - 1] {
        return n - 2;
    }
    let idx = xs.partition_point(|v| *v <= x);
    idx.saturating_sub(1).min(n - 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_intervals() {
        assert!(Interval::<f64>::new(0.5, 0.5).is_err());
        assert!(Interval::<f64>::new(0.6, 0.5).is_err());
        assert!(Interval::<f64>::new(-0.1, 0.5).is_err());
        assert!(Interval::<f64>::new(0.0, 1.0).is_ok());
    }

    #[test]
    fn cosine_grid_symmetric_with_exact_midpoint() {
        let iv = Interval::<f64>::new(0.0, 1.0).unwrap();
        let g = cosine_grid(&iv, 4097);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[4096], 1.0);
        assert_eq!(g[2048], 0.5);
        for i in 0..4097 {
            assert!((g[i] - (1.0 - g[4096 - i])).abs() <= 1.2e-16);
        }
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        // graded: first gap much smaller than the central one
        assert!(g[1] - g[0] < 1e-6);
        assert!(g[2049] - g[2048] > 3e-4);
    }

    #[test]
    fn truncation_and_shrink() {
        let iv = Interval::<f64>::new(0.0, 1.0).unwrap();
        let t = iv.truncated(Openness::OpenHi, 1.0 / 1048576.0);
        assert_eq!(t.lo, 0.0);
        assert_eq!(t.hi, 1.0 - 1.0 / 1048576.0);
        let s = iv.shrink(1e-3);
        assert!((s.lo - 1e-3).abs() < 1e-15 && (s.hi - 0.999).abs() < 1e-15);
    }

    #[test]
    fn chebyshev_points_in_middle_half() {
        let iv = Interval::<f64>::new(0.25, 0.75).unwrap();
        let p = chebyshev_points(&iv, 17);
        assert_eq!(p.len(), 17);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        assert!(p.iter().all(|&x| x > 0.25 && x < 0.75));
    }

    #[test]
    fn locate_brackets() {
        let xs = [0.0, 0.1, 0.5, 1.0];
        assert_eq!(locate(&xs, -1.0), 0);
        assert_eq!(locate(&xs, 0.05), 0);
        assert_eq!(locate(&xs, 0.1), 1);
        assert_eq!(locate(&xs, 0.7), 2);
        assert_eq!(locate(&xs, 1.0), 2);
    }
}
