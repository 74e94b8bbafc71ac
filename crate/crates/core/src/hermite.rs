//! Piecewise cubic Hermite interpolation, plain and monotone.

use crate::interval::locate;
use crate::scalar::Real;

/// Value, first and second derivative of the cubic Hermite interpolant on
/// `[x0, x1]` with end values `y0, y1` and end slopes `m0, m1`.
#[inline]
pub fn cubic<T: Real>(x0: T, x1: T, y0: T, y1: T, m0: T, m1: T, x: T) -> (T, T, T) {
    let h = x1 - x0;
    let s = (x - x0) / h;
    let one = T::one();
    let two = T::c(2.0);
    let three = T::c(3.0);
    let six = T::c(6.0);
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = two * s3 - three * s2 + one;
    let h10 = s3 - two * s2 + s;
    let h01 = -two * s3 + three * s2;
    let h11 = s3 - s2;
    let v = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
    let d00 = six * s2 - six * s;
    let d10 = three * s2 - T::c(4.0) * s + one;
    let d01 = -d00;
    let d11 = three * s2 - two * s;
    let d = (d00 * y0 + d01 * y1) / h + d10 * m0 + d11 * m1;
    let e00 = T::c(12.0) * s - six;
    let e10 = six * s - T::c(4.0);
    let e11 = six * s - two;
    let dd = (e00 * (y0 - y1)) / (h * h) + (e10 * m0 + e11 * m1) / h;
    (v, d, dd)
}

/// Evaluates a tabulated Hermite interpolant. Outside the table the end cubic
/// is continued, which is only meant for round-off excursions.
#[inline]
pub fn eval_table<T: Real>(xs: &[T], ys: &[T], ms: &[T], x: T) -> (T, T, T) {
    let i = locate(xs, x);
    cubic(xs[i], xs[i + 1], ys[i], ys[i + 1], ms[i], ms[i + 1], x)
}

/// Clamps slopes of increasing data so the cubic Hermite interpolant is
/// increasing (Fritsch–Carlson sufficient condition `α² + β² ≤ 9`).
///
/// `secants[i]` is the secant slope of interval `i`; all must be positive.
pub fn monotone_limit<T: Real>(secants: &[T], slopes: &mut [T]) {
    let nine = T::c(9.0);
    for (i, &delta) in secants.iter().enumerate() {
        if delta <= T::zero() {
            slopes[i] = T::zero();
            slopes[i + 1] = T::zero();
            continue;
        }
        if slopes[i] < T::zero() {
            slopes[i] = T::zero();
        }
        if slopes[i + 1] < T::zero() {
            slopes[i + 1] = T::zero();
        }
        let a = slopes[i] / delta;
        let b = slopes[i + 1] / delta;
        let r = a * a + b * b;
        if r > nine {
            let tau = T::c(3.0) / r.sqrt();
            slopes[i] = tau * a * delta;
            slopes[i + 1] = tau * b * delta;
        }
    }
}

/// Three-point finite-difference slopes (non-uniform), second order.
pub fn fd_slopes<T: Real>(xs: &[T], ys: &[T]) -> Vec<T> {
    let n = xs.len();
    assert!(n >= 3, "need at least three nodes");
    let mut m = vec![T::zero(); n];
    for i in 1..n - 1 {
        let h0 = xs[i] - xs[i - 1];
        let h1 = xs[i + 1] - xs[i];
        let d0 = (ys[i] - ys[i - 1]) / h0;
        let d1 = (ys[i + 1] - ys[i]) / h1;
        m[i] = (h1 * d0 + h0 * d1) / (h0 + h1);
    }
    let end = |x0: T, x1: T, x2: T, y0: T, y1: T, y2: T| {
        let h0 = x1 - x0;
        let h1 = x2 - x1;
        let d0 = (y1 - y0) / h0;
        let d1 = (y2 - y1) / h1;
        ((T::c(2.0) * h0 + h1) * d0 - h0 * d1) / (h0 + h1)
    };
    m[0] = end(xs[0], xs[1], xs[2], ys[0], ys[1], ys[2]);
    m[n - 1] = end(
        xs[n - 1],
        xs[n - 2],
        xs[n - 3],
        ys[n - 1],
        ys[n - 2],
        ys[n - 3],
    );
    m
}

/// As [`fd_slopes`], but each interior slope is the median of the centred
/// stencil and the two one-sided second-order stencils. Where a higher
/// derivative jumps at a node the centred stencil straddles the jump and is
/// off by O(h); the one-sided ones are not.
pub fn fd_slopes_median<T: Real>(xs: &[T], ys: &[T]) -> Vec<T> {
    let n = xs.len();
    let mut m = fd_slopes(xs, ys);
    if n < 5 {
        return m;
    }
    let one_sided = |i: usize, j: usize, k: usize| {
        let (h0, h1) = (xs[j] - xs[i], xs[k] - xs[j]);
        let (d0, d1) = ((ys[j] - ys[i]) / h0, (ys[k] - ys[j]) / h1);
        // slope at xs[i] of the parabola through the three points
        ((T::c(2.0) * h0 + h1) * d0 - h0 * d1) / (h0 + h1)
    };
    for (i, c) in m.iter_mut().enumerate().take(n - 2).skip(2) {
        let l = one_sided(i, i - 1, i - 2);
        let r = one_sided(i, i + 1, i + 2);
        *c = l.max(r).min(*c).max(l.min(r));
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_cubics_exactly() {
        let p = |x: f64| 1.0 + 2.0 * x - x * x + 0.5 * x * x * x;
        let dp = |x: f64| 2.0 - 2.0 * x + 1.5 * x * x;
        let (v, d, dd) = cubic(0.2, 0.7, p(0.2), p(0.7), dp(0.2), dp(0.7), 0.45);
        assert!((v - p(0.45)).abs() < 1e-14);
        assert!((d - dp(0.45)).abs() < 1e-13);
        assert!((dd - (-2.0 + 3.0 * 0.45)).abs() < 1e-12);
    }

    #[test]
    fn limiter_prevents_overshoot() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [0.0, 0.01, 1.0];
        let secants = [0.01, 0.99];
        let mut m = vec![0.0, 5.0, 1.0];
        monotone_limit(&secants, &mut m);
        let mut prev = -1.0;
        for k in 0..=2000 {
            let x = k as f64 * 1e-3;
            let (v, _, _) = eval_table(&xs, &ys, &m, x);
            assert!(v >= prev, "not monotone at {x}");
            prev = v;
        }
    }

    #[test]
    fn median_slopes_ignore_a_kink_in_curvature() {
        // y = (x - 1/2)^2 with a different coefficient on each side
        let xs: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| if *x < 0.5 { 3.0 } else { 1.0 } * (x - 0.5) * (x - 0.5)).collect();
        let plain = fd_slopes(&xs, &ys);
        let med = fd_slopes_median(&xs, &ys);
        assert!(plain[10].abs() > 1e-3);
        assert!(med[10].abs() < 1e-14);
        let smooth: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        let m = fd_slopes_median(&xs, &smooth);
        assert!(xs.iter().zip(&m).all(|(x, s)| (s - x.cos()).abs() < 1e-3));
    }

    #[test]
    fn fd_slopes_exact_on_quadratics() {
        let xs = [0.0, 0.1, 0.35, 0.6, 1.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x * x - x).collect();
        let m = fd_slopes(&xs, &ys);
        for (x, s) in xs.iter().zip(&m) {
            assert!((s - (6.0 * x - 1.0)).abs() < 1e-12);
        }
    }
}
