//! Flows of a vector field without interior zeros: time coordinate, time-t
//! maps and the time `τ` with `g = f^τ`.
//!
//! Flow maps are computed from the time coordinate `T(x) = ∫_c^x dξ/ν(ξ)`
//! through the identity `T(f^t(x)) - T(x) = t`. The increment is integrated
//! locally from `x`, never as a difference of two large `T` values, so points
//! close to a (possibly flat) zero of `ν` keep their precision.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::Tolerances;
use crate::diffeo::{fmt17, Diffeo, Local};
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::interval::{chebyshev_points, Interval};
use crate::quadrature::integrate_scaled;
use crate::scalar::Real;

/// `∫_x^y dξ/ν(ξ)` for `x, y` in one zero-free cell of `ν`.
///
/// Segments hugging a zero `e` with `Dν(e) = κ ≠ 0` are split into the
/// logarithmic model `log((y-e)/(x-e))/κ`, integrated exactly, plus a
/// smooth remainder integrated numerically.
pub fn local_time<T: Real>(nu: &VectorField<T>, x: T, y: T, rel_tol: f64) -> Result<T> {
    if x == y {
        return Ok(T::zero());
    }
    let rel = T::floor_tol(rel_tol, 4.0);
    let inv = |s: T| T::one() / nu.value(s);
    let (z_lo, z_hi) = nu.zero_bracket(x.min(y));
    let (v_lo, v_hi) = nu.vanishes_at_ends();
    let dom = nu.domain();
    let lo_is_zero = z_lo > dom.lo || v_lo;
    let hi_is_zero = z_hi < dom.hi || v_hi;
    let near = |e: T, is_zero: bool| -> Option<T> {
        if !is_zero {
            return None;
        }
        let (a, b) = ((x - e).abs(), (y - e).abs());
        let (dmin, dmax) = (a.min(b), a.max(b));
        if dmin > T::zero() && dmax > T::c(2.0) * dmin {
            let kappa = nu.eval(e).1;
            if kappa != T::zero() && kappa.is_finite() {
                return Some(kappa);
            }
        }
        None
    };
    let model = if (x.min(y) - z_lo) <= (z_hi - x.max(y)) {
        near(z_lo, lo_is_zero).map(|k| (z_lo, k))
    } else {
        near(z_hi, hi_is_zero).map(|k| (z_hi, k))
    };
    let abs_tol = T::floor_tol(1e-300, 0.0);
    // nearest zero of ν, for geometric splitting of the path toward it
    let e = if (x.min(y) - z_lo) <= (z_hi - x.max(y)) {
        lo_is_zero.then_some(z_lo)
    } else {
        hi_is_zero.then_some(z_hi)
    };
    let pieces = |a: T, b: T| -> Vec<T> {
        let mut cuts = vec![a];
        if let Some(e) = e {
            let (da, db) = ((a - e).abs(), (b - e).abs());
            let s = (b - a).signum();
            if da.min(db) > T::zero() {
                let mut d = da.min(db) * T::c(2.0);
                while d < da.max(db) / T::c(1.5) {
                    cuts.push(if da < db { e + (a - e).signum() * d } else { e + (b - e).signum() * d });
                    d = d * T::c(2.0);
                }
                if da > db {
                    cuts[1..].reverse();
                }
                cuts.retain(|c| (*c - a) * s >= T::zero());
            }
        }
        cuts.push(b);
        cuts
    };
    // ν(s) is evaluated at a rounded s, so near a zero e its relative
    // error is about eps |e| / |s - e|
    let scale = |s: T| {
        let v = inv(s).abs();
        match e {
            Some(e) if s != e => v * (T::one() + e.abs() / (s - e).abs()),
            _ => v,
        }
    };
    let split = |g: &dyn Fn(T) -> T, tol: T| -> Result<T> {
        let cuts = pieces(x, y);
        let mut acc = T::zero();
        for w in cuts.windows(2) {
            acc = acc + match integrate_scaled(&g, &scale, w[0], w[1], tol, rel) {
                Ok(v) => v,
                // a tabulated field is only C¹ at its nodes; integrate piece by piece
                Err(Error::Quadrature { .. }) if nu.is_sampled() => {
                    let mut nodes = vec![w[0]];
                    nodes.extend(nu.breakpoints(w[0], w[1]));
                    nodes.push(w[1]);
                    let part = tol / T::c(nodes.len() as f64);
                    let mut sub = T::zero();
                    for n in nodes.windows(2) {
                        sub = sub + integrate_scaled(&g, &scale, n[0], n[1], part, rel)?;
                    }
                    sub
                }
                Err(e) => return Err(e),
            };
        }
        Ok(acc)
    };
    match model {
        Some((e, kappa)) => {
            let rem = |s: T| inv(s) - T::one() / (kappa * (s - e));
            let log_part = ((y - e) / (x - e)).ln() / kappa;
            let r = split(&rem, abs_tol.max(rel * log_part.abs()))?;
            Ok(log_part + r)
        }
        None => split(&inv, abs_tol),
    }
}

/// Tabulated time coordinate `T(x) = ∫_c^x dξ/ν` on the interior nodes.
#[derive(Debug, Clone)]
pub struct TimeCoordinate<T: Real> {
    pub field: VectorField<T>,
    pub basepoint: T,
    pub xs: Vec<T>,
    pub ts: Vec<T>,
    /// `+1` when `T` increases with `x` (`ν > 0`), else `-1`.
    pub direction_sign: T,
    rel_tol: f64,
}

impl<T: Real> TimeCoordinate<T> {
    /// Builds `T` with basepoint at the interior node nearest `c`.
    pub fn new(nu: &VectorField<T>, c: T, tol: &Tolerances) -> Result<Self> {
        if !nu.interior_zeros().is_empty() {
            return Err(Error::InteriorZero { at: nu.interior_zeros()[0].f64() });
        }
        let sign = nu
            .interior_sign(tol.grid.min(2049))
            .ok_or_else(|| Error::InteriorZero { at: find_zero_hint(nu).f64() })?;
        let dom = nu.domain();
        if !(c > dom.lo && c < dom.hi) {
            return Err(Error::InvalidInterval { lo: c.f64(), hi: c.f64() });
        }
        let (v_lo, v_hi) = nu.vanishes_at_ends();
        let all = nu.nodes(tol.grid);
        let n = all.len();
        let start = usize::from(v_lo);
        let end = if v_hi { n - 1 } else { n };
        let xs: Vec<T> = all[start..end].to_vec();
        let ic = xs
            .iter()
            .enumerate()
            .min_by(|a, b| (*a.1 - c).abs().partial_cmp(&(*b.1 - c).abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        let basepoint = c;
        let segs: Vec<T> = xs
            .par_windows(2)
            .map(|w| local_time(nu, w[0], w[1], tol.eps_quad))
            .collect::<Result<_>>()?;
        let mut ts = vec![T::zero(); xs.len()];
        ts[ic] = local_time(nu, c, xs[ic], tol.eps_quad)?;
        for i in ic + 1..xs.len() {
            ts[i] = ts[i - 1] + segs[i - 1];
        }
        for i in (0..ic).rev() {
            ts[i] = ts[i + 1] - segs[i];
        }
        Ok(Self { field: nu.clone(), basepoint, xs, ts, direction_sign: sign, rel_tol: tol.eps_quad })
    }

    /// Resolved range `[min T, max T]`.
    pub fn range(&self) -> (T, T) {
        let a = self.ts[0];
        let b = self.ts[self.ts.len() - 1];
        (a.min(b), a.max(b))
    }

    /// `T(x)`: nearest node value plus a local integral.
    pub fn eval(&self, x: T) -> Result<T> {
        let i = self.nearest(x);
        Ok(self.ts[i] + local_time(&self.field, self.xs[i], x, self.rel_tol)?)
    }

    /// `T⁻¹(s)`, within the resolved range.
    pub fn inverse(&self, s: T) -> Result<T> {
        let (lo, hi) = self.range();
        if !(s >= lo && s <= hi) {
            return Err(Error::FlowRange { at: self.basepoint.f64(), time: s.f64(), t_min: lo.f64(), t_max: hi.f64() });
        }
        // nearest node in T, then flow from there
        let i = self
            .ts
            .iter()
            .enumerate()
            .min_by(|a, b| (*a.1 - s).abs().partial_cmp(&(*b.1 - s).abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        let flow = FieldFlow::new(self.field.clone(), self.rel_tol);
        let d = flow.displacement(self.xs[i], s - self.ts[i])?;
        Ok(self.xs[i] + d)
    }

    fn nearest(&self, x: T) -> usize {
        let k = self.xs.partition_point(|v| *v < x);
        if k == 0 {
            0
        } else if k >= self.xs.len() {
            self.xs.len() - 1
        } else if (self.xs[k] - x).abs() < (x - self.xs[k - 1]).abs() {
            k
        } else {
            k - 1
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,T")?;
        for (x, t) in self.xs.iter().zip(&self.ts) {
            writeln!(w, "{},{}", fmt17(x.f64()), fmt17(t.f64()))?;
        }
        Ok(())
    }
}

fn find_zero_hint<T: Real>(nu: &VectorField<T>) -> T {
    let xs = nu.nodes(1025);
    let n = xs.len();
    for i in 1..n - 1 {
        let v = nu.value(xs[i]);
        if v == T::zero() || (i + 1 < n - 1 && v.signum() != nu.value(xs[i + 1]).signum()) {
            return xs[i];
        }
    }
    nu.domain().mid()
}

/// Pointwise evaluator of the flow of a field.
#[derive(Debug, Clone)]
pub struct FieldFlow<T: Real> {
    pub field: VectorField<T>,
    rel_tol: f64,
}

impl<T: Real> FieldFlow<T> {
    pub fn new(field: VectorField<T>, rel_tol: f64) -> Self {
        Self { field, rel_tol }
    }

    /// Time needed to reach the edge of the cell containing `x` in the
    /// direction of `sign`; infinite when that edge is a zero of `ν`.
    fn reach(&self, x: T, toward_hi: bool) -> Result<T> {
        let (z_lo, z_hi) = self.field.zero_bracket(x);
        let dom = self.field.domain();
        let (v_lo, v_hi) = self.field.vanishes_at_ends();
        let (edge, is_zero) = if toward_hi {
            (z_hi, z_hi < dom.hi || v_hi)
        } else {
            (z_lo, z_lo > dom.lo || v_lo)
        };
        if is_zero {
            Ok(T::infinity())
        } else {
            local_time(&self.field, x, edge, self.rel_tol)
        }
    }

    /// Attainable time window `[t_min, t_max]` at `x`.
    pub fn time_window(&self, x: T) -> Result<(T, T)> {
        let a = self.reach(x, false)?;
        let b = self.reach(x, true)?;
        Ok((a.min(b), a.max(b)))
    }

    /// `f^t(x) - x`.
    pub fn displacement(&self, x: T, t: T) -> Result<T> {
        if t == T::zero() {
            return Ok(T::zero());
        }
        let v0 = self.field.value(x);
        if v0 == T::zero() {
            return Ok(T::zero());
        }
        let dir = (t * v0).signum();
        let toward_hi = dir > T::zero();
        let (z_lo, z_hi) = self.field.zero_bracket(x);
        let u_max = if toward_hi { z_hi - x } else { x - z_lo };
        if u_max <= T::zero() {
            return Ok(T::zero());
        }
        let target = t.abs();
        let edge_time = self.reach(x, toward_hi)?.abs();
        if edge_time.is_finite() && edge_time < target {
            let (a, b) = self.time_window(x)?;
            return Err(Error::FlowRange { at: x.f64(), time: t.f64(), t_min: a.f64(), t_max: b.f64() });
        }
        // φ(u) = |∫_x^{x + dir u} dξ/ν| - |t|, increasing in u.
        let rel = T::floor_tol(self.rel_tol, 4.0);
        let point = |u: T| x + dir * u;
        // initial guess: a few RK4 steps of dx/dt = ν
        let mut u = {
            let steps = 8;
            let h = t / T::c(steps as f64);
            let mut y = x;
            for _ in 0..steps {
                let k1 = self.field.value(y);
                let k2 = self.field.value(y + h * k1 / T::c(2.0));
                let k3 = self.field.value(y + h * k2 / T::c(2.0));
                let k4 = self.field.value(y + h * k3);
                y = y + h * (k1 + T::c(2.0) * (k2 + k3) + k4) / T::c(6.0);
                y = y.max(z_lo).min(z_hi);
            }
            (y - x).abs()
        };
        let (mut a, mut b) = (T::zero(), u_max);
        if !(u > a && u < b) {
            u = (a + b) / T::c(2.0);
        }
        let mut at = T::zero();
        let mut acc = T::zero();
        let tiny = T::floor_tol(1e-15, 4.0);
        for _ in 0..100 {
            acc = acc + local_time(&self.field, point(at), point(u), self.rel_tol)?.abs() * sign_of(u - at);
            at = u;
            let phi = acc - target;
            if phi == T::zero() {
                break;
            }
            if phi > T::zero() {
                b = u;
            } else {
                a = u;
            }
            if phi.abs() <= rel * target * T::c(1e-2) {
                break;
            }
            let vu = self.field.value(point(u)).abs();
            let mut next = u - phi * vu;
            if next == u {
                break;
            }
            if !(next > a && next < b) || !next.is_finite() {
                next = (a + b) / T::c(2.0);
            }
            let step = (next - u).abs();
            u = next;
            // the image point is only resolved to a few ulps of its position
            let ulp = tiny * point(u).abs().max(x.abs());
            if step <= tiny * u.max(T::min_positive_value()) || step <= ulp {
                break;
            }
            if (b - a) <= tiny * b || (b - a) <= ulp {
                break;
            }
        }
        Ok(dir * u)
    }

    /// Displacement and derivatives of `f^t` at `x`.
    pub fn local(&self, x: T, t: T) -> Result<Local<T>> {
        if t == T::zero() {
            return Ok(Local { disp: T::zero(), d1: T::one(), d2: T::zero() });
        }
        let (vx, dvx) = self.field.eval(x);
        if vx != T::zero() {
            if let Some(l) = self.taylor(x, t, vx, dvx) {
                return Ok(l);
            }
        }
        let s = self.displacement(x, t)?;
        let y = x + s;
        let scale = self.field.domain().len();
        if vx == T::zero() {
            let d1 = (t * dvx).exp();
            let c2 = self.second_derivative(x);
            let d2 = if dvx == T::zero() {
                d1 * c2 * t
            } else {
                d1 * c2 * ((t * dvx).exp() - T::one()) / dvx
            };
            return Ok(Local { disp: s, d1, d2 });
        }
        let (vy, dvy) = self.field.eval(y);
        let d1 = vy / vx;
        let d2 = if s.abs() < T::c(1e-6) * scale {
            d1 * s / vx * self.second_derivative(x + s / T::c(2.0))
        } else {
            d1 * (dvy - dvx) / vx
        };
        Ok(Local { disp: s, d1, d2 })
    }

    /// Series of the flow in `t` for a point that barely moves. There
    /// `x + s` is only a few ulps from `x`, so `ν(x + s) / ν(x)` is mostly
    /// rounding while the series stays exact to the last bit.
    fn taylor(&self, x: T, t: T, v: T, dv: T) -> Option<Local<T>> {
        let a = t * dv;
        if !(a.abs() <= T::c(1e-5)) {
            return None;
        }
        let d2v = self.second_derivative(x);
        let b = t * t * v * d2v;
        if !(b.abs() <= T::c(1e-10)) {
            return None;
        }
        let (two, six) = (T::c(2.0), T::c(6.0));
        // s = tν + t²νDν/2 + t³ν(Dν² + νD²ν)/6
        let disp = t * v * (T::one() + a / two + (a * a + b) / six);
        // Dφ = 1 + tDν + t²(Dν² + νD²ν)/2 + t³Dν(Dν² + 4νD²ν)/6
        let d1 = T::one() + a + (a * a + b) / two + a * (a * a + T::c(4.0) * b) / six;
        // D²φ = tD²ν (1 + 3tDν/2)
        let d2 = t * d2v * (T::one() + T::c(1.5) * a);
        Some(Local { disp, d1, d2 })
    }

    /// `D²ν` by central differences of `Dν`, second-order one-sided at the
    /// ends of the domain.
    fn second_derivative(&self, x: T) -> T {
        let dom = self.field.domain();
        let h = dom.len() * T::c(1e-5);
        let d = |s: T| self.field.eval(s).1;
        let two = T::c(2.0);
        if x - h < dom.lo {
            (T::c(-3.0) * d(x) + T::c(4.0) * d(x + h) - d(x + two * h)) / (two * h)
        } else if x + h > dom.hi {
            (T::c(3.0) * d(x) - T::c(4.0) * d(x - h) + d(x - two * h)) / (two * h)
        } else {
            (d(x + h) - d(x - h)) / (two * h)
        }
    }

    /// Time-`t` map tabulated on the field's nodes.
    pub fn tabulate(&self, t: T, grid: usize) -> Result<Diffeo<T>> {
        let xs = self.field.nodes(grid);
        let dom = self.field.domain();
        Diffeo::tabulate(dom, self.field.openness(), xs, |x| self.local(x, t))
    }
}

fn sign_of<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one()
    } else {
        -T::one()
    }
}

/// `T(x)` with basepoint `c`.
pub fn time_coordinate<T: Real>(nu: &VectorField<T>, c: T, tol: &Tolerances) -> Result<TimeCoordinate<T>> {
    TimeCoordinate::new(nu, c, tol)
}

/// Time-`t` map of `ν`, tabulated on the field's nodes.
pub fn flow_map<T: Real>(nu: &VectorField<T>, t: T, tol: &Tolerances) -> Result<Diffeo<T>> {
    FieldFlow::new(nu.clone(), tol.eps_quad).tabulate(t, tol.grid)
}

#[derive(Debug, Clone, Serialize)]
pub struct CentralizerTime {
    pub tau: f64,
    /// max - min of the per-probe times.
    pub spread: f64,
    /// Time of `f` itself on the same probes (should be 1).
    pub f_time: f64,
    pub commutator_residual: f64,
    pub probes: Vec<f64>,
}

/// The `τ` with `g = f^τ`, where `f` is the time-1 map of `ν`.
pub fn centralizer_time<T: Real>(
    f: &Diffeo<T>,
    g: &Diffeo<T>,
    nu: &VectorField<T>,
    tol: &Tolerances,
) -> Result<CentralizerTime> {
    let dom = nu.domain();
    let comm = f.restrict(dom).commutator_residual(&g.restrict(dom), 513);
    if !(comm.f64() <= tol.eps_comm) {
        return Err(Error::NotCommuting { residual: comm.f64(), tol: tol.eps_comm });
    }
    let middle = Interval { lo: dom.lo + dom.len() / T::c(4.0), hi: dom.hi - dom.len() / T::c(4.0) };
    let probes = chebyshev_points(&middle, 17);
    let times = |m: &Diffeo<T>| -> Result<Vec<T>> {
        probes
            .par_iter()
            .map(|&x| {
                let y = m.eval(x);
                if !dom.contains(y) {
                    let flow = FieldFlow::new(nu.clone(), tol.eps_quad);
                    let (a, b) = flow.time_window(x)?;
                    return Err(Error::FlowRange { at: x.f64(), time: f64::NAN, t_min: a.f64(), t_max: b.f64() });
                }
                local_time(nu, x, y, tol.eps_quad)
            })
            .collect()
    };
    let tg = times(g)?;
    let tf = times(f)?;
    let max = tg.iter().copied().fold(T::neg_infinity(), T::max);
    let min = tg.iter().copied().fold(T::infinity(), T::min);
    let spread = (max - min).f64();
    if !(spread <= tol.eps_tau) {
        return Err(Error::NonConstantTime { spread, tol: tol.eps_tau });
    }
    let tau = tg.iter().copied().sum::<T>() / T::c(tg.len() as f64);
    let f_time = tf.iter().copied().sum::<T>() / T::c(tf.len() as f64);
    Ok(CentralizerTime {
        tau: tau.f64(),
        spread,
        f_time: f_time.f64(),
        commutator_residual: comm.f64(),
        probes: probes.iter().map(|p| p.f64()).collect(),
    })
}
