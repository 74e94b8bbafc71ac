//! Szekeres vector field of a diffeomorphism fixing only one endpoint.
//!
//! `ν = λ lim (φ^k)* η₀` with `η₀ = φ - id`, evaluated node by node. With
//! `y_k = φ^k(x)`, `P_k = Dφ^k(x)` and `S_k = D²φ^k/Dφ^k (x)`,
//!
//! ```text
//! η_k(x)  = (φ - id)(y_k) / P_k
//! Dη_k(x) = (Dφ(y_k) - 1) - S_k η_k(x)
//! ```
//!
//! Iteration stops once both the last increment and a bound on the
//! remaining tail are below `eps_conv`. The tail bound uses the sup of
//! `|D²φ/Dφ|` between the base and `y_k`.

use rayon::prelude::*;
use serde::Serialize;

use crate::config::Tolerances;
use crate::diffeo::Diffeo;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::flow::FieldFlow;
use crate::interval::{cosine_grid, Interval, Openness};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Contracting,
    Expanding,
}

/// Which endpoint is the fixed point the field is anchored at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Base {
    Lo,
    Hi,
}

pub fn u1(delta: f64) -> f64 {
    if delta == 0.0 {
        return 0.0;
    }
    let l = (-delta).ln_1p().abs();
    delta / (1.0 - delta) + (l / delta).ln()
}

pub fn u2(delta: f64) -> f64 {
    if delta == 0.0 {
        return 0.0;
    }
    let l = (-delta).ln_1p().abs();
    let r = delta / (1.0 - delta);
    (l / delta) * (delta + r * r.exp())
}

/// C¹ bound for the flow: `max(δ e^{u₁}, e^{u₂} - 1)`.
pub fn v(delta: f64) -> f64 {
    (delta * u1(delta).exp()).max(u2(delta).exp() - 1.0)
}

/// `λ = log m / (m - 1)`, continuous through `m = 1`.
pub fn normalization<T: Real>(m: T) -> T {
    let h = m - T::one();
    if h == T::zero() {
        T::one()
    } else if h.abs() < T::c(1e-6) {
        T::one() - h / T::c(2.0) + h * h / T::c(3.0) - h * h * h / T::c(4.0)
    } else {
        m.ln() / h
    }
}

/// Cumulative sups of `|D²φ/Dφ|` and `|D²φ|` from the base outward.
#[derive(Debug, Clone)]
struct Envelope<T> {
    dist: Vec<T>,
    log_deriv: Vec<T>,
    second: Vec<T>,
}

impl<T: Real> Envelope<T> {
    fn new(phi: &Diffeo<T>, base: T, domain: &Interval<T>, n: usize) -> Self {
        let mut xs = cosine_grid(domain, n);
        xs.sort_by(|a, b| (*a - base).abs().partial_cmp(&(*b - base).abs()).unwrap());
        let vals: Vec<(T, T)> = xs
            .par_iter()
            .map(|&x| {
                let l = phi.local(x);
                ((l.d2 / l.d1).abs(), l.d2.abs())
            })
            .collect();
        let mut log_deriv = Vec::with_capacity(n);
        let mut second = Vec::with_capacity(n);
        let (mut a, mut b) = (T::zero(), T::zero());
        for (i, (l, s)) in vals.iter().enumerate() {
            // include the neighbour on the far side, the sup between nodes
            // is not sampled
            let (l2, s2) = vals.get(i + 1).copied().unwrap_or((*l, *s));
            a = a.max(*l).max(l2);
            b = b.max(*s).max(s2);
            log_deriv.push(a);
            second.push(b);
        }
        Self { dist: xs.iter().map(|x| (*x - base).abs()).collect(), log_deriv, second }
    }

    fn at(&self, r: T) -> (T, T) {
        let k = self.dist.partition_point(|d| *d < r).min(self.dist.len() - 1);
        let slack = T::c(1.25);
        (self.log_deriv[k] * slack, self.second[k] * slack)
    }
}

/// Value and derivative of the limit at one point.
#[derive(Debug, Clone, Copy)]
pub struct PointEstimate<T> {
    pub nu: T,
    pub dnu: T,
    pub iterations: usize,
    /// Last C¹ increment, scaled by `λ`.
    pub increment: T,
    /// Bound on the remaining tail, in value and derivative.
    pub tail: T,
    pub converged: bool,
}

/// Pointwise evaluator of `λ lim (φ^k)* η₀`, with the sign flipped when
/// `φ = f⁻¹`.
#[derive(Debug, Clone)]
pub struct PullbackLimit<T: Real> {
    phi: Diffeo<T>,
    base: T,
    /// λ for `φ` (used in the iteration).
    lambda_phi: T,
    /// λ for `f` (reported).
    pub lambda: T,
    sign: T,
    pub direction: Direction,
    env: Envelope<T>,
    eps: T,
    cap: usize,
}

impl<T: Real> PullbackLimit<T> {
    /// `f` must have no fixed point in the interior of `domain`.
    pub fn new(f: &Diffeo<T>, base: Base, domain: Interval<T>, tol: &Tolerances) -> Result<Self> {
        let e = match base {
            Base::Lo => domain.lo,
            Base::Hi => domain.hi,
        };
        let probe = cosine_grid(&domain, 65);
        let mean: T = probe[1..64].iter().map(|&x| f.displacement(x)).sum();
        let toward_lo = mean < T::zero();
        let contracting = match base {
            Base::Lo => toward_lo,
            Base::Hi => !toward_lo,
        };
        let (phi, sign, direction) = if contracting {
            (f.clone(), T::one(), Direction::Contracting)
        } else {
            (f.invert()?, -T::one(), Direction::Expanding)
        };
        let lambda_phi = normalization(phi.deriv(e));
        let lambda = normalization(f.deriv(e));
        let env = Envelope::new(&phi, e, &domain, tol.grid.min(4097));
        Ok(Self {
            phi,
            base: e,
            lambda_phi,
            lambda,
            sign,
            direction,
            env,
            eps: T::c(tol.eps_conv),
            cap: tol.iter_cap,
        })
    }

    pub fn base(&self) -> T {
        self.base
    }

    /// The sequence `η_0(x), ..., η_k(x)` for the map actually iterated.
    pub fn eta_iterates(&self, x: T, k: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(k + 1);
        let (mut y, mut p) = (x, T::one());
        for _ in 0..=k {
            let l = self.phi.local(y);
            out.push(l.disp / p);
            p = p * l.d1;
            y = y + l.disp;
        }
        out
    }

    pub fn estimate(&self, x: T) -> PointEstimate<T> {
        self.estimate_traced(x, None)
    }

    /// Near-identity logarithm `ν ≈ Δ - ΔΔ'/2`, `Δ = φ - id`, and the size
    /// `max(|Δ|, |Δ'|) (Δ'² + |ΔΔ''|)` of the neglected terms in C¹.
    fn near_identity(&self, x: T) -> (T, T, T) {
        let l = self.phi.local(x);
        let (d, d1, d2) = (l.disp, l.d1 - T::one(), l.d2);
        let nu = d - d * d1 / T::c(2.0);
        let dnu = d1 - (d1 * d1 + d * d2) / T::c(2.0);
        let err = d.abs().max(d1.abs()) * (d1 * d1 + (d * d2).abs());
        (self.sign * nu, self.sign * dnu, err)
    }

    fn estimate_traced(&self, x: T, mut trace: Option<&mut Vec<T>>) -> PointEstimate<T> {
        let (nu0, dnu0, err0) = self.near_identity(x);
        if trace.is_none() && err0 <= self.eps * T::c(1e-3) {
            return PointEstimate { nu: nu0, dnu: dnu0, iterations: 0, increment: T::zero(), tail: err0, converged: true };
        }
        let e = self.base;
        let lam = self.lambda_phi;
        // geometric tail factor m/(1-m) for a hyperbolic base
        let m = self.phi.deriv(e);
        let q = if m < T::c(0.99) { Some(m / (T::one() - m)) } else { None };
        let rounding = T::c(8.0) * T::epsilon() * e.abs();
        // each step y + d(y) lands on φ(y) ≈ m y with relative error eps / m
        let step_noise = match q {
            Some(_) => T::c(8.0) * T::epsilon() / m.max(T::epsilon()),
            None => T::zero(),
        };
        let noise_at = |eta: T, deta: T, r: T| {
            lam * eta.abs().max(deta.abs()).max(T::one()) * (rounding / r.max(T::min_positive_value()) + step_noise)
        };
        let underflow = T::min_positive_value() / T::epsilon();
        let mut cur = self.phi.local(x);
        let (mut y, mut p, mut s) = (x, T::one(), T::zero());
        let mut eta = cur.disp;
        let mut deta = cur.d1 - T::one();
        let (mut ev, mut ed) = (eta, deta);
        let mut out = (eta, deta);
        let mut inc = T::infinity();
        let mut tail = T::infinity();
        let mut k = 0;
        let mut converged = false;
        while k < self.cap {
            let r_prev = (y - e).abs();
            if cur.disp == T::zero() || r_prev <= T::c(1e3) * rounding || r_prev <= underflow || p <= underflow {
                // the iterate has reached the resolution of the base
                break;
            }
            k += 1;
            s = s + cur.d2 / cur.d1 * p;
            p = p * cur.d1;
            y = y + cur.disp;
            cur = self.phi.local(y);
            let eta_n = cur.disp / p;
            let deta_n = (cur.d1 - T::one()) - s * eta_n;
            let plain_inc = lam * (eta_n - eta).abs().max((deta_n - deta).abs());
            let r = (y - e).abs();
            let (ld, sd) = self.env.at(r);
            let tau = ld * r;
            let g = tau.exp();
            let err_v = lam * eta_n.abs() * (g - T::one());
            let err_d = lam * (sd * r + tau * g * g + (s * eta_n).abs() * (g - T::one()));
            tail = err_v.max(err_d);
            let (ev_n, ed_n) = match q {
                Some(q) => (eta_n + (eta_n - eta) * q, deta_n + (deta_n - deta) * q),
                None => (eta_n, deta_n),
            };
            let ext_inc = lam * (ev_n - ev).abs().max((ed_n - ed).abs());
            eta = eta_n;
            deta = deta_n;
            ev = ev_n;
            ed = ed_n;
            if !(p > T::zero()) || !eta.is_finite() {
                break;
            }
            if plain_inc <= self.eps && tail <= self.eps {
                inc = plain_inc;
                out = (eta, deta);
                converged = true;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(inc);
                }
                break;
            }
            inc = if q.is_some() { ext_inc } else { plain_inc };
            out = if q.is_some() { (ev, ed) } else { (eta, deta) };
            if let Some(t) = trace.as_deref_mut() {
                t.push(inc);
            }
            if q.is_some() && k >= 3 && tau <= T::c(0.05) && ext_inc <= self.eps.max(noise_at(eta, deta, r)) {
                converged = true;
                break;
            }
        }
        if !converged && q.is_some() && k >= 3 && k < self.cap && tail <= self.eps {
            // stopped on resolution: accept when the extrapolated values had settled
            let r = (y - e).abs();
            converged = inc <= T::c(10.0) * self.eps.max(noise_at(eta, deta, r));
        }
        if !converged && err0 <= self.eps {
            // orbit too slow to leave a tangency; the local logarithm is accurate
            return PointEstimate { nu: nu0, dnu: dnu0, iterations: k, increment: inc, tail: err0, converged: true };
        }
        PointEstimate {
            nu: self.sign * lam * out.0,
            dnu: self.sign * lam * out.1,
            iterations: k,
            increment: inc,
            tail,
            converged,
        }
    }

    /// The limit as a lazily evaluated field on `domain`.
    pub fn into_field(self, domain: Interval<T>) -> VectorField<T> {
        let open = if self.base == domain.lo { Openness::OpenHi } else { Openness::OpenLo };
        let base = self.base;
        let this = std::sync::Arc::new(self);
        VectorField::pointwise(
            domain,
            open,
            std::sync::Arc::new(move |x: T| {
                if x == base {
                    let m = this.phi.deriv(base);
                    return (T::zero(), this.sign * this.lambda_phi * (m - T::one()));
                }
                let est = this.estimate(x);
                (est.nu, est.dnu)
            }),
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SzekeresResult<T: Real> {
    #[serde(skip)]
    pub field: VectorField<T>,
    pub lambda: f64,
    pub iterations_used: usize,
    pub c1_residual: f64,
    pub direction: Direction,
    pub base: Base,
    pub domain: [f64; 2],
    pub trust_region: [f64; 2],
    /// Nodes outside the trust region whose iteration did not converge.
    pub unconverged_outside: usize,
    /// Last increments at the middle of the trust region.
    pub increment_tail: Vec<f64>,
    pub tail_monotone: bool,
}

/// Domain actually used for the field: the far end is pulled in by
/// `eps_edge` when `f` fixes it too.
fn working_domain<T: Real>(f: &Diffeo<T>, base: Base, tol: &Tolerances) -> Interval<T> {
    let dom = f.domain();
    let floor = T::c(tol.detect_floor);
    match base {
        Base::Lo if f.displacement(dom.hi).abs() <= floor => dom.truncated(Openness::OpenHi, tol.eps_edge),
        Base::Hi if f.displacement(dom.lo).abs() <= floor => dom.truncated(Openness::OpenLo, tol.eps_edge),
        _ => dom,
    }
}

fn check_no_interior_fixed_point<T: Real>(f: &Diffeo<T>, domain: &Interval<T>, n: usize, floor: f64) -> Result<()> {
    let xs = cosine_grid(domain, n);
    let d: Vec<T> = xs.par_iter().map(|&x| f.displacement(x)).collect();
    let inner = &d[1..n - 1];
    if inner.iter().all(|v| v.abs() <= T::c(floor)) {
        return Err(Error::IdentityMap { lo: domain.lo.f64(), hi: domain.hi.f64() });
    }
    // runs under the floor that reach an end belong to a flat end; anything
    // else at or below it is a fixed point
    let small = |v: &T| v.abs() <= T::c(floor);
    let first = inner.iter().position(|v| !small(v)).unwrap_or(0);
    let last = inner.iter().rposition(|v| !small(v)).unwrap_or(0);
    let sign = inner[first].signum();
    for (i, v) in inner.iter().enumerate().take(last + 1).skip(first) {
        if *v == T::zero() || v.signum() != sign {
            return Err(Error::InteriorFixedPoint { at: xs[i + 1].f64() });
        }
    }
    Ok(())
}

/// Szekeres field of `f` on `[a, b)`, anchored at `a`.
pub fn szekeres_field<T: Real>(f: &Diffeo<T>, tol: &Tolerances) -> Result<SzekeresResult<T>> {
    szekeres_at(f, Base::Lo, tol)
}

/// Szekeres field anchored at either end.
pub fn szekeres_at<T: Real>(f: &Diffeo<T>, base: Base, tol: &Tolerances) -> Result<SzekeresResult<T>> {
    let dom = working_domain(f, base, tol);
    check_no_interior_fixed_point(f, &dom, tol.grid, tol.detect_floor)?;
    let lim = PullbackLimit::new(f, base, dom, tol)?;
    let trust = dom.shrink(tol.rho);
    let xs = cosine_grid(&dom, tol.grid);
    let est: Vec<PointEstimate<T>> = xs.par_iter().map(|&x| lim.estimate(x)).collect();
    let mut v: Vec<T> = est.iter().map(|e| e.nu).collect();
    let dv: Vec<T> = est.iter().map(|e| e.dnu).collect();
    let bi = if base == Base::Lo { 0 } else { xs.len() - 1 };
    v[bi] = T::zero();
    let (mut iters, mut resid, mut outside) = (0usize, T::zero(), 0usize);
    for (x, e) in xs.iter().zip(&est) {
        if trust.contains(*x) {
            if !e.converged {
                return Err(Error::NonConvergence {
                    iterations: e.iterations,
                    at: x.f64(),
                    residual: e.increment.max(e.tail).f64(),
                });
            }
            iters = iters.max(e.iterations);
            resid = resid.max(e.increment);
        } else if !e.converged {
            outside += 1;
        }
    }
    let mut trace = Vec::new();
    lim.estimate_traced(trust.mid(), Some(&mut trace));
    let tail: Vec<f64> = trace.iter().rev().take(32).rev().map(|t| t.f64()).collect();
    let tail_monotone = tail.windows(2).all(|w| w[1] <= w[0] || w[1] <= tol.eps_conv);
    let open = if base == Base::Lo { Openness::OpenHi } else { Openness::OpenLo };
    let field = VectorField::from_samples(dom, open, xs, v, dv)?;
    Ok(SzekeresResult {
        field,
        lambda: lim.lambda.f64(),
        iterations_used: iters,
        c1_residual: resid.f64(),
        direction: lim.direction,
        base,
        domain: [dom.lo.f64(), dom.hi.f64()],
        trust_region: [trust.lo.f64(), trust.hi.f64()],
        unconverged_outside: outside,
        increment_tail: tail,
        tail_monotone,
    })
}

/// Evaluator anchored at `base`, with the domain it works on.
pub fn pullback_limit<T: Real>(f: &Diffeo<T>, base: Base, tol: &Tolerances) -> Result<(PullbackLimit<T>, Interval<T>)> {
    let dom = working_domain(f, base, tol);
    check_no_interior_fixed_point(f, &dom, tol.grid.min(1025), tol.detect_floor)?;
    Ok((PullbackLimit::new(f, base, dom, tol)?, dom))
}

/// Lazily evaluated Szekeres field; no tabulation, no convergence checks.
pub fn lazy_field<T: Real>(f: &Diffeo<T>, base: Base, tol: &Tolerances) -> Result<VectorField<T>> {
    let dom = working_domain(f, base, tol);
    check_no_interior_fixed_point(f, &dom, tol.grid.min(1025), tol.detect_floor)?;
    Ok(PullbackLimit::new(f, base, dom, tol)?.into_field(dom))
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundAudit {
    pub delta: f64,
    pub log_ratio_sup: f64,
    pub dnu_sup: f64,
    pub theta_sup: f64,
    pub u1_bound: f64,
    pub u2_bound: f64,
    pub v_bound: f64,
    pub log_ratio_ok: bool,
    pub dnu_ok: bool,
    pub theta_ok: bool,
    /// `(t, ‖f^t - id‖₁)` on the audit times.
    pub flow_c1: Vec<(f64, f64)>,
    pub flow_c1_bound_ok: bool,
}

/// Certified `δ ≥ ‖f - id‖₂`: probe sup with a 1% margin.
pub fn certified_delta<T: Real>(f: &Diffeo<T>, domain: &Interval<T>, n: usize) -> f64 {
    f.c2_distance_on(domain, n).f64() * 1.01
}

/// Compares the field against the explicit bounds in `δ`.
pub fn audit_bounds<T: Real>(f: &Diffeo<T>, result: &SzekeresResult<T>, tol: &Tolerances) -> Result<BoundAudit> {
    let dom = result.field.domain();
    let delta = certified_delta(f, &dom, tol.grid);
    if !(delta < 1.0) {
        return Err(Error::DeltaTooLarge { delta });
    }
    let trust = Interval { lo: T::c(result.trust_region[0]), hi: T::c(result.trust_region[1]) };
    let phi = if result.direction == Direction::Contracting { f.clone() } else { f.invert()? };
    let xs: Vec<T> = cosine_grid(&dom, tol.grid).into_iter().filter(|x| trust.contains(*x)).collect();
    let per_node: Vec<(T, T, T)> = xs
        .par_iter()
        .map(|&x| {
            let (nu, dnu) = result.field.eval(x);
            let lr = (nu / f.displacement(x)).ln().abs();
            let l0 = phi.local(x);
            let eta1 = phi.displacement(x + l0.disp) / l0.d1;
            let theta = (eta1 / l0.disp).ln().abs();
            (lr, dnu.abs(), theta)
        })
        .collect();
    let fold = |k: usize| {
        per_node
            .iter()
            .map(|t| [t.0, t.1, t.2][k].f64())
            .fold(0.0, f64::max)
    };
    let (log_ratio_sup, dnu_sup, theta_sup) = (fold(0), fold(1), fold(2));
    let (b1, b2, bv) = (u1(delta), u2(delta), v(delta));
    let theta_bound = delta / (1.0 - delta);
    let flow = FieldFlow::new(result.field.clone(), tol.eps_quad);
    let probes = cosine_grid(&trust, 257);
    let mut flow_c1 = Vec::new();
    for i in 1..=10 {
        let t = i as f64 / 10.0;
        let sup = probes
            .par_iter()
            .map(|&x| {
                let l = flow.local(x, T::c(t))?;
                Ok(l.disp.abs().max((l.d1 - T::one()).abs()).f64())
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        flow_c1.push((t, sup));
    }
    let flow_c1_bound_ok = flow_c1.iter().all(|(t, s)| *s <= t * bv);
    Ok(BoundAudit {
        delta,
        log_ratio_sup,
        dnu_sup,
        theta_sup,
        u1_bound: b1,
        u2_bound: b2,
        v_bound: bv,
        log_ratio_ok: log_ratio_sup <= b1,
        dnu_ok: dnu_sup <= b2,
        theta_ok: theta_sup <= theta_bound,
        flow_c1,
        flow_c1_bound_ok,
    })
}

/// `sup |ν_{f²} - 2ν_f| / max(|ν_f|, floor)` over the trust region.
pub fn scaling_check<T: Real>(f: &Diffeo<T>, tol: &Tolerances) -> Result<f64> {
    let r1 = szekeres_field(f, tol)?;
    let f2 = f.compose(f)?;
    let r2 = szekeres_field(&f2, tol)?;
    let trust = Interval { lo: T::c(r1.trust_region[0]), hi: T::c(r1.trust_region[1]) };
    let floor = T::c(tol.detect_floor);
    let xs: Vec<T> = r1.field.nodes(tol.grid).into_iter().filter(|x| trust.contains(*x)).collect();
    Ok(xs
        .iter()
        .map(|&x| {
            let a = r1.field.value(x);
            let b = r2.field.value(x);
            ((b - T::c(2.0) * a).abs() / a.abs().max(floor)).f64()
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> Diffeo<f64> {
        let dom = Interval::<f64>::new(0.0, 1.0 - 2f64.powi(-20)).unwrap();
        Diffeo::parse("x/2", dom, Openness::OpenHi).unwrap()
    }

    fn logistic(t: f64) -> Diffeo<f64> {
        Diffeo::parse(&format!("x/(x+(1-x)*exp({t}))"), Interval::<f64>::unit(), Openness::Closed).unwrap()
    }

    #[test]
    fn bound_functions_vanish_at_zero_and_grow() {
        assert_eq!(u1(0.0), 0.0);
        assert_eq!(u2(0.0), 0.0);
        assert_eq!(v(0.0), 0.0);
        let mut prev = (0.0, 0.0, 0.0);
        for i in 1..20 {
            let d = i as f64 / 40.0;
            let cur = (u1(d), u2(d), v(d));
            assert!(cur.0 > prev.0 && cur.1 > prev.1 && cur.2 > prev.2);
            prev = cur;
        }
        assert!(u1(1e-9).abs() < 1e-8);
    }

    #[test]
    fn normalization_is_continuous() {
        assert_eq!(normalization(1.0f64), 1.0);
        assert!((normalization(0.5f64) - 2.0 * 2f64.ln()).abs() < 1e-15);
        let a: f64 = normalization(1.0 + 1e-6 * (1.0 - 1e-9));
        let b: f64 = normalization(1.0 + 1e-6 * (1.0 + 1e-9));
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn linear_map_is_exact() {
        let r = szekeres_field(&half(), &Tolerances::default()).unwrap();
        assert!((r.lambda - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert_eq!(r.iterations_used, 1);
        assert_eq!(r.direction, Direction::Contracting);
        assert!(r.c1_residual < 1e-15);
        for x in r.field.nodes(4097).into_iter().filter(|x| *x >= r.trust_region[0] && *x <= r.trust_region[1]) {
            let (nu, dnu) = r.field.eval(x);
            let exact = -x * 2f64.ln();
            assert!(((nu - exact) / exact).abs() < 1e-14);
            assert!((dnu + 2f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn logistic_recovery() {
        let r = szekeres_field(&logistic(1.0), &Tolerances::default()).unwrap();
        assert_eq!(r.field.domain().hi, 1.0 - 2f64.powi(-20));
        assert!(r.c1_residual <= 1e-10);
        for i in 0..=2000 {
            let x = 1e-3 + (0.9 - 1e-3) * i as f64 / 2000.0;
            let exact = -x * (1.0 - x);
            let rel = ((r.field.value(x) - exact) / exact).abs();
            assert!(rel < 1e-8, "x={x} rel={rel}");
        }
    }

    #[test]
    fn expanding_branch_is_negated() {
        let tol = Tolerances::default();
        let dom = Interval::<f64>::new(0.0, 0.4).unwrap();
        let f = Diffeo::parse("x/2", dom, Openness::OpenHi).unwrap();
        let g = Diffeo::parse("2*x", dom, Openness::OpenHi).unwrap();
        let a = szekeres_field(&f, &tol).unwrap();
        let b = szekeres_field(&g, &tol).unwrap();
        assert_eq!(b.direction, Direction::Expanding);
        assert!((b.lambda - 2f64.ln()).abs() < 1e-15);
        for x in [0.01, 0.1, 0.2] {
            assert!((a.field.value(x) + b.field.value(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn branch_symmetry_for_logistic() {
        let tol = Tolerances::default();
        let a = szekeres_field(&logistic(1.0), &tol).unwrap();
        let b = szekeres_field(&logistic(1.0).invert().unwrap(), &tol).unwrap();
        assert_eq!(b.direction, Direction::Expanding);
        for x in [0.01, 0.3, 0.7] {
            let (p, q) = (a.field.value(x), b.field.value(x));
            assert!(((p + q) / p).abs() < 1e-8);
        }
    }

    #[test]
    fn anchored_at_upper_end() {
        let tol = Tolerances::default();
        let r = szekeres_at(&logistic(1.0), Base::Hi, &tol).unwrap();
        assert_eq!(r.direction, Direction::Expanding);
        for x in [0.1, 0.5, 0.99] {
            let exact = -x * (1.0 - x);
            assert!(((r.field.value(x) - exact) / exact).abs() < 1e-8);
        }
    }

    #[test]
    fn parabolic_map_has_unit_lambda() {
        let tol = Tolerances { eps_conv: 1e-4, iter_cap: 2000, rho: 0.2, ..Tolerances::default() };
        let f = Diffeo::parse("x - x^2/4", Interval::<f64>::unit(), Openness::OpenHi).unwrap();
        let lim = PullbackLimit::new(&f, Base::Lo, Interval::<f64>::unit(), &tol).unwrap();
        assert_eq!(lim.lambda, 1.0);
        let est = lim.estimate(0.5);
        assert!(est.nu < 0.0);
    }

    #[test]
    fn rejects_interior_fixed_point_and_identity() {
        let tol = Tolerances::default();
        let f = Diffeo::parse("x + 0.1*x*(0.5-x)*(1-x)", Interval::<f64>::unit(), Openness::Closed).unwrap();
        assert!(matches!(szekeres_field(&f, &tol), Err(Error::InteriorFixedPoint { .. })));
        let id = Diffeo::identity(Interval::<f64>::unit());
        assert!(matches!(szekeres_field(&id, &tol), Err(Error::IdentityMap { .. })));
    }

    #[test]
    fn telescoping_log_ratio() {
        let tol = Tolerances::default();
        let f = logistic(0.2);
        let dom = Interval::<f64>::new(0.0, 1.0 - 2f64.powi(-20)).unwrap();
        let delta = certified_delta(&f, &dom, 4097);
        let lim = PullbackLimit::new(&f, Base::Lo, dom, &tol).unwrap();
        for x in [0.01, 0.5, 0.9] {
            let etas = lim.eta_iterates(x, 40);
            for i in 0..etas.len() {
                for j in i + 1..etas.len() {
                    assert!((etas[j] / etas[i]).ln().abs() <= delta / (1.0 - delta));
                }
            }
        }
    }

    #[test]
    fn scaling_linear_and_logistic() {
        let tol = Tolerances::default();
        assert!(scaling_check(&half(), &tol).unwrap() < 1e-12);
        assert!(scaling_check(&logistic(1.0), &tol).unwrap() < 1e-8);
    }

    #[test]
    fn audit_on_linear_and_logistic() {
        let tol = Tolerances::default();
        let f = half();
        let r = szekeres_field(&f, &tol).unwrap();
        let a = audit_bounds(&f, &r, &tol).unwrap();
        assert!((a.delta - 0.505).abs() < 1e-9);
        assert!((a.log_ratio_sup - (2.0 * 2f64.ln()).ln()).abs() < 1e-12);
        assert!(a.log_ratio_ok && a.dnu_ok);
        let g = logistic(0.1);
        let r = szekeres_field(&g, &tol).unwrap();
        let a = audit_bounds(&g, &r, &tol).unwrap();
        assert!(a.log_ratio_ok && a.dnu_ok && a.theta_ok && a.flow_c1_bound_ok, "{a:?}");
    }
}
