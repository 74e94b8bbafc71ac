//! Common fixed points, flat points, and the rational / irrational
//! classification of the components of a commuting pair.

use rayon::prelude::*;
use serde::Serialize;

use crate::config::Tolerances;
use crate::diffeo::Diffeo;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::flow::{centralizer_time, CentralizerTime, FieldFlow};
use crate::interval::{cosine_grid, Interval, Openness};
use crate::rational::{bezout_pair, rational_candidates};
use crate::scalar::Real;
use crate::szekeres::{pullback_limit, Base, PointEstimate};

/// A common fixed point (`lo == hi`) or a maximal fixed interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPiece<T> {
    pub lo: T,
    pub hi: T,
    /// Both maps tangent to the identity to second order here.
    pub flat: bool,
}

impl<T: Real> FixedPiece<T> {
    pub fn point(x: T, flat: bool) -> Self {
        Self { lo: x, hi: x, flat }
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }
}

#[derive(Debug, Clone)]
pub enum ComponentKind<T: Real> {
    /// `f = h^q`, `g = h^p`.
    Rational { p: i64, q: i64, h: Diffeo<T> },
    /// `f` and `g` are the time-1 and time-`tau` maps of `nu`.
    Irrational { nu: VectorField<T>, tau: T },
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub tau_left: Option<f64>,
    pub tau_right: Option<f64>,
    pub spread_left: Option<f64>,
    pub spread_right: Option<f64>,
    pub commutator_residual: Option<f64>,
    /// Convergents of `τ` that passed the screen, as `[p, q]`.
    pub candidates: Vec<[i64; 2]>,
    pub confirmation_residual: Option<f64>,
    pub generator_residual: Option<f64>,
    /// `max(|flow(ν,1) - f|, |flow(ν,τ) - g|)` on probes.
    pub flow_residual: Option<f64>,
    pub glue_mismatch: Option<f64>,
    /// Nodes of the sampled field whose iteration did not converge.
    pub unconverged_nodes: usize,
    pub inner_components: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ComponentData<T: Real> {
    pub interval: Interval<T>,
    pub kind: ComponentKind<T>,
    pub diagnostics: Diagnostics,
}

impl<T: Real> ComponentData<T> {
    pub fn is_rational(&self) -> bool {
        matches!(self.kind, ComponentKind::Rational { .. })
    }

    /// `τ` (equal to `p/q` on rational components, infinite when `q = 0`).
    pub fn tau(&self) -> f64 {
        match &self.kind {
            ComponentKind::Rational { p, q, .. } => *p as f64 / *q as f64,
            ComponentKind::Irrational { tau, .. } => tau.f64(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Decomposition<T: Real> {
    /// `F`, sorted; pieces carry their flatness.
    pub fixed: Vec<FixedPiece<T>>,
    pub components_u: Vec<Interval<T>>,
    pub components_u0: Vec<Interval<T>>,
    /// Payload per component of `U`.
    pub inner: Vec<ComponentData<T>>,
    /// Payload per component of `U₀`.
    pub payloads: Vec<ComponentData<T>>,
}

impl<T: Real> Decomposition<T> {
    /// `F₀`: flat pieces of `F` plus the endpoints `0` and `1`.
    pub fn f0(&self) -> Vec<FixedPiece<T>> {
        f0_of(&self.fixed)
    }

    pub fn report(&self) -> DecompositionReport {
        let piece = |p: &FixedPiece<T>, in_f0: bool| FixedPointReport {
            lo: p.lo.f64(),
            hi: p.hi.f64(),
            flat: p.flat,
            in_f0,
        };
        let f0 = self.f0();
        DecompositionReport {
            fixed_points: self.fixed.iter().map(|p| piece(p, f0.iter().any(|q| q.lo == p.lo))).collect(),
            components_u: self.components_u.iter().map(|c| [c.lo.f64(), c.hi.f64()]).collect(),
            components_u0: self.components_u0.iter().map(|c| [c.lo.f64(), c.hi.f64()]).collect(),
            inner_components: self.inner.iter().map(ComponentReport::from).collect(),
            components: self.payloads.iter().map(ComponentReport::from).collect(),
        }
    }
}

fn f0_of<T: Real>(fixed: &[FixedPiece<T>]) -> Vec<FixedPiece<T>> {
    let n = fixed.len();
    fixed
        .iter()
        .enumerate()
        .filter(|(i, p)| p.flat || *i == 0 || *i == n - 1)
        .map(|(_, p)| *p)
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointReport {
    pub lo: f64,
    pub hi: f64,
    pub flat: bool,
    pub in_f0: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentReport {
    pub interval: [f64; 2],
    pub kind: String,
    pub p: Option<i64>,
    pub q: Option<i64>,
    pub tau: f64,
    pub diagnostics: Diagnostics,
}

impl<T: Real> From<&ComponentData<T>> for ComponentReport {
    fn from(c: &ComponentData<T>) -> Self {
        let (kind, p, q) = match &c.kind {
            ComponentKind::Rational { p, q, .. } => ("rational", Some(*p), Some(*q)),
            ComponentKind::Irrational { .. } => ("irrational", None, None),
        };
        Self {
            interval: [c.interval.lo.f64(), c.interval.hi.f64()],
            kind: kind.into(),
            p,
            q,
            tau: c.tau(),
            diagnostics: c.diagnostics.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    pub fixed_points: Vec<FixedPointReport>,
    pub components_u: Vec<[f64; 2]>,
    pub components_u0: Vec<[f64; 2]>,
    pub components: Vec<ComponentReport>,
    pub inner_components: Vec<ComponentReport>,
}

/// Zeros of a displacement: isolated roots (sign changes, touching zeros)
/// and runs of grid nodes at or below the floor.
fn zeros_of<T: Real>(d: &(dyn Fn(T) -> T + Sync), xs: &[T], ds: &[T], floor: T) -> (Vec<T>, Vec<(T, T)>) {
    let n = xs.len();
    let small: Vec<bool> = ds.iter().map(|v| v.abs() <= floor).collect();
    let mut runs = Vec::new();
    let mut i = 0;
    while i < n {
        if small[i] {
            let j0 = i;
            while i + 1 < n && small[i + 1] {
                i += 1;
            }
            runs.push((xs[j0], xs[i]));
        }
        i += 1;
    }
    let mut roots = Vec::new();
    for i in 0..n - 1 {
        if small[i] || small[i + 1] {
            continue;
        }
        if ds[i].signum() != ds[i + 1].signum() {
            roots.push(bisect(d, xs[i], xs[i + 1], ds[i]));
        } else if i > 0 && !small[i - 1] && ds[i - 1].signum() == ds[i].signum() {
            // touching zero: a local minimum of |d| that dips to the floor
            let (a, b, c) = (ds[i - 1].abs(), ds[i].abs(), ds[i + 1].abs());
            if b < a && b < c && b < T::c(1e-6) {
                let (x, v) = golden_min(|x| d(x).abs(), xs[i - 1], xs[i + 1]);
                if v <= floor * T::c(10.0) {
                    roots.push(x);
                }
            }
        }
    }
    (roots, runs)
}

fn bisect<T: Real>(d: &(dyn Fn(T) -> T + Sync), mut a: T, mut b: T, da: T) -> T {
    let sa = da.signum();
    for _ in 0..200 {
        if (b - a).abs() <= T::c(1e-13) {
            break;
        }
        let m = (a + b) / T::c(2.0);
        let v = d(m);
        if v == T::zero() {
            return m;
        }
        if v.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    let m = (a + b) / T::c(2.0);
    // secant polish inside the bracket
    let (fa, fb) = (d(a), d(b));
    if fb != fa {
        let s = a - fa * (b - a) / (fb - fa);
        if s >= a.min(b) && s <= a.max(b) && d(s).abs() <= d(m).abs() {
            return s;
        }
    }
    m
}

fn golden_min<T: Real>(h: impl Fn(T) -> T, mut a: T, mut b: T) -> (T, T) {
    let r = T::c((5f64.sqrt() - 1.0) / 2.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    for _ in 0..120 {
        if h(c) < h(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    let x = (a + b) / T::c(2.0);
    (x, h(x))
}

fn is_flat<T: Real>(f: &Diffeo<T>, g: &Diffeo<T>, x: T, eps: f64) -> bool {
    let e = T::c(eps);
    [f, g].iter().all(|m| {
        let l = m.local(x);
        (l.d1 - T::one()).abs() < e && l.d2.abs() < e
    })
}

/// `F` (with flatness flags) and the components of `[0,1] \ F`.
pub fn common_fixed_points<T: Real>(
    f: &Diffeo<T>,
    g: &Diffeo<T>,
    tol: &Tolerances,
) -> Result<(Vec<FixedPiece<T>>, Vec<Interval<T>>)> {
    let dom = f.domain();
    if !dom.same_as(&g.domain(), T::c(1e-12)) {
        let h = g.domain();
        return Err(Error::DomainMismatch { a_lo: dom.lo.f64(), a_hi: dom.hi.f64(), b_lo: h.lo.f64(), b_hi: h.hi.f64() });
    }
    f.check_endpoints(T::c(1e-12))?;
    g.check_endpoints(T::c(1e-12))?;
    let floor = T::c(tol.detect_floor);
    let xs = cosine_grid(&dom, tol.grid);
    let df: Vec<T> = xs.par_iter().map(|&x| f.displacement(x)).collect();
    let dg: Vec<T> = xs.par_iter().map(|&x| g.displacement(x)).collect();
    let dfun = |x: T| f.displacement(x);
    let gfun = |x: T| g.displacement(x);
    let (rf, _) = zeros_of(&dfun, &xs, &df, floor);
    let (rg, _) = zeros_of(&gfun, &xs, &dg, floor);
    let common_tol = T::c(1e-10);
    let mut pieces: Vec<FixedPiece<T>> = Vec::new();
    for &r in &rf {
        if g.displacement(r).abs() <= common_tol {
            pieces.push(FixedPiece::point(r, false));
        }
    }
    for &r in &rg {
        if f.displacement(r).abs() <= common_tol {
            pieces.push(FixedPiece::point(r, false));
        }
    }
    // nodes where both maps sit at the floor
    let mut i = 0;
    let n = xs.len();
    while i < n {
        if df[i].abs() <= floor && dg[i].abs() <= floor {
            let j0 = i;
            while i + 1 < n && df[i + 1].abs() <= floor && dg[i + 1].abs() <= floor {
                i += 1;
            }
            pieces.push(FixedPiece { lo: xs[j0], hi: xs[i], flat: false });
        }
        i += 1;
    }
    pieces.push(FixedPiece::point(dom.lo, false));
    pieces.push(FixedPiece::point(dom.hi, false));
    pieces.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap());
    let merge_tol = T::c(1e-11);
    let mut merged: Vec<FixedPiece<T>> = Vec::new();
    for p in pieces {
        match merged.last_mut() {
            Some(m) if p.lo <= m.hi + merge_tol => {
                // prefer exact endpoints over refined roots
                if p.hi > m.hi {
                    m.hi = p.hi;
                }
                if (p.lo == dom.lo || p.lo == dom.hi) && m.is_point() {
                    m.lo = p.lo;
                    m.hi = p.hi;
                }
            }
            _ => merged.push(p),
        }
    }
    for p in merged.iter_mut() {
        p.flat = if p.is_point() { is_flat(f, g, p.lo, tol.eps_flat) } else { true };
    }
    let comps = merged
        .windows(2)
        .filter(|w| w[0].hi < w[1].lo)
        .map(|w| Interval { lo: w[0].hi, hi: w[1].lo })
        .collect();
    Ok((merged, comps))
}

/// `F₀` from `F`: flat pieces and the two endpoints.
pub fn flat_points<T: Real>(fixed: &[FixedPiece<T>]) -> Vec<FixedPiece<T>> {
    f0_of(fixed)
}

fn sup_on<T: Real>(a: &Diffeo<T>, b: &Diffeo<T>, comp: &Interval<T>) -> f64 {
    a.sup_distance_on(b, comp, 1025).f64()
}

/// `f^s ∘ g^r` as a chain that alternates forward and backward steps, so
/// the running time (in units of `h`, where `f` and `g` advance `q` and `p`)
/// stays within `max(p, q)` of zero. Long one-way runs push orbits into the
/// last few ulps of an attracting end.
fn interleaved<T: Real>(f: &Diffeo<T>, s: i64, q: i64, g: &Diffeo<T>, r: i64, p: i64) -> Result<Diffeo<T>> {
    let step = |m: &Diffeo<T>, k: i64, t: i64| -> Result<(Diffeo<T>, i64, usize)> {
        let m = if k < 0 { m.invert()?.restrict(m.domain()) } else { m.clone() };
        Ok((m, k.signum() * t, k.unsigned_abs() as usize))
    };
    let mut moves = [step(f, s, q)?, step(g, r, p)?];
    if moves[0].1 < moves[1].1 {
        moves.swap(0, 1);
    }
    let mut h = Diffeo::identity(f.domain()).with_openness(f.openness());
    let mut c = 0i64;
    while moves[0].2 + moves[1].2 > 0 {
        let i = if (c <= 0 && moves[0].2 > 0) || moves[1].2 == 0 { 0 } else { 1 };
        h = moves[i].0.compose(&h)?;
        c += moves[i].1;
        moves[i].2 -= 1;
    }
    Ok(h)
}

/// `h = f^s ∘ g^r` with `p r + q s = 1`, checked against `h^q = f` and
/// `h^p = g` on `comp`. Returns `h` and the larger residual.
pub fn bezout_generator<T: Real>(
    f: &Diffeo<T>,
    g: &Diffeo<T>,
    p: i64,
    q: i64,
    comp: Interval<T>,
    tol: &Tolerances,
) -> Result<(Diffeo<T>, f64)> {
    let (r, s) = bezout_pair(p, q).ok_or_else(|| Error::Classification {
        lo: comp.lo.f64(),
        hi: comp.hi.f64(),
        msg: format!("p = {p}, q = {q} are not coprime"),
    })?;
    let h = interleaved(f, s, q, g, r, p)?.restrict(comp);
    let res = sup_on(&h.iterate(q)?, f, &comp).max(sup_on(&h.iterate(p)?, g, &comp));
    if !(res <= tol.eps_comp) {
        return Err(Error::Verification { what: format!("generator h^{q} = f, h^{p} = g"), residual: res, tol: tol.eps_comp });
    }
    Ok((h, res))
}

/// Estimates at the component nodes from one anchor.
struct SideTable<T> {
    est: Vec<PointEstimate<T>>,
}

fn hyperbolic<T: Real>(f: &Diffeo<T>, x: T) -> bool {
    f.deriv(x).ln().abs() > T::c(1e-3)
}

fn side_field<T: Real>(
    comp: Interval<T>,
    xs: &[T],
    est: &[PointEstimate<T>],
    f: &Diffeo<T>,
) -> Result<VectorField<T>> {
    let n = xs.len();
    let mut v: Vec<T> = est.iter().map(|e| e.nu).collect();
    let mut dv: Vec<T> = est.iter().map(|e| e.dnu).collect();
    v[0] = T::zero();
    v[n - 1] = T::zero();
    dv[0] = f.deriv(comp.lo).ln();
    dv[n - 1] = f.deriv(comp.hi).ln();
    VectorField::from_samples(comp, Openness::Closed, xs.to_vec(), v, dv)
}

/// Classifies one component of `[0,1] \ F`.
pub fn classify_component<T: Real>(
    f: &Diffeo<T>,
    g: &Diffeo<T>,
    comp: Interval<T>,
    tol: &Tolerances,
) -> Result<ComponentData<T>> {
    let fc = f.restrict(comp);
    let gc = g.restrict(comp);
    let mut diag = Diagnostics { inner_components: 1, ..Default::default() };
    let xs = cosine_grid(&comp, tol.grid);
    let n = xs.len();
    let floor = T::c(tol.detect_floor);
    let f_id = xs.par_iter().all(|&x| fc.displacement(x).abs() <= floor);
    let g_id = xs.par_iter().all(|&x| gc.displacement(x).abs() <= floor);
    if f_id || g_id {
        let (p, q, h) = if f_id { (1, 0, gc.clone()) } else { (0, 1, fc.clone()) };
        diag.generator_residual = Some(0.0);
        return Ok(ComponentData { interval: comp, kind: ComponentKind::Rational { p, q, h }, diagnostics: diag });
    }
    // Kopell: an interior fixed point of one map is fixed by the other. Near
    // a flat end both displacements drop under the floor together, so a node
    // only counts when the other map is clearly moving there.
    let df: Vec<T> = xs[1..n - 1].iter().map(|&x| fc.displacement(x)).collect();
    let dg: Vec<T> = xs[1..n - 1].iter().map(|&x| gc.displacement(x)).collect();
    let moving = floor * T::c(1e3);
    let kopell = |a: &[T], b: &[T], name: &str| -> Result<()> {
        let s = a.iter().copied().fold(T::zero(), |m, v| if v.abs() > m.abs() { v } else { m }).signum();
        let bad = a.iter().zip(b).position(|(&v, &w)| (v.abs() > floor && v.signum() != s) || (v.abs() <= floor && w.abs() > moving));
        if let Some(i) = bad {
            return Err(Error::Classification {
                lo: comp.lo.f64(),
                hi: comp.hi.f64(),
                msg: format!("{name} has a fixed point at {} not shared by the other map", xs[i + 1].f64()),
            });
        }
        Ok(())
    };
    kopell(&df, &dg, "f")?;
    kopell(&dg, &df, "g")?;

    // one-sided fields; an anchor tangent to the identity would iterate
    // sub-geometrically, so it is only used when both ends are such
    let hyp = [hyperbolic(&fc, comp.lo), hyperbolic(&fc, comp.hi)];
    let use_side = |i: usize| hyp[i] || (!hyp[0] && !hyp[1]);
    let mut sides: [Option<SideTable<T>>; 2] = [None, None];
    for (i, base) in [Base::Lo, Base::Hi].into_iter().enumerate() {
        if !use_side(i) {
            diag.notes.push(format!("{} end is tangent to the identity; one-sided field skipped", if i == 0 { "lower" } else { "upper" }));
            continue;
        }
        let (lim, _) = pullback_limit(&fc, base, tol)?;
        let est: Vec<PointEstimate<T>> = xs[1..n - 1].par_iter().map(|&x| lim.estimate(x)).collect();
        let mut full = Vec::with_capacity(n);
        let zero = PointEstimate { nu: T::zero(), dnu: T::zero(), iterations: 0, increment: T::zero(), tail: T::zero(), converged: true };
        full.push(zero);
        full.extend(est);
        full.push(zero);
        sides[i] = Some(SideTable { est: full });
    }
    let mut times: [Option<CentralizerTime>; 2] = [None, None];
    for i in 0..2 {
        if let Some(t) = &sides[i] {
            let nu = side_field(comp, &xs, &t.est, &fc)?;
            // near an end where f expands strongly the orbits crowd into the
            // last few ulps, so one side may lose the time while the other keeps it
            let ct = match centralizer_time(&fc, &gc, &nu, tol) {
                Err(e @ (Error::NonConstantTime { .. } | Error::Quadrature { .. })) if sides[1 - i].is_some() => {
                    diag.notes.push(format!("{} time dropped: {e}", if i == 0 { "lower" } else { "upper" }));
                    continue;
                }
                r => r?,
            };
            diag.commutator_residual = Some(ct.commutator_residual);
            times[i] = Some(ct);
        }
    }
    diag.tau_left = times[0].as_ref().map(|t| t.tau);
    diag.tau_right = times[1].as_ref().map(|t| t.tau);
    diag.spread_left = times[0].as_ref().map(|t| t.spread);
    diag.spread_right = times[1].as_ref().map(|t| t.spread);
    // the side with the tighter probe spread
    let tau = match times.iter().flatten().min_by(|a, b| a.spread.total_cmp(&b.spread)) {
        Some(t) => t.tau,
        None => {
            return Err(Error::Classification {
                lo: comp.lo.f64(),
                hi: comp.hi.f64(),
                msg: "no usable anchor for the centralizer time".into(),
            })
        }
    };

    let cands = rational_candidates(tau, tol.q_max as i64, tol.eps_rat);
    diag.candidates = cands.iter().map(|c| [*c.numer(), *c.denom()]).collect();
    if let Some(c) = cands.first() {
        let (p, q) = (*c.numer(), *c.denom());
        let res = sup_on(&fc.iterate(p)?, &gc.iterate(q)?, &comp);
        diag.confirmation_residual = Some(res);
        if !(res < tol.eps_comp) {
            return Err(Error::Classification {
                lo: comp.lo.f64(),
                hi: comp.hi.f64(),
                msg: format!("tau = {tau} is within eps_rat of {p}/{q} but f^{p} and g^{q} differ by {res:e}"),
            });
        }
        let (h, gr) = bezout_generator(&fc, &gc, p, q, comp, tol)?;
        diag.generator_residual = Some(gr);
        return Ok(ComponentData { interval: comp, kind: ComponentKind::Rational { p, q, h }, diagnostics: diag });
    }

    if let (Some(a), Some(b)) = (&times[0], &times[1]) {
        if !((a.tau - b.tau).abs() <= tol.eps_tau) {
            return Err(Error::Classification {
                lo: comp.lo.f64(),
                hi: comp.hi.f64(),
                msg: format!("left and right times disagree: {} vs {}", a.tau, b.tau),
            });
        }
    }
    // glued field: each node from the nearer usable anchor, the other as fallback
    let mut v = vec![T::zero(); n];
    let mut dv = vec![T::zero(); n];
    let mut unconverged = 0;
    for k in 1..n - 1 {
        let near_lo = xs[k] - comp.lo <= comp.hi - xs[k];
        let order = if near_lo { [0, 1] } else { [1, 0] };
        let mut best: Option<PointEstimate<T>> = None;
        for i in order {
            if let Some(t) = &sides[i] {
                let e = t.est[k];
                let better = match &best {
                    None => true,
                    Some(b) => !b.converged && (e.converged || e.increment.max(e.tail) < b.increment.max(b.tail)),
                };
                if better {
                    best = Some(e);
                }
            }
        }
        let e = best.expect("at least one side is computed");
        if !e.converged {
            unconverged += 1;
        }
        v[k] = e.nu;
        dv[k] = e.dnu;
    }
    dv[0] = fc.deriv(comp.lo).ln();
    dv[n - 1] = fc.deriv(comp.hi).ln();
    diag.unconverged_nodes = unconverged;
    let nu = VectorField::from_samples(comp, Openness::Closed, xs.clone(), v, dv)?;
    diag.flow_residual = Some(flow_residual(&nu, &fc, &gc, T::c(tau), comp, tol)?);
    Ok(ComponentData { interval: comp, kind: ComponentKind::Irrational { nu, tau: T::c(tau) }, diagnostics: diag })
}

/// `max |flow(ν,1) - f|, |flow(ν,τ) - g|` on 33 probes of the middle 90%.
fn flow_residual<T: Real>(nu: &VectorField<T>, f: &Diffeo<T>, g: &Diffeo<T>, tau: T, comp: Interval<T>, tol: &Tolerances) -> Result<f64> {
    let flow = FieldFlow::new(nu.clone(), tol.eps_quad);
    let inner = comp.shrink(0.05);
    let probes = cosine_grid(&inner, 33);
    let r: Vec<f64> = probes
        .par_iter()
        .map(|&x| {
            let a = (x + flow.displacement(x, T::one())? - f.eval(x)).abs();
            let b = (x + flow.displacement(x, tau)? - g.eval(x)).abs();
            Ok(a.max(b).f64())
        })
        .collect::<Result<_>>()?;
    Ok(r.into_iter().fold(0.0, f64::max))
}

/// Merges the payloads of the `U`-components inside one `U₀`-component.
pub fn takens_merge<T: Real>(
    f: &Diffeo<T>,
    g: &Diffeo<T>,
    comp: Interval<T>,
    inner: &[ComponentData<T>],
    tol: &Tolerances,
) -> Result<ComponentData<T>> {
    let err = |msg: String| Error::Classification { lo: comp.lo.f64(), hi: comp.hi.f64(), msg };
    if inner.is_empty() {
        return Err(err("no inner component".into()));
    }
    if inner.len() == 1 {
        let mut c = inner[0].clone();
        c.interval = comp;
        return Ok(c);
    }
    let mut diag = Diagnostics { inner_components: inner.len(), ..Default::default() };
    let n_rat = inner.iter().filter(|c| c.is_rational()).count();
    if n_rat != 0 && n_rat != inner.len() {
        return Err(err("inner components of mixed type".into()));
    }
    if n_rat == inner.len() {
        let mut hs = Vec::new();
        let mut pq = None;
        for c in inner {
            if let ComponentKind::Rational { p, q, h } = &c.kind {
                match pq {
                    None => pq = Some((*p, *q)),
                    Some(x) if x != (*p, *q) => return Err(err(format!("inner components give {x:?} and {:?}", (*p, *q)))),
                    _ => {}
                }
                hs.push(h.restrict(c.interval));
            }
        }
        let (p, q) = pq.unwrap();
        let h = Diffeo::piecewise(hs)?;
        let res = sup_on(&h.iterate(q)?, f, &comp).max(sup_on(&h.iterate(p)?, g, &comp));
        if !(res <= tol.eps_comp) {
            return Err(Error::Verification { what: "merged generator".into(), residual: res, tol: tol.eps_comp });
        }
        diag.generator_residual = Some(res);
        return Ok(ComponentData { interval: comp, kind: ComponentKind::Rational { p, q, h }, diagnostics: diag });
    }
    let mut parts = Vec::new();
    let mut taus = Vec::new();
    for c in inner {
        if let ComponentKind::Irrational { nu, tau } = &c.kind {
            parts.push(nu.clone());
            taus.push(tau.f64());
        }
    }
    let spread = taus.iter().cloned().fold(f64::MIN, f64::max) - taus.iter().cloned().fold(f64::MAX, f64::min);
    if !(spread <= tol.eps_tau) {
        return Err(err(format!("inner times disagree by {spread:e}")));
    }
    let mut mismatch = 0.0f64;
    for w in parts.windows(2) {
        let j = w[0].domain().hi;
        mismatch = mismatch.max((w[0].eval(j).1 - w[1].eval(j).1).abs().f64());
    }
    diag.glue_mismatch = Some(mismatch);
    if !(mismatch <= tol.eps_glue) {
        return Err(Error::Verification { what: "one-sided derivatives at a glued zero".into(), residual: mismatch, tol: tol.eps_glue });
    }
    let tau = taus.iter().sum::<f64>() / taus.len() as f64;
    let nu = VectorField::concat(&parts)?;
    diag.tau_left = Some(taus[0]);
    diag.tau_right = taus.last().copied();
    Ok(ComponentData { interval: comp, kind: ComponentKind::Irrational { nu, tau: T::c(tau) }, diagnostics: diag })
}

/// Full decomposition of a commuting pair on `[0,1]`.
pub fn decompose<T: Real>(f: &Diffeo<T>, g: &Diffeo<T>, tol: &Tolerances) -> Result<Decomposition<T>> {
    tol.validate()?;
    let (fixed, comps_u) = common_fixed_points(f, g, tol)?;
    let inner: Vec<ComponentData<T>> = comps_u
        .iter()
        .map(|c| classify_component(f, g, *c, tol))
        .collect::<Result<_>>()?;
    let f0 = f0_of(&fixed);
    let comps_u0: Vec<Interval<T>> = f0
        .windows(2)
        .filter(|w| w[0].hi < w[1].lo)
        .map(|w| Interval { lo: w[0].hi, hi: w[1].lo })
        .collect();
    let mut payloads = Vec::new();
    for c0 in &comps_u0 {
        let members: Vec<ComponentData<T>> = inner
            .iter()
            .filter(|c| c.interval.lo >= c0.lo && c.interval.hi <= c0.hi)
            .cloned()
            .collect();
        payloads.push(takens_merge(f, g, *c0, &members, tol)?);
    }
    Ok(Decomposition { fixed, components_u: comps_u, components_u0: comps_u0, inner, payloads })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logistic(t: f64) -> Diffeo<f64> {
        Diffeo::parse(&format!("x/(x+(1-x)*exp({t}))"), Interval::<f64>::unit(), Openness::Closed).unwrap()
    }

    #[test]
    fn identity_pair_is_all_fixed() {
        let id = Diffeo::identity(Interval::<f64>::unit());
        let d = decompose(&id, &id, &Tolerances::default()).unwrap();
        assert_eq!(d.fixed.len(), 1);
        assert_eq!((d.fixed[0].lo, d.fixed[0].hi), (0.0, 1.0));
        assert!(d.fixed[0].flat);
        assert!(d.components_u.is_empty() && d.payloads.is_empty());
    }

    #[test]
    fn logistic_pair_is_irrational() {
        let tol = Tolerances::default();
        let f = logistic(1.0);
        let g = logistic(2f64.sqrt());
        let d = decompose(&f, &g, &tol).unwrap();
        assert_eq!(d.fixed.iter().map(|p| p.lo).collect::<Vec<_>>(), vec![0.0, 1.0]);
        assert!(d.fixed.iter().all(|p| !p.flat));
        assert_eq!(d.payloads.len(), 1);
        let c = &d.payloads[0];
        assert!(!c.is_rational());
        assert!((c.tau() - 2f64.sqrt()).abs() < 1e-8, "{}", c.tau());
        let (l, r) = (c.diagnostics.tau_left.unwrap(), c.diagnostics.tau_right.unwrap());
        assert!((l - r).abs() < 1e-8);
        assert!(c.diagnostics.flow_residual.unwrap() < 1e-7);
        if let ComponentKind::Irrational { nu, .. } = &c.kind {
            for x in [0.01, 0.5, 0.99] {
                assert!((nu.value(x) + x * (1.0 - x)).abs() < 1e-8 * x * (1.0 - x));
            }
        }
    }

    #[test]
    fn rational_pair_three_two() {
        let tol = Tolerances::default();
        let h = logistic(1.0);
        let f = h.iterate(2).unwrap();
        let g = h.iterate(3).unwrap();
        let c = classify_component(&f, &g, Interval::<f64>::unit(), &tol).unwrap();
        match &c.kind {
            ComponentKind::Rational { p, q, h: gen } => {
                assert_eq!((*p, *q), (3, 2));
                assert!(gen.sup_distance(&h, 1025) < 1e-8);
            }
            _ => panic!("expected rational"),
        }
    }

    #[test]
    fn bezout_three_two() {
        let tol = Tolerances::default();
        let h = logistic(1.0);
        let (f, g) = (h.iterate(2).unwrap(), h.iterate(3).unwrap());
        let (gen, res) = bezout_generator(&f, &g, 3, 2, Interval::<f64>::unit(), &tol).unwrap();
        assert!(res < 1e-8);
        assert!(gen.iterate(2).unwrap().sup_distance(&f, 1025) < 1e-8);
        let (gen, _) = bezout_generator(&f, &f, 1, 1, Interval::<f64>::unit(), &tol).unwrap();
        assert!(gen.sup_distance(&f, 513) < 1e-15);
    }

    #[test]
    fn identity_on_component_gives_q_zero() {
        let tol = Tolerances::default();
        let id = Diffeo::identity(Interval::<f64>::unit());
        let g = logistic(1.0);
        let c = classify_component(&id, &g, Interval::<f64>::unit(), &tol).unwrap();
        match &c.kind {
            ComponentKind::Rational { p, q, h } => {
                assert_eq!((*p, *q), (1, 0));
                assert_eq!(h.sup_distance(&g, 257), 0.0);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn swap_symmetry_irrational() {
        let tol = Tolerances::default();
        let (f, g) = (logistic(1.0), logistic(2f64.sqrt()));
        let a = classify_component(&f, &g, Interval::<f64>::unit(), &tol).unwrap();
        let b = classify_component(&g, &f, Interval::<f64>::unit(), &tol).unwrap();
        assert!((a.tau() * b.tau() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn takens_merge_cubic() {
        let tol = Tolerances::default();
        let nu = VectorField::<f64>::parse("x*(0.5-x)*(1-x)", Interval::<f64>::unit()).unwrap().with_zeros(vec![0.5]);
        let flow = FieldFlow::new(nu.clone(), tol.eps_quad);
        let f = flow.tabulate(1.0, tol.grid).unwrap();
        let g = flow.tabulate(2f64.sqrt(), tol.grid).unwrap();
        let d = decompose(&f, &g, &tol).unwrap();
        let pts: Vec<f64> = d.fixed.iter().map(|p| p.lo).collect();
        assert_eq!(pts.len(), 3);
        assert!((pts[1] - 0.5).abs() < 1e-12);
        assert_eq!(d.f0().len(), 2);
        assert_eq!(d.components_u.len(), 2);
        assert_eq!(d.payloads.len(), 1);
        let c = &d.payloads[0];
        assert!(c.diagnostics.glue_mismatch.unwrap() < 1e-6, "{:?}", c.diagnostics);
        assert!((c.tau() - 2f64.sqrt()).abs() < 1e-8);
        if let ComponentKind::Irrational { nu: m, .. } = &c.kind {
            let mut worst = 0.0f64;
            for i in 0..=980 {
                let x = 0.01 + i as f64 * 1e-3;
                worst = worst.max((m.value(x) - nu.value(x)).abs());
            }
            assert!(worst < 1e-5, "{worst}");
        } else {
            panic!();
        }
    }
}
