//! The path `t ↦ (f_t, g_t)` from a commuting pair to `(id, id)`, and its
//! verification on a probe lattice.
//!
//! Rational components use `f_t = h_t^q`, `g_t = h_t^p` with
//! `h_t = (1 - t) h + t id`; irrational ones use the flow of the component
//! field at times `1 - t` and `(1 - t) τ`. Points of `F₀` stay fixed.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::Tolerances;
use crate::diffeo::{fmt17, Diffeo, Local};
use crate::error::{Error, Result};
use crate::flow::FieldFlow;
use crate::interval::{cosine_grid, Interval, Openness};
use crate::scalar::Real;
use crate::structure::{ComponentKind, Decomposition, FixedPiece};
use crate::szekeres::{u1, u2, v};

#[derive(Debug, Clone)]
enum PieceKind<T: Real> {
    Rational { p: i64, q: i64, h: Diffeo<T> },
    Irrational { flow: FieldFlow<T>, tau: T },
}

#[derive(Debug, Clone)]
struct Piece<T: Real> {
    interval: Interval<T>,
    kind: PieceKind<T>,
}

#[derive(Debug, Clone)]
pub struct HomotopyPath<T: Real> {
    pub decomposition: Decomposition<T>,
    f: Diffeo<T>,
    g: Diffeo<T>,
    pieces: Vec<Piece<T>>,
    f0: Vec<FixedPiece<T>>,
    /// `min Dh` over probes of each rational component.
    pub min_generator_derivative: Vec<f64>,
    tol: Tolerances,
}

/// Envelope on `sup_t |Df_t - 1|` at scale `δ`.
pub fn irrational_envelope(delta: f64) -> f64 {
    if !(delta < 1.0) {
        return f64::INFINITY;
    }
    let u = u1(delta).max(u2(delta));
    u * u.exp()
}

pub fn rational_envelope(delta: f64) -> f64 {
    if !(delta < 1.0) {
        return f64::INFINITY;
    }
    2.0 * v(delta)
}

pub fn build_path<T: Real>(f: &Diffeo<T>, g: &Diffeo<T>, dec: Decomposition<T>, tol: &Tolerances) -> Result<HomotopyPath<T>> {
    let mut pieces = Vec::new();
    let mut min_dh = Vec::new();
    for c in &dec.payloads {
        let kind = match &c.kind {
            ComponentKind::Rational { p, q, h } => {
                let probes = cosine_grid(&c.interval, 1025);
                let m = probes.iter().map(|&x| h.deriv(x)).fold(T::infinity(), T::min);
                if !(m > T::zero()) {
                    return Err(Error::NotMonotone { at: c.interval.mid().f64(), deriv: m.f64() });
                }
                min_dh.push(m.f64());
                PieceKind::Rational { p: *p, q: *q, h: h.restrict(c.interval) }
            }
            ComponentKind::Irrational { nu, tau } => {
                let flow = FieldFlow::new(nu.clone(), tol.eps_quad);
                let span = T::one().max(tau.abs());
                for x in cosine_grid(&c.interval.shrink(0.05), 17) {
                    flow.displacement(x, span)?;
                    flow.displacement(x, -span)?;
                }
                PieceKind::Irrational { flow, tau: *tau }
            }
        };
        pieces.push(Piece { interval: c.interval, kind });
    }
    let f0 = dec.f0();
    Ok(HomotopyPath { decomposition: dec, f: f.clone(), g: g.clone(), pieces, f0, min_generator_derivative: min_dh, tol: tol.clone() })
}

fn nan_local<T: Real>() -> Local<T> {
    Local { disp: T::nan(), d1: T::nan(), d2: T::nan() }
}

impl<T: Real> HomotopyPath<T> {
    /// `(f_t, g_t)`; exact inputs at `t = 0` and exact identities at `t = 1`.
    pub fn maps_at(&self, t: T) -> Result<(Diffeo<T>, Diffeo<T>)> {
        let dom = self.f.domain();
        if !(t >= T::zero() && t <= T::one()) {
            return Err(Error::Config(format!("path time {} is outside [0, 1]", t.f64())));
        }
        if t == T::zero() {
            return Ok((self.f.clone(), self.g.clone()));
        }
        if t == T::one() {
            return Ok((Diffeo::identity(dom), Diffeo::identity(dom)));
        }
        let mut fs = Vec::new();
        let mut gs = Vec::new();
        for fp in &self.f0 {
            if fp.hi > fp.lo {
                let id = Diffeo::identity(Interval { lo: fp.lo, hi: fp.hi });
                fs.push(id.clone());
                gs.push(id);
            }
            if let Some(piece) = self.pieces.iter().find(|p| p.interval.lo == fp.hi) {
                let (a, b) = self.piece_maps(piece, t)?;
                fs.push(a);
                gs.push(b);
            }
        }
        if fs.is_empty() {
            return Ok((Diffeo::identity(dom), Diffeo::identity(dom)));
        }
        Ok((Diffeo::piecewise(fs)?, Diffeo::piecewise(gs)?))
    }

    fn piece_maps(&self, piece: &Piece<T>, t: T) -> Result<(Diffeo<T>, Diffeo<T>)> {
        let iv = piece.interval;
        match &piece.kind {
            PieceKind::Rational { p, q, h } => {
                let ht = h.blend(T::one() - t).restrict(iv);
                Ok((ht.iterate(*q)?.restrict(iv), ht.iterate(*p)?.restrict(iv)))
            }
            PieceKind::Irrational { flow, tau } => {
                let s = T::one() - t;
                let mk = |time: T, name: &str| {
                    let fl = flow.clone();
                    Diffeo::pointwise(
                        iv,
                        Openness::Closed,
                        format!("{name}[time {}]", time.f64()),
                        Arc::new(move |x: T| fl.local(x, time).unwrap_or_else(|_| nan_local())),
                    )
                };
                Ok((mk(s, "flow"), mk(s * *tau, "flow")))
            }
        }
    }

    /// The merged field on irrational components, zero elsewhere.
    pub fn global_field(&self, x: T) -> (T, T) {
        for p in &self.pieces {
            if let PieceKind::Irrational { flow, .. } = &p.kind {
                if x >= p.interval.lo && x <= p.interval.hi {
                    return flow.field.eval(x);
                }
            }
        }
        (T::zero(), T::zero())
    }

    /// Kind of the component containing `x`: `Some(true)` rational,
    /// `Some(false)` irrational, `None` on `F₀`.
    fn kind_at(&self, x: T) -> Option<bool> {
        self.pieces
            .iter()
            .find(|p| x > p.interval.lo && x < p.interval.hi)
            .map(|p| matches!(p.kind, PieceKind::Rational { .. }))
    }
}

/// Probe lattice for [`verify_path`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProbeLattice {
    pub n_t: usize,
    pub n_x: usize,
    pub k_min: u32,
    pub k_max: u32,
}

impl Default for ProbeLattice {
    fn default() -> Self {
        Self { n_t: 21, n_x: 2048, k_min: 4, k_max: 16 }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct EndpointResiduals {
    pub f0: f64,
    pub g0: f64,
    pub f1: f64,
    pub g1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct C1Row {
    pub s: f64,
    pub t: f64,
    pub sup: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DyadicRow {
    pub c: f64,
    /// `-1` left of `c`, `+1` right of it.
    pub side: i32,
    pub k: u32,
    pub x: f64,
    pub deviation: f64,
    pub delta: f64,
    pub envelope: f64,
    pub rational: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Checks {
    pub commutation: bool,
    pub endpoints: bool,
    pub positivity: bool,
    pub domination: bool,
    pub f0_fixed: bool,
    pub dyadic_monotone: bool,
    pub dyadic_dominated: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathReport {
    pub lattice: ProbeLattice,
    pub commutation_residual: f64,
    pub endpoint_residuals: EndpointResiduals,
    pub derivative_positivity_min: f64,
    /// `max(|f_t - id| - |f - id|)` and the same for `g`.
    pub domination_excess: f64,
    pub f0_fixed_residual: f64,
    pub c1_modulus: Vec<C1Row>,
    pub boundary_derivative_deviation: f64,
    pub dyadic: Vec<DyadicRow>,
    pub checks: Checks,
    pub ok: bool,
}

struct TimeSlice {
    comm: f64,
    f_end: f64,
    g_end: f64,
    pos_min: f64,
    dom_excess: f64,
    f0_res: f64,
    df: Vec<f64>,
    dg: Vec<f64>,
    dyadic_dev: Vec<f64>,
}

fn dyadic_points<T: Real>(f0: &[FixedPiece<T>], lat: &ProbeLattice, dom: &Interval<T>) -> Vec<(f64, i32, u32, T)> {
    let mut out = Vec::new();
    for p in f0.iter().filter(|p| p.flat) {
        for (c, side) in [(p.lo, -1i32), (p.hi, 1)] {
            for k in lat.k_min..=lat.k_max {
                let x = c + T::c(side as f64 * 2f64.powi(-(k as i32)));
                if x > dom.lo && x < dom.hi {
                    out.push((c.f64(), side, k, x));
                }
            }
        }
    }
    out
}

/// Evaluates every path check on the lattice.
pub fn verify_path<T: Real>(path: &HomotopyPath<T>, lat: &ProbeLattice) -> Result<PathReport> {
    let dom = path.f.domain();
    let xs = cosine_grid(&dom, lat.n_x);
    let ts: Vec<f64> = (0..lat.n_t).map(|j| j as f64 / (lat.n_t - 1) as f64).collect();
    let dy = dyadic_points(&path.f0, lat, &dom);
    // an excluded end is not a point of the domain, so nothing is checked there
    let excluded = match path.f.openness() {
        Openness::Closed => None,
        Openness::OpenHi => Some(dom.hi),
        Openness::OpenLo => Some(dom.lo),
    };
    let f0_pts: Vec<T> = path.f0.iter().flat_map(|p| [p.lo, p.hi]).filter(|&c| Some(c) != excluded).collect();
    let f_disp: Vec<T> = xs.par_iter().map(|&x| path.f.displacement(x)).collect();
    let g_disp: Vec<T> = xs.par_iter().map(|&x| path.g.displacement(x)).collect();
    let mut slices = Vec::with_capacity(ts.len());
    for &t in &ts {
        let (ft, gt) = path.maps_at(T::c(t))?;
        let per_x: Vec<(f64, f64, f64, f64, f64, f64, f64)> = xs
            .par_iter()
            .enumerate()
            .map(|(i, &x)| {
                let a = ft.local(x);
                let b = gt.local(x);
                let fx = x + a.disp;
                let gx = x + b.disp;
                let comm = (ft.eval(gx) - gt.eval(fx)).abs().f64();
                let f_end = (fx - path.f.eval(x)).abs().f64();
                let g_end = (gx - path.g.eval(x)).abs().f64();
                let pos = a.d1.min(b.d1).f64();
                let excess = (a.disp.abs() - f_disp[i].abs()).max(b.disp.abs() - g_disp[i].abs()).f64();
                (comm, f_end, g_end, pos, excess, a.d1.f64(), b.d1.f64())
            })
            .collect();
        let nan_max = |acc: f64, v: f64| if v.is_nan() || acc.is_nan() { f64::NAN } else { acc.max(v) };
        let nan_min = |acc: f64, v: f64| if v.is_nan() || acc.is_nan() { f64::NAN } else { acc.min(v) };
        let f0_res = f0_pts
            .iter()
            .map(|&c| ft.displacement(c).abs().max(gt.displacement(c).abs()).f64())
            .fold(0.0, nan_max);
        let dyadic_dev = dy
            .iter()
            .map(|&(_, _, _, x)| (ft.deriv(x) - T::one()).abs().max((gt.deriv(x) - T::one()).abs()).f64())
            .collect();
        slices.push(TimeSlice {
            comm: per_x.iter().map(|r| r.0).fold(0.0, nan_max),
            f_end: per_x.iter().map(|r| r.1).fold(0.0, nan_max),
            g_end: per_x.iter().map(|r| r.2).fold(0.0, nan_max),
            pos_min: per_x.iter().map(|r| r.3).fold(f64::INFINITY, nan_min),
            dom_excess: per_x.iter().map(|r| r.4).fold(f64::NEG_INFINITY, nan_max),
            f0_res,
            df: per_x.iter().map(|r| r.5).collect(),
            dg: per_x.iter().map(|r| r.6).collect(),
            dyadic_dev,
        });
    }
    let fold_max = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, |a, v| if v.is_nan() || a.is_nan() { f64::NAN } else { a.max(v) });
    let commutation_residual = fold_max(&mut slices.iter().map(|s| s.comm));
    let (f1, g1) = path.maps_at(T::one())?;
    let id = Diffeo::identity(dom);
    let endpoint_residuals = EndpointResiduals {
        f0: slices[0].f_end,
        g0: slices[0].g_end,
        f1: f1.sup_distance(&id, lat.n_x).f64(),
        g1: g1.sup_distance(&id, lat.n_x).f64(),
    };
    let derivative_positivity_min = slices.iter().map(|s| s.pos_min).fold(f64::INFINITY, |a, v| if v.is_nan() { f64::NAN } else { a.min(v) });
    let domination_excess = slices.iter().map(|s| s.dom_excess).fold(f64::NEG_INFINITY, |a, v| if v.is_nan() { f64::NAN } else { a.max(v) });
    let f0_fixed_residual = fold_max(&mut slices.iter().map(|s| s.f0_res));
    let c1_modulus = slices
        .windows(2)
        .zip(ts.windows(2))
        .map(|(w, tt)| {
            let sup = w[0]
                .df
                .iter()
                .zip(&w[1].df)
                .map(|(a, b)| (a - b).abs())
                .chain(w[0].dg.iter().zip(&w[1].dg).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            C1Row { s: tt[0], t: tt[1], sup }
        })
        .collect();
    let mut dyadic = Vec::new();
    for (j, &(c, side, k, x)) in dy.iter().enumerate() {
        let deviation = fold_max(&mut slices.iter().map(|s| s.dyadic_dev[j]));
        let r = T::c(2f64.powi(-(k as i32)));
        let cc = T::c(c);
        let nb = Interval { lo: (cc - r).max(dom.lo), hi: (cc + r).min(dom.hi) };
        let delta = path.f.c2_distance_on(&nb, 257).max(path.g.c2_distance_on(&nb, 257)).f64() * 1.01;
        let rational = path.kind_at(x).unwrap_or(false);
        let envelope = if path.kind_at(x).is_none() {
            f64::INFINITY
        } else if rational {
            rational_envelope(delta)
        } else {
            irrational_envelope(delta)
        };
        dyadic.push(DyadicRow { c, side, k, x: x.f64(), deviation, delta, envelope, rational });
    }
    let boundary_derivative_deviation = fold_max(&mut dyadic.iter().map(|r| r.deviation));
    let dyadic_monotone = dyadic
        .windows(2)
        .filter(|w| w[0].c == w[1].c && w[0].side == w[1].side)
        .all(|w| w[1].deviation <= w[0].deviation + 1e-12);
    let dyadic_dominated = dyadic.iter().all(|r| r.deviation <= r.envelope);
    let tol = &path.tol;
    let checks = Checks {
        commutation: commutation_residual < tol.eps_comm,
        endpoints: endpoint_residuals.f0 <= 1e-9
            && endpoint_residuals.g0 <= 1e-9
            && endpoint_residuals.f1 == 0.0
            && endpoint_residuals.g1 == 0.0,
        positivity: derivative_positivity_min > 0.0,
        domination: domination_excess <= 1e-12,
        f0_fixed: f0_fixed_residual <= 1e-12,
        dyadic_monotone,
        dyadic_dominated,
    };
    let ok = checks.commutation
        && checks.endpoints
        && checks.positivity
        && checks.domination
        && checks.f0_fixed
        && checks.dyadic_monotone
        && checks.dyadic_dominated;
    Ok(PathReport {
        lattice: *lat,
        commutation_residual,
        endpoint_residuals,
        derivative_positivity_min,
        domination_excess,
        f0_fixed_residual,
        c1_modulus,
        boundary_derivative_deviation,
        dyadic,
        checks,
        ok,
    })
}

/// One time slice of the path on a grid.
#[derive(Debug, Clone)]
pub struct Frame {
    pub t: f64,
    pub xs: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub df: Vec<f64>,
    pub dg: Vec<f64>,
}

pub fn path_to_frames<T: Real>(path: &HomotopyPath<T>, times: &[f64], n: usize) -> Result<Vec<Frame>> {
    let xs = cosine_grid(&path.f.domain(), n);
    times
        .iter()
        .map(|&t| {
            let (ft, gt) = path.maps_at(T::c(t))?;
            let rows: Vec<(f64, f64, f64, f64)> = xs
                .par_iter()
                .map(|&x| {
                    let a = ft.local(x);
                    let b = gt.local(x);
                    ((x + a.disp).f64(), (x + b.disp).f64(), a.d1.f64(), b.d1.f64())
                })
                .collect();
            Ok(Frame {
                t,
                xs: xs.iter().map(|x| x.f64()).collect(),
                f: rows.iter().map(|r| r.0).collect(),
                g: rows.iter().map(|r| r.1).collect(),
                df: rows.iter().map(|r| r.2).collect(),
                dg: rows.iter().map(|r| r.3).collect(),
            })
        })
        .collect()
}

/// `t,x,f_t,g_t,df_t,dg_t`.
pub fn write_frames_csv<W: Write>(frames: &[Frame], mut w: W) -> Result<()> {
    writeln!(w, "t,x,f_t,g_t,df_t,dg_t")?;
    for fr in frames {
        for i in 0..fr.xs.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                fmt17(fr.t),
                fmt17(fr.xs[i]),
                fmt17(fr.f[i]),
                fmt17(fr.g[i]),
                fmt17(fr.df[i]),
                fmt17(fr.dg[i])
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::decompose;

    fn logistic(t: f64) -> Diffeo<f64> {
        Diffeo::parse(&format!("x/(x+(1-x)*exp({t}))"), Interval::<f64>::unit(), Openness::Closed).unwrap()
    }

    fn path(f: &Diffeo<f64>, g: &Diffeo<f64>) -> HomotopyPath<f64> {
        let tol = Tolerances::default();
        build_path(f, g, decompose(f, g, &tol).unwrap(), &tol).unwrap()
    }

    #[test]
    fn logistic_midpoint_is_half_time_map() {
        let (f, g) = (logistic(1.0), logistic(2f64.sqrt()));
        let p = path(&f, &g);
        let (fh, _) = p.maps_at(0.5).unwrap();
        assert!((fh.eval(0.5) - 1.0 / (1.0 + 0.5f64.exp())).abs() < 1e-9);
        let (f0, g0) = p.maps_at(0.0).unwrap();
        assert_eq!(f0.sup_distance(&f, 257), 0.0);
        assert_eq!(g0.sup_distance(&g, 257), 0.0);
        let frames = path_to_frames(&p, &[0.0, 0.5, 1.0], 257).unwrap();
        assert_eq!(frames.len(), 3);
        let exact = logistic(0.5);
        for (x, y) in frames[1].xs.iter().zip(&frames[1].f) {
            assert!((exact.eval(*x) - y).abs() < 1e-8);
        }
        assert!(frames[2].xs.iter().zip(&frames[2].f).all(|(x, y)| x == y));
    }

    #[test]
    fn logistic_path_verifies() {
        let p = path(&logistic(1.0), &logistic(2f64.sqrt()));
        let r = verify_path(&p, &ProbeLattice { n_t: 11, n_x: 512, ..Default::default() }).unwrap();
        assert!(r.ok, "{:?}", r.checks);
        assert!(r.commutation_residual < 1e-9);
        assert!(r.c1_modulus.iter().all(|c| c.sup > 0.0));
    }

    #[test]
    fn rational_path_commutes_to_roundoff() {
        let h = logistic(1.0);
        let p = path(&h.iterate(3).unwrap(), &h.iterate(2).unwrap());
        let r = verify_path(&p, &ProbeLattice { n_t: 11, n_x: 512, ..Default::default() }).unwrap();
        assert!(r.ok, "{:?}", r.checks);
        assert!(r.commutation_residual < 1e-9, "{}", r.commutation_residual);
    }

    #[test]
    fn identity_pair_has_zero_residuals() {
        let id = Diffeo::identity(Interval::<f64>::unit());
        let p = path(&id, &id);
        let r = verify_path(&p, &ProbeLattice::default()).unwrap();
        assert!(r.ok);
        assert_eq!(r.commutation_residual, 0.0);
        assert_eq!(r.boundary_derivative_deviation, 0.0);
        assert!(r.dyadic.is_empty());
    }

    #[test]
    fn envelopes_are_monotone() {
        let mut prev = (0.0, 0.0);
        for i in 1..50 {
            let d = i as f64 / 60.0;
            let cur = (irrational_envelope(d), rational_envelope(d));
            assert!(cur.0 > prev.0 && cur.1 > prev.1);
            prev = cur;
        }
        assert_eq!(irrational_envelope(1.0), f64::INFINITY);
    }
}
