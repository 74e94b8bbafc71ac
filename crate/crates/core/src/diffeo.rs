//! Orientation-preserving diffeomorphisms of subintervals of `[0, 1]`.
//!
//! A [`Diffeo`] is evaluated through its *displacement* `f(x) - x` together
//! with `Df` and `D²f`. Carrying the displacement instead of the value keeps
//! full relative precision near fixed points, which every downstream
//! construction depends on.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::hermite::{cubic, fd_slopes_median, monotone_limit};
use crate::interval::{cosine_grid, locate, uniform_grid, Interval, Openness};
use crate::scalar::{Jet, Real};

/// Displacement and derivatives at a point: `f(x) = x + disp`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Local<T> {
    pub disp: T,
    pub d1: T,
    pub d2: T,
}

impl<T: Real> Local<T> {
    fn identity() -> Self {
        Self { disp: T::zero(), d1: T::one(), d2: T::zero() }
    }
}

/// Tabulated map: nodes, displacements and the first two derivatives.
#[derive(Debug, Clone)]
pub struct Sampled<T> {
    xs: Vec<T>,
    disp: Vec<T>,
    df: Vec<T>,
    d2f: Vec<T>,
    /// Monotone-limited slopes of the displacement.
    vslope: Vec<T>,
}

impl<T: Real> Sampled<T> {
    pub fn new(xs: Vec<T>, disp: Vec<T>, df: Vec<T>, d2f: Option<Vec<T>>) -> Result<Self> {
        let n = xs.len();
        if n < 3 || disp.len() != n || df.len() != n {
            return Err(Error::Csv(format!("sampled map needs >= 3 aligned nodes, got {n}")));
        }
        if let Some(w) = xs.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::NotMonotone { at: w[1].f64(), deriv: f64::NAN });
        }
        if let Some(i) = df.iter().position(|d| !(*d > T::zero())) {
            return Err(Error::NotMonotone { at: xs[i].f64(), deriv: df[i].f64() });
        }
        let mut secants = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let s = T::one() + (disp[i + 1] - disp[i]) / (xs[i + 1] - xs[i]);
            if !(s > T::zero()) {
                return Err(Error::NotMonotone { at: xs[i].f64(), deriv: s.f64() });
            }
            secants.push(s);
        }
        let mut slopes = df.clone();
        monotone_limit(&secants, &mut slopes);
        let vslope = slopes.iter().map(|m| *m - T::one()).collect();
        let d2f = match d2f {
            Some(v) if v.len() == n => v,
            _ => fd_slopes_median(&xs, &df),
        };
        Ok(Self { xs, disp, df, d2f, vslope })
    }

    pub fn nodes(&self) -> &[T] {
        &self.xs
    }

    pub fn displacements(&self) -> &[T] {
        &self.disp
    }

    pub fn derivatives(&self) -> &[T] {
        &self.df
    }

    fn local(&self, x: T) -> Local<T> {
        let i = locate(&self.xs, x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (disp, _, _) = cubic(x0, x1, self.disp[i], self.disp[i + 1], self.vslope[i], self.vslope[i + 1], x);
        let (d1, d2, _) = cubic(x0, x1, self.df[i], self.df[i + 1], self.d2f[i], self.d2f[i + 1], x);
        Local { disp, d1, d2 }
    }

    /// Exact inverse table: swap roles of nodes and values.
    fn inverse(&self) -> Self {
        let xs: Vec<T> = self.xs.iter().zip(&self.disp).map(|(x, d)| *x + *d).collect();
        let disp = self.disp.iter().map(|d| -*d).collect();
        let df: Vec<T> = self.df.iter().map(|d| T::one() / *d).collect();
        let d2f = self.d2f.iter().zip(&self.df).map(|(dd, d)| -*dd / (*d * *d * *d)).collect();
        Self::new(xs, disp, df, Some(d2f)).expect("inverse of a valid table is valid")
    }
}

#[derive(Debug, Clone)]
struct ClosedForm<T> {
    source: String,
    expr: Expr<T>,
    disp: Expr<T>,
    d1: Expr<T>,
    d2: Expr<T>,
}

/// Pointwise evaluator of displacement and derivatives.
pub type LocalFn<T> = Arc<dyn Fn(T) -> Local<T> + Send + Sync>;

enum Repr<T> {
    Identity,
    Closed(ClosedForm<T>),
    Sampled(Sampled<T>),
    /// Inverse of a closed form, evaluated by safeguarded Newton.
    Inverse(Diffeo<T>),
    /// Applied left to right: `chain[0]` first.
    Chain(Vec<Diffeo<T>>),
    /// `x + w (h(x) - x)`.
    Blend(Diffeo<T>, T),
    /// Pieces with abutting domains, in order.
    Piecewise(Vec<Diffeo<T>>),
    Pointwise(LocalFn<T>, String),
}

impl<T: fmt::Debug> fmt::Debug for Repr<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Repr::Identity => write!(f, "Identity"),
            Repr::Closed(c) => write!(f, "Closed({})", c.source),
            Repr::Sampled(s) => write!(f, "Sampled({} nodes)", s.xs.len()),
            Repr::Inverse(g) => write!(f, "Inverse({g:?})"),
            Repr::Chain(v) => f.debug_tuple("Chain").field(v).finish(),
            Repr::Blend(h, w) => write!(f, "Blend({h:?}, {w:?})"),
            Repr::Piecewise(v) => f.debug_tuple("Piecewise").field(v).finish(),
            Repr::Pointwise(_, name) => write!(f, "Pointwise({name})"),
        }
    }
}

/// An orientation-preserving C² diffeomorphism of `domain`.
#[derive(Debug, Clone)]
pub struct Diffeo<T> {
    domain: Interval<T>,
    openness: Openness,
    regularity: u32,
    repr: Arc<Repr<T>>,
    inv_tol: T,
}

impl<T: Real> Diffeo<T> {
    fn wrap(domain: Interval<T>, openness: Openness, repr: Repr<T>) -> Self {
        Self {
            domain,
            openness,
            regularity: 2,
            repr: Arc::new(repr),
            inv_tol: T::floor_tol(1e-12, 8.0) * domain.len(),
        }
    }

    pub fn identity(domain: Interval<T>) -> Self {
        Self::wrap(domain, Openness::Closed, Repr::Identity)
    }

    /// Parses a closed form and checks it is a diffeomorphism of `domain`:
    /// fixed endpoints (except an open one) and `Df > 0` on a probe grid.
    pub fn parse(text: &str, domain: Interval<T>, openness: Openness) -> Result<Self> {
        let expr = Expr::parse(text)?;
        let d1 = expr.derivative();
        let d2 = d1.derivative();
        let disp = expr.displacement();
        let cf = ClosedForm { source: text.trim().to_string(), expr, disp, d1, d2 };
        let f = Self::wrap(domain, openness, Repr::Closed(cf));
        f.check_endpoints(T::floor_tol(1e-12, 16.0))?;
        f.check_monotone(1025)?;
        Ok(f)
    }

    /// Builds a tabulated map; closed ends must be fixed to `1e-12`, after
    /// which the end displacements are set to zero exactly.
    pub fn from_samples(
        domain: Interval<T>,
        openness: Openness,
        xs: Vec<T>,
        mut disp: Vec<T>,
        df: Vec<T>,
        d2f: Option<Vec<T>>,
    ) -> Result<Self> {
        let n = xs.len();
        if n < 3 {
            return Err(Error::Csv("need at least 3 nodes".into()));
        }
        let tol = T::floor_tol(1e-12, 16.0);
        if (xs[0] - domain.lo).abs() > tol || (xs[n - 1] - domain.hi).abs() > tol {
            return Err(Error::DomainMismatch {
                a_lo: xs[0].f64(),
                a_hi: xs[n - 1].f64(),
                b_lo: domain.lo.f64(),
                b_hi: domain.hi.f64(),
            });
        }
        if openness != Openness::OpenLo {
            if disp[0].abs() > tol {
                return Err(Error::EndpointNotFixed { endpoint: xs[0].f64(), value: (xs[0] + disp[0]).f64() });
            }
            disp[0] = T::zero();
        }
        if openness != Openness::OpenHi {
            if disp[n - 1].abs() > tol {
                return Err(Error::EndpointNotFixed {
                    endpoint: xs[n - 1].f64(),
                    value: (xs[n - 1] + disp[n - 1]).f64(),
                });
            }
            disp[n - 1] = T::zero();
        }
        let s = Sampled::new(xs, disp, df, d2f)?;
        Ok(Self::wrap(domain, openness, Repr::Sampled(s)))
    }

    /// Tabulates `map` (displacement, derivatives) on the nodes `xs`.
    pub fn tabulate<F>(domain: Interval<T>, openness: Openness, xs: Vec<T>, map: F) -> Result<Self>
    where
        F: Fn(T) -> Result<Local<T>> + Sync,
    {
        let vals: Result<Vec<Local<T>>> = xs.par_iter().map(|&x| map(x)).collect();
        let vals = vals?;
        let disp = vals.iter().map(|l| l.disp).collect();
        let df = vals.iter().map(|l| l.d1).collect();
        let d2f = vals.iter().map(|l| l.d2).collect();
        Self::from_samples(domain, openness, xs, disp, df, Some(d2f))
    }

    /// Map given by a closure returning displacement and derivatives.
    pub fn pointwise(domain: Interval<T>, openness: Openness, name: impl Into<String>, f: LocalFn<T>) -> Self {
        Self::wrap(domain, openness, Repr::Pointwise(f, name.into()))
    }

    /// Glues maps on abutting intervals into one map on their union.
    pub fn piecewise(pieces: Vec<Diffeo<T>>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Config("piecewise map needs at least one piece".into()));
        }
        let tol = T::floor_tol(1e-12, 16.0);
        for w in pieces.windows(2) {
            if (w[0].domain.hi - w[1].domain.lo).abs() > tol {
                return Err(Error::DomainMismatch {
                    a_lo: w[0].domain.lo.f64(),
                    a_hi: w[0].domain.hi.f64(),
                    b_lo: w[1].domain.lo.f64(),
                    b_hi: w[1].domain.hi.f64(),
                });
            }
        }
        let dom = Interval::new(pieces[0].domain.lo, pieces[pieces.len() - 1].domain.hi)?;
        Ok(Self::wrap(dom, Openness::Closed, Repr::Piecewise(pieces)))
    }

    pub fn domain(&self) -> Interval<T> {
        self.domain
    }

    pub fn openness(&self) -> Openness {
        self.openness
    }

    pub fn regularity_order(&self) -> u32 {
        self.regularity
    }

    pub fn is_identity(&self) -> bool {
        matches!(*self.repr, Repr::Identity)
    }

    pub fn is_sampled(&self) -> bool {
        matches!(*self.repr, Repr::Sampled(_))
    }

    pub fn as_sampled(&self) -> Option<&Sampled<T>> {
        match &*self.repr {
            Repr::Sampled(s) => Some(s),
            _ => None,
        }
    }

    /// Short human description for reports.
    /// Parsed expression, for closed-form maps.
    pub fn expr(&self) -> Option<&Expr<T>> {
        match &*self.repr {
            Repr::Closed(c) => Some(&c.expr),
            _ => None,
        }
    }

    pub fn describe(&self) -> String {
        match &*self.repr {
            Repr::Identity => "x".into(),
            Repr::Closed(c) => c.source.clone(),
            Repr::Sampled(s) => format!("sampled[{} nodes]", s.xs.len()),
            Repr::Inverse(f) => format!("inverse({})", f.describe()),
            Repr::Chain(v) => format!("chain[{}]", v.len()),
            Repr::Blend(h, w) => format!("blend({}, {})", h.describe(), w),
            Repr::Piecewise(v) => format!("piecewise[{}]", v.len()),
            Repr::Pointwise(_, name) => name.clone(),
        }
    }

    /// Sets the open end used for endpoint checks and grids.
    pub fn with_openness(mut self, openness: Openness) -> Self {
        self.openness = openness;
        self
    }

    /// Same map, metadata restricted to `iv`.
    pub fn restrict(&self, iv: Interval<T>) -> Self {
        let mut out = self.clone();
        out.domain = iv;
        out.openness = Openness::Closed;
        out.inv_tol = T::floor_tol(1e-12, 8.0) * iv.len();
        out
    }

    /// Displacement and derivatives at `x`.
    pub fn local(&self, x: T) -> Local<T> {
        match &*self.repr {
            Repr::Identity => Local::identity(),
            Repr::Closed(c) => Local { disp: c.disp.eval(x), d1: c.d1.eval(x), d2: c.d2.eval(x) },
            Repr::Sampled(s) => s.local(x),
            Repr::Inverse(f) => self.inverse_local(f, x),
            Repr::Chain(maps) => {
                let mut y = x;
                let mut disp = T::zero();
                let mut d1 = T::one();
                let mut d2 = T::zero();
                for m in maps {
                    let l = m.local(y);
                    d2 = l.d2 * d1 * d1 + l.d1 * d2;
                    d1 = l.d1 * d1;
                    disp = disp + l.disp;
                    y = y + l.disp;
                }
                Local { disp, d1, d2 }
            }
            Repr::Blend(h, w) => {
                let l = h.local(x);
                Local { disp: *w * l.disp, d1: T::one() + *w * (l.d1 - T::one()), d2: *w * l.d2 }
            }
            Repr::Piecewise(pieces) => {
                let p = pieces
                    .iter()
                    .find(|p| x <= p.domain.hi)
                    .unwrap_or(&pieces[pieces.len() - 1]);
                p.local(x)
            }
            Repr::Pointwise(f, _) => f(x),
        }
    }

    fn inverse_local(&self, f: &Diffeo<T>, x: T) -> Local<T> {
        // Solve s + d(x + s) = 0 for the inverse displacement s.
        let lo = f.domain.lo.min(x) - x;
        let hi = f.domain.hi.max(x) - x;
        let (mut a, mut b) = (lo, hi);
        let mut s = -f.local(x).disp;
        if !(s > a && s < b) {
            s = T::zero();
        }
        let tol = self.inv_tol.min(T::floor_tol(1e-14, 4.0));
        for _ in 0..60 {
            let l = f.local(x + s);
            let r = s + l.disp;
            if r == T::zero() {
                break;
            }
            if r > T::zero() {
                b = s;
            } else {
                a = s;
            }
            let mut next = s - r / l.d1;
            if !(next > a && next < b) {
                next = (a + b) / T::c(2.0);
            }
            let step = (next - s).abs();
            s = next;
            if step <= tol * (T::one() + x.abs()) * T::c(1e-2) || (b - a) <= tol * T::c(1e-2) {
                break;
            }
        }
        let l = f.local(x + s);
        let d1 = T::one() / l.d1;
        Local { disp: s, d1, d2: -l.d2 * d1 * d1 * d1 }
    }

    pub fn eval(&self, x: T) -> T {
        x + self.local(x).disp
    }

    pub fn displacement(&self, x: T) -> T {
        self.local(x).disp
    }

    pub fn deriv(&self, x: T) -> T {
        self.local(x).d1
    }

    pub fn jet(&self, x: T) -> Jet<T> {
        let l = self.local(x);
        Jet::new(x + l.disp, l.d1, l.d2)
    }

    fn check_domain(&self, g: &Diffeo<T>) -> Result<()> {
        let tol = T::floor_tol(1e-12, 16.0);
        if !self.domain.same_as(&g.domain, tol) {
            return Err(Error::DomainMismatch {
                a_lo: self.domain.lo.f64(),
                a_hi: self.domain.hi.f64(),
                b_lo: g.domain.lo.f64(),
                b_hi: g.domain.hi.f64(),
            });
        }
        Ok(())
    }

    fn chain_members(&self) -> Vec<Diffeo<T>> {
        match &*self.repr {
            Repr::Identity => vec![],
            Repr::Chain(v) => v.clone(),
            _ => vec![self.clone()],
        }
    }

    /// `self ∘ g`. The result is evaluated lazily by the chain rule.
    pub fn compose(&self, g: &Diffeo<T>) -> Result<Self> {
        self.check_domain(g)?;
        let mut chain = g.chain_members();
        chain.extend(self.chain_members());
        Ok(self.chained(chain))
    }

    fn chained(&self, chain: Vec<Diffeo<T>>) -> Self {
        let openness = self.openness;
        match chain.len() {
            0 => Self::identity(self.domain).with_openness(openness),
            1 => chain[0].restrict(self.domain).with_openness(openness),
            _ => {
                let mut d = Self::wrap(self.domain, openness, Repr::Chain(chain));
                d.inv_tol = self.inv_tol;
                d
            }
        }
    }

    /// Inverse map. Tables are inverted exactly by swapping axes; closed
    /// forms are inverted pointwise by bracketed Newton iteration.
    pub fn invert(&self) -> Result<Self> {
        let out = match &*self.repr {
            Repr::Identity => self.clone(),
            Repr::Closed(_) => {
                self.check_monotone(257)?;
                let mut d = Self::wrap(self.domain, self.openness, Repr::Inverse(self.clone()));
                d.inv_tol = self.inv_tol;
                d
            }
            Repr::Sampled(s) => {
                let mut d = Self::wrap(self.domain, self.openness, Repr::Sampled(s.inverse()));
                d.inv_tol = self.inv_tol;
                d
            }
            Repr::Inverse(f) => f.restrict(self.domain).with_openness(self.openness),
            Repr::Chain(v) => {
                let inv: Result<Vec<_>> = v.iter().rev().map(|m| m.invert()).collect();
                self.chained(inv?)
            }
            Repr::Blend(_, _) | Repr::Pointwise(..) => {
                let mut d = Self::wrap(self.domain, self.openness, Repr::Inverse(self.clone()));
                d.inv_tol = self.inv_tol;
                d
            }
            Repr::Piecewise(p) => {
                let inv: Result<Vec<_>> = p.iter().map(|m| m.invert()).collect();
                Self::piecewise(inv?)?
            }
        };
        Ok(out)
    }

    /// `f^k` for any integer `k`.
    pub fn iterate(&self, k: i64) -> Result<Self> {
        if k == 0 {
            return Ok(Self::identity(self.domain).with_openness(self.openness));
        }
        let base = if k < 0 { self.invert()? } else { self.clone() };
        let members = base.chain_members();
        let mut chain = Vec::with_capacity(members.len() * k.unsigned_abs() as usize);
        for _ in 0..k.unsigned_abs() {
            chain.extend(members.iter().cloned());
        }
        Ok(self.chained(chain))
    }

    /// `f^k`, re-tabulated on `n` cosine nodes after every composition.
    /// Returns the map and the accumulated sup-norm resampling error,
    /// estimated at the cell midpoints of each intermediate table.
    pub fn iterate_resampled(&self, k: i64, n: usize) -> Result<(Self, T)> {
        let step = if k < 0 { self.invert()? } else { self.clone() };
        let mut acc = Self::identity(self.domain).with_openness(self.openness);
        let mut err = T::zero();
        for _ in 0..k.unsigned_abs() {
            let lazy = step.compose(&acc)?;
            let table = lazy.resample(n)?;
            let xs = cosine_grid(&self.domain, n);
            let e = xs
                .windows(2)
                .map(|w| {
                    let m = (w[0] + w[1]) / T::c(2.0);
                    (table.displacement(m) - lazy.displacement(m)).abs()
                })
                .fold(T::zero(), T::max);
            err = err + e;
            acc = table;
        }
        Ok((acc, err))
    }

    /// `x + w (f(x) - x)`: the convex combination `(1 - w) id + w f`.
    pub fn blend(&self, w: T) -> Self {
        if w == T::zero() {
            return Self::identity(self.domain).with_openness(self.openness);
        }
        if w == T::one() {
            return self.clone();
        }
        let mut d = Self::wrap(self.domain, self.openness, Repr::Blend(self.clone(), w));
        d.inv_tol = self.inv_tol;
        d
    }

    /// Tabulates on `n` cosine nodes of the domain.
    pub fn resample(&self, n: usize) -> Result<Self> {
        let xs = cosine_grid(&self.domain, n);
        Self::tabulate(self.domain, self.openness, xs, |x| Ok(self.local(x)))
    }

    /// Nodes to use when this map is the source of a grid.
    pub fn nodes(&self, n: usize) -> Vec<T> {
        match &*self.repr {
            Repr::Sampled(s) => s.xs.clone(),
            Repr::Piecewise(pieces) => {
                let mut xs: Vec<T> = Vec::new();
                for p in pieces {
                    let ys = p.nodes(n);
                    let skip = usize::from(xs.last().is_some_and(|l| ys.first() == Some(l)));
                    xs.extend_from_slice(&ys[skip..]);
                }
                xs
            }
            _ => cosine_grid(&self.domain, n),
        }
    }

    /// Sup of `|f(x) - g(x)|` over `n` cosine probes of `iv`.
    pub fn sup_distance_on(&self, g: &Diffeo<T>, iv: &Interval<T>, n: usize) -> T {
        cosine_grid(iv, n)
            .par_iter()
            .map(|&x| (self.displacement(x) - g.displacement(x)).abs())
            .reduce(|| T::zero(), T::max)
    }

    pub fn sup_distance(&self, g: &Diffeo<T>, n: usize) -> T {
        self.sup_distance_on(g, &self.domain, n)
    }

    /// Sup of `|f ∘ g - g ∘ f|` on `n` probes.
    pub fn commutator_residual(&self, g: &Diffeo<T>, n: usize) -> T {
        cosine_grid(&self.domain, n)
            .par_iter()
            .map(|&x| (self.eval(g.eval(x)) - g.eval(self.eval(x))).abs())
            .reduce(|| T::zero(), T::max)
    }

    /// `‖f - id‖₂` sampled on `n` cosine probes of `iv` (plus midpoints).
    pub fn c2_distance_on(&self, iv: &Interval<T>, n: usize) -> T {
        let xs = cosine_grid(iv, n);
        let mut probes = xs.clone();
        probes.extend(xs.windows(2).map(|w| (w[0] + w[1]) / T::c(2.0)));
        probes
            .par_iter()
            .map(|&x| {
                let l = self.local(x);
                l.disp.abs().max((l.d1 - T::one()).abs()).max(l.d2.abs())
            })
            .reduce(|| T::zero(), T::max)
    }

    pub fn check_endpoints(&self, tol: T) -> Result<()> {
        let ends = [
            (self.domain.lo, self.openness != Openness::OpenLo),
            (self.domain.hi, self.openness != Openness::OpenHi),
        ];
        for (e, fixed) in ends {
            if fixed {
                let d = self.displacement(e);
                if !(d.abs() <= tol) {
                    return Err(Error::EndpointNotFixed { endpoint: e.f64(), value: (e + d).f64() });
                }
            }
        }
        Ok(())
    }

    pub fn check_monotone(&self, n: usize) -> Result<()> {
        let mut xs = uniform_grid(&self.domain, n);
        xs.extend(cosine_grid(&self.domain, n));
        for x in xs {
            let d = self.deriv(x);
            if !(d > T::zero()) {
                return Err(Error::NotMonotone { at: x.f64(), deriv: d.f64() });
            }
        }
        Ok(())
    }

    /// Reads the `x,f,df` table format.
    pub fn read_csv<R: Read>(rdr: R, openness: Openness) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(rdr);
        let headers = r.headers()?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        if cols != ["x", "f", "df"] {
            return Err(Error::Csv(format!("expected header `x,f,df`, got `{}`", cols.join(","))));
        }
        let (mut xs, mut disp, mut df) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Csv(format!("row {}: missing column {i}", line + 2)))?
                    .parse::<f64>()
                    .map_err(|e| Error::Csv(format!("row {}: {e}", line + 2)))
            };
            let (x, f, d) = (num(0)?, num(1)?, num(2)?);
            xs.push(T::c(x));
            disp.push(T::c(f - x));
            df.push(T::c(d));
        }
        if xs.len() < 3 {
            return Err(Error::Csv("need at least 3 rows".into()));
        }
        let dom = Interval::new(xs[0], xs[xs.len() - 1])?;
        Self::from_samples(dom, openness, xs, disp, df, None)
    }

    /// Writes the `x,f,df` table on this map's nodes (or `n` cosine nodes).
    pub fn write_csv<W: Write>(&self, mut w: W, n: usize) -> Result<()> {
        writeln!(w, "x,f,df")?;
        for x in self.nodes(n) {
            let l = self.local(x);
            writeln!(w, "{},{},{}", fmt17(x.f64()), fmt17((x + l.disp).f64()), fmt17(l.d1.f64()))?;
        }
        Ok(())
    }
}

/// Fixed 17-significant-digit formatting used by every text output.
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "nan".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Interval<f64> {
        Interval::unit()
    }

    fn mobius() -> Diffeo<f64> {
        Diffeo::parse("x/(x+(1-x)*exp(1))", unit(), Openness::Closed).unwrap()
    }

    #[test]
    fn parse_checks_endpoints() {
        let err = Diffeo::<f64>::parse("x/2", unit(), Openness::Closed).unwrap_err();
        assert!(matches!(err, Error::EndpointNotFixed { .. }));
        Diffeo::<f64>::parse("x/2", unit(), Openness::OpenHi).unwrap();
    }

    #[test]
    fn parse_checks_monotonicity() {
        let err = Diffeo::<f64>::parse("x + 6*x*(1-x)*(0.5-x)", unit(), Openness::Closed)
            .unwrap_err();
        assert!(matches!(err, Error::NotMonotone { .. }), "{err:?}");
    }

    #[test]
    fn identity_has_unit_derivative() {
        let id = Diffeo::<f64>::parse("x", unit(), Openness::Closed).unwrap();
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(id.deriv(x), 1.0);
            assert_eq!(id.displacement(x), 0.0);
        }
    }

    #[test]
    fn mobius_derivative_at_zero() {
        assert!((mobius().deriv(0.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn invert_mobius_matches_closed_form() {
        let f = mobius();
        let g = f.invert().unwrap();
        let exact = Diffeo::parse("x/(x+(1-x)*exp(-1))", unit(), Openness::Closed).unwrap();
        assert!(g.sup_distance(&exact, 1025) < 1e-10);
        let id = f.compose(&g).unwrap();
        for x in cosine_grid(&unit(), 4097) {
            assert!((id.eval(x) - x).abs() < 1e-12);
        }
        // derivative of the inverse
        for x in [0.1, 0.5, 0.9] {
            assert!((g.deriv(x) - exact.deriv(x)).abs() < 1e-10);
            assert!((g.jet(x).d2 - exact.jet(x).d2).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_maps_on_half_open_domain() {
        let dom = Interval::<f64>::new(0.0, 0.999).unwrap();
        let f = Diffeo::parse("x/2", dom, Openness::OpenHi).unwrap();
        let f3 = f.iterate(3).unwrap();
        assert!((f3.eval(0.8) - 0.1).abs() < 1e-16);
        assert_eq!(f3.deriv(0.3), 0.125);
        let ff = f.compose(&f).unwrap();
        assert!((ff.eval(0.6) - 0.15).abs() < 1e-16);
        let g = f.invert().unwrap();
        assert!((g.eval(0.2) - 0.4).abs() < 1e-15);
        let back = f.iterate(-1).unwrap();
        assert!((back.eval(0.3) - g.eval(0.3)).abs() < 1e-15);
    }

    #[test]
    fn iterate_zero_and_negative() {
        let f = mobius();
        assert!(f.iterate(0).unwrap().is_identity());
        let a = f.iterate(5).unwrap();
        let b = f.iterate(2).unwrap().compose(&f.iterate(3).unwrap()).unwrap();
        assert!(a.sup_distance(&b, 513) < 1e-14);
        let c = f.iterate(-2).unwrap().compose(&f.iterate(2).unwrap()).unwrap();
        assert!(c.sup_distance(&Diffeo::identity(unit()), 513) < 1e-12);
    }

    #[test]
    fn sampled_inverse_is_exact_swap() {
        let f = mobius().resample(1025).unwrap();
        let g = f.invert().unwrap();
        let s = f.as_sampled().unwrap();
        for (x, d) in s.nodes().iter().zip(s.displacements()) {
            assert!((g.eval(x + d) - x).abs() < 1e-15);
        }
    }

    #[test]
    fn sampled_matches_closed_form() {
        let f = mobius();
        let s = f.resample(4097).unwrap();
        assert!(f.sup_distance(&s, 3001) < 1e-14);
        for x in [0.013, 0.5, 0.77] {
            assert!((f.deriv(x) - s.deriv(x)).abs() < 1e-12);
            assert!((f.jet(x).d2 - s.jet(x).d2).abs() < 1e-8);
        }
    }

    #[test]
    fn csv_roundtrip() {
        let f = mobius().resample(257).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf, 257).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,f,df\n"));
        assert!(!text.contains('\r'));
        let g = Diffeo::<f64>::read_csv(&buf[..], Openness::Closed).unwrap();
        assert!(f.sup_distance(&g, 999) < 1e-15);
    }

    #[test]
    fn csv_rejects_bad_input() {
        let bad_header = "x,y,z\n0,0,1\n0.5,0.5,1\n1,1,1\n";
        assert!(Diffeo::<f64>::read_csv(bad_header.as_bytes(), Openness::Closed).is_err());
        let unsorted = "x,f,df\n0,0,1\n0.6,0.6,1\n0.5,0.5,1\n1,1,1\n";
        assert!(Diffeo::<f64>::read_csv(unsorted.as_bytes(), Openness::Closed).is_err());
        let unfixed = "x,f,df\n0,0.1,1\n0.5,0.5,1\n1,1,1\n";
        assert!(Diffeo::<f64>::read_csv(unfixed.as_bytes(), Openness::Closed).is_err());
    }

    #[test]
    fn resampled_iteration_reports_error() {
        let f = mobius();
        let (f4, err) = f.iterate_resampled(4, 4097).unwrap();
        let exact = f.iterate(4).unwrap();
        let d = f4.sup_distance(&exact, 999);
        assert!(d < 1e-10, "{d}");
        assert!((0.0..1e-9).contains(&err));
    }

    #[test]
    fn piecewise_and_blend() {
        let left = Diffeo::parse("x - 2*x*(0.5-x)*0.3", Interval::<f64>::new(0.0, 0.5).unwrap(), Openness::Closed).unwrap();
        let right = Diffeo::identity(Interval::<f64>::new(0.5, 1.0).unwrap());
        let f = Diffeo::piecewise(vec![left.clone(), right]).unwrap();
        assert_eq!(f.eval(0.75), 0.75);
        assert_eq!(f.eval(0.25), left.eval(0.25));
        let half = f.blend(0.5);
        assert!((half.displacement(0.25) - 0.5 * f.displacement(0.25)).abs() < 1e-17);
        let inv = half.invert().unwrap();
        assert!((half.eval(inv.eval(0.3)) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn single_precision_smoke() {
        let f = Diffeo::<f32>::parse("x/(x+(1-x)*exp(1))", Interval::unit(), Openness::Closed).unwrap();
        let g = f.invert().unwrap();
        assert!((f.eval(g.eval(0.4f32)) - 0.4).abs() < 1e-6);
    }
}
