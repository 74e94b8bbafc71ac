//! One-dimensional vector fields, identified with the scalar `dx(ν)`.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::diffeo::{fmt17, Diffeo};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::hermite::cubic;
use crate::interval::{cosine_grid, locate, Interval, Openness};
use crate::scalar::Real;

pub type PointFn<T> = Arc<dyn Fn(T) -> (T, T) + Send + Sync>;

enum FieldRepr<T> {
    Sampled { xs: Vec<T>, v: Vec<T>, dv: Vec<T> },
    Closed { expr: Expr<T>, d: Expr<T>, source: String },
    Pointwise(PointFn<T>),
    Zero,
}

/// A C¹ vector field on `domain`, vanishing at its (closed) endpoints.
#[derive(Clone)]
pub struct VectorField<T> {
    domain: Interval<T>,
    openness: Openness,
    repr: Arc<FieldRepr<T>>,
    zeros: Vec<T>,
    /// Free-form regularity note carried into reports.
    pub note: String,
}

impl<T: Real> std::fmt::Debug for VectorField<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VectorField")
            .field("domain", &self.domain)
            .field("openness", &self.openness)
            .field("repr", &self.describe())
            .field("zeros", &self.zeros)
            .finish()
    }
}

impl<T: Real> VectorField<T> {
    fn wrap(domain: Interval<T>, openness: Openness, repr: FieldRepr<T>) -> Self {
        Self { domain, openness, repr: Arc::new(repr), zeros: Vec::new(), note: String::new() }
    }

    pub fn zero(domain: Interval<T>) -> Self {
        Self::wrap(domain, Openness::Closed, FieldRepr::Zero)
    }

    /// Closed-form field from the expression language.
    pub fn parse(text: &str, domain: Interval<T>) -> Result<Self> {
        let expr = Expr::parse(text)?;
        let d = expr.derivative();
        Ok(Self::wrap(domain, Openness::Closed, FieldRepr::Closed { expr, d, source: text.trim().into() }))
    }

    pub fn from_samples(domain: Interval<T>, openness: Openness, xs: Vec<T>, v: Vec<T>, dv: Vec<T>) -> Result<Self> {
        let n = xs.len();
        if n < 3 || v.len() != n || dv.len() != n {
            return Err(Error::Csv(format!("field table needs >= 3 aligned nodes, got {n}")));
        }
        if let Some(w) = xs.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::NotMonotone { at: w[1].f64(), deriv: f64::NAN });
        }
        Ok(Self::wrap(domain, openness, FieldRepr::Sampled { xs, v, dv }))
    }

    /// Field evaluated by a closure returning `(ν(x), Dν(x))`.
    pub fn pointwise(domain: Interval<T>, openness: Openness, f: PointFn<T>) -> Self {
        Self::wrap(domain, openness, FieldRepr::Pointwise(f))
    }

    pub fn with_zeros(mut self, zeros: Vec<T>) -> Self {
        self.zeros = zeros;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn domain(&self) -> Interval<T> {
        self.domain
    }

    pub fn openness(&self) -> Openness {
        self.openness
    }

    /// Interior zeros (only fields glued across fixed points have any).
    pub fn interior_zeros(&self) -> &[T] {
        &self.zeros
    }

    pub fn is_sampled(&self) -> bool {
        matches!(*self.repr, FieldRepr::Sampled { .. })
    }

    /// Interpolation nodes strictly between `a` and `b`, in the direction
    /// from `a` to `b`; empty unless the field is sampled.
    pub fn breakpoints(&self, a: T, b: T) -> Vec<T> {
        let FieldRepr::Sampled { xs, .. } = &*self.repr else {
            return Vec::new();
        };
        let (lo, hi) = (a.min(b), a.max(b));
        let mut out: Vec<T> = xs.iter().copied().filter(|&x| x > lo && x < hi).collect();
        if a > b {
            out.reverse();
        }
        out
    }

    pub fn describe(&self) -> String {
        match &*self.repr {
            FieldRepr::Sampled { xs, .. } => format!("sampled[{} nodes]", xs.len()),
            FieldRepr::Closed { source, .. } => source.clone(),
            FieldRepr::Pointwise(_) => "pointwise".into(),
            FieldRepr::Zero => "0".into(),
        }
    }

    /// `(ν(x), Dν(x))`.
    pub fn eval(&self, x: T) -> (T, T) {
        match &*self.repr {
            FieldRepr::Sampled { xs, v, dv } => {
                let i = locate(xs, x);
                let (a, d, _) = cubic(xs[i], xs[i + 1], v[i], v[i + 1], dv[i], dv[i + 1], x);
                (a, d)
            }
            FieldRepr::Closed { expr, d, .. } => (expr.eval(x), d.eval(x)),
            FieldRepr::Pointwise(f) => f(x),
            FieldRepr::Zero => (T::zero(), T::zero()),
        }
    }

    pub fn value(&self, x: T) -> T {
        self.eval(x).0
    }

    pub fn nodes(&self, n: usize) -> Vec<T> {
        match &*self.repr {
            FieldRepr::Sampled { xs, .. } => xs.clone(),
            _ => cosine_grid(&self.domain, n),
        }
    }

    /// Tabulated copy on this field's nodes (or `n` cosine nodes).
    pub fn tabulate(&self, n: usize) -> Result<Self> {
        if self.is_sampled() {
            return Ok(self.clone());
        }
        let xs = self.nodes(n);
        let vals: Vec<(T, T)> = xs.par_iter().map(|&x| self.eval(x)).collect();
        let mut out = Self::from_samples(
            self.domain,
            self.openness,
            xs,
            vals.iter().map(|p| p.0).collect(),
            vals.iter().map(|p| p.1).collect(),
        )?;
        out.zeros = self.zeros.clone();
        out.note = self.note.clone();
        Ok(out)
    }

    /// `c ν`.
    pub fn scaled(&self, c: T) -> Self {
        let inner = self.clone();
        let mut out = Self::pointwise(
            self.domain,
            self.openness,
            Arc::new(move |x| {
                let (v, d) = inner.eval(x);
                (c * v, c * d)
            }),
        );
        out.zeros = self.zeros.clone();
        out.note = self.note.clone();
        if let FieldRepr::Sampled { xs, v, dv } = &*self.repr {
            out.repr = Arc::new(FieldRepr::Sampled {
                xs: xs.clone(),
                v: v.iter().map(|a| c * *a).collect(),
                dv: dv.iter().map(|a| c * *a).collect(),
            });
        }
        out
    }

    /// Whether `ν` vanishes at the lower / upper end of the domain.
    pub fn vanishes_at_ends(&self) -> (bool, bool) {
        (self.openness != Openness::OpenLo, self.openness != Openness::OpenHi)
    }

    /// Zeros of `ν` (endpoints that vanish and interior zeros) bracketing `x`.
    pub fn zero_bracket(&self, x: T) -> (T, T) {
        let mut lo = self.domain.lo;
        let mut hi = self.domain.hi;
        for &z in &self.zeros {
            if z <= x && z > lo {
                lo = z;
            }
            if z >= x && z < hi {
                hi = z;
            }
        }
        (lo, hi)
    }

    /// Sign of `ν` on the interior, sampled on `n` nodes: `Some(±1)` when it
    /// is constant, `None` when it changes sign or vanishes.
    pub fn interior_sign(&self, n: usize) -> Option<T> {
        let xs = cosine_grid(&self.domain, n);
        let mut sign = T::zero();
        for &x in &xs[1..n - 1] {
            let v = self.value(x);
            if v == T::zero() {
                return None;
            }
            let s = v.signum();
            if sign == T::zero() {
                sign = s;
            } else if s != sign {
                return None;
            }
        }
        Some(sign)
    }

    /// Pullback `f*ν = (ν ∘ f) / Df`, tabulated on this field's nodes.
    pub fn pullback(&self, f: &Diffeo<T>, n: usize) -> Result<Self> {
        let tol = T::floor_tol(1e-12, 16.0);
        if !f.domain().same_as(&self.domain, tol) {
            return Err(Error::DomainMismatch {
                a_lo: f.domain().lo.f64(),
                a_hi: f.domain().hi.f64(),
                b_lo: self.domain.lo.f64(),
                b_hi: self.domain.hi.f64(),
            });
        }
        let xs = self.nodes(n);
        let vals: Vec<(T, T)> = xs
            .par_iter()
            .map(|&x| {
                let j = f.jet(x);
                let (v, dv) = self.eval(j.value);
                let p = v / j.d1;
                (p, dv - j.d2 / j.d1 * p)
            })
            .collect();
        Self::from_samples(
            self.domain,
            self.openness,
            xs,
            vals.iter().map(|p| p.0).collect(),
            vals.iter().map(|p| p.1).collect(),
        )
    }

    /// Concatenates fields on abutting intervals. The shared endpoints
    /// become interior zeros; node tables are merged when all parts are
    /// tabulated.
    pub fn concat(parts: &[VectorField<T>]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Config("empty field list".into()));
        }
        if parts.len() == 1 {
            return Ok(parts[0].clone());
        }
        let dom = Interval::new(parts[0].domain.lo, parts[parts.len() - 1].domain.hi)?;
        let mut zeros = Vec::new();
        for (k, p) in parts.iter().enumerate() {
            if k > 0 {
                zeros.push(p.domain.lo);
            }
            zeros.extend(p.zeros.iter().copied());
        }
        let mut xs = Vec::new();
        let mut v = Vec::new();
        let mut dv = Vec::new();
        for (k, p) in parts.iter().enumerate() {
            let t = p.tabulate(4097)?;
            if let FieldRepr::Sampled { xs: px, v: pv, dv: pd } = &*t.repr {
                let skip = if k == 0 { 0 } else { 1 };
                if k > 0 {
                    // shared node: value zero, derivative averaged from both sides
                    let last = dv.len() - 1;
                    dv[last] = (dv[last] + pd[0]) / T::c(2.0);
                    let lv = v.len() - 1;
                    v[lv] = T::zero();
                }
                xs.extend_from_slice(&px[skip..]);
                v.extend_from_slice(&pv[skip..]);
                dv.extend_from_slice(&pd[skip..]);
            }
        }
        let mut out = Self::from_samples(dom, Openness::Closed, xs, v, dv)?;
        out.zeros = zeros;
        Ok(out)
    }

    /// Writes `x,nu,dnu` on this field's nodes (or `n` cosine nodes).
    pub fn write_csv<W: Write>(&self, mut w: W, n: usize) -> Result<()> {
        writeln!(w, "x,nu,dnu")?;
        for x in self.nodes(n) {
            let (v, d) = self.eval(x);
            writeln!(w, "{},{},{}", fmt17(x.f64()), fmt17(v.f64()), fmt17(d.f64()))?;
        }
        Ok(())
    }
}
