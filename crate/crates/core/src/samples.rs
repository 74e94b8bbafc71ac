//! Reference pairs with known structure, for tests and demos.

use crate::config::Tolerances;
use crate::diffeo::Diffeo;
use crate::error::Result;
use crate::field::VectorField;
use crate::flow::FieldFlow;
use crate::interval::{Interval, Openness};
use crate::scalar::Real;

/// Time-`t` map of `ν(x) = -x(1-x)`: `x / (x + (1-x) e^t)`.
pub fn logistic<T: Real>(t: f64) -> Diffeo<T> {
    Diffeo::parse(&format!("x/(x+(1-x)*exp({t:e}))"), Interval::unit(), Openness::Closed).expect("valid closed form")
}

/// `ν(x) = x(1/2 - x)(1 - x)`, zeros at 0, 1/2, 1.
pub fn cubic_field<T: Real>() -> VectorField<T> {
    VectorField::parse("x*(0.5-x)*(1-x)", Interval::unit())
        .expect("valid field")
        .with_zeros(vec![T::c(0.5)])
}

/// Time-`s` and time-`t` maps of a field, tabulated.
pub fn flow_pair<T: Real>(nu: &VectorField<T>, s: T, t: T, tol: &Tolerances) -> Result<(Diffeo<T>, Diffeo<T>)> {
    let flow = FieldFlow::new(nu.clone(), tol.eps_quad);
    Ok((flow.tabulate(s, tol.grid)?, flow.tabulate(t, tol.grid)?))
}

pub const MIXED_FIELD: &str = "8*x*(x-0.5)^3*(1-x)";

/// Two components glued at a flat common fixed point `1/2`:
/// times `(2, 3)` of `ν = 8 x (x-1/2)³ (1-x)` on `[0, 1/2]` (rational,
/// `f³ = g²`) and times `(1, √2)` on `[1/2, 1]` (irrational).
pub fn mixed_pair<T: Real>(tol: &Tolerances) -> Result<(Diffeo<T>, Diffeo<T>)> {
    let half = T::c(0.5);
    let left = VectorField::parse(MIXED_FIELD, Interval { lo: T::zero(), hi: half })?;
    let right = VectorField::parse(MIXED_FIELD, Interval { lo: half, hi: T::one() })?;
    let (fl, gl) = flow_pair(&left, T::c(2.0), T::c(3.0), tol)?;
    let (fr, gr) = flow_pair(&right, T::one(), T::c(2f64.sqrt()), tol)?;
    Ok((Diffeo::piecewise(vec![fl, fr])?, Diffeo::piecewise(vec![gl, gr])?))
}
