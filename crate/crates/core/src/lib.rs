//! Szekeres vector fields, C¹ centralizers and homotopies of commuting
//! diffeomorphisms of the interval.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`, which is what every tolerance
//! default is calibrated for.

// `!(a <= b)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod config;
pub mod diffeo;
pub mod error;
pub mod expr;
pub mod field;
pub mod flow;
pub mod hermite;
pub mod homotopy;
pub mod interval;
pub mod quadrature;
pub mod rational;
pub mod samples;
pub mod scalar;
pub mod structure;
pub mod szekeres;

pub use config::Tolerances;
pub use error::{Error, Result};
pub use interval::Openness;
pub use scalar::{Jet, Real};

pub type Interval = interval::Interval<f64>;
pub type Diffeo = diffeo::Diffeo<f64>;
pub type Expr = expr::Expr<f64>;
pub type VectorField = field::VectorField<f64>;
