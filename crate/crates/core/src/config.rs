//! Numerical policy: grid size, iteration caps and every tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every knob of the pipeline. Defaults are the documented policy values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Nodes per component grid; must be `2^k + 1` and at least 257.
    pub grid: usize,
    /// C¹ increment / tail tolerance of the pullback iteration.
    pub eps_conv: f64,
    /// Per-point cap on pullback iterations.
    pub iter_cap: usize,
    /// Relative width of the excluded collar `[a, a + rho]`, `[b - rho, b]`.
    pub rho: f64,
    /// Relative truncation of a half-open end.
    pub eps_edge: f64,
    pub eps_comm: f64,
    pub eps_tau: f64,
    pub eps_flat: f64,
    pub eps_rat: f64,
    pub q_max: u32,
    pub eps_comp: f64,
    pub eps_glue: f64,
    /// Displacements at or below this are treated as fixed.
    pub detect_floor: f64,
    /// Inversion residual, relative to domain length.
    pub eps_inv: f64,
    /// Relative tolerance of the time-coordinate quadrature.
    pub eps_quad: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            grid: 4097,
            eps_conv: 1e-10,
            iter_cap: 100_000,
            rho: 1e-3,
            eps_edge: 1.0 / (1u64 << 20) as f64,
            eps_comm: 1e-7,
            eps_tau: 1e-7,
            eps_flat: 1e-8,
            eps_rat: 1e-9,
            q_max: 64,
            eps_comp: 1e-7,
            eps_glue: 1e-5,
            detect_floor: 1e-14,
            eps_inv: 1e-12,
            eps_quad: 1e-13,
        }
    }
}

impl Tolerances {
    pub fn with_grid(mut self, n: usize) -> Self {
        self.grid = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid;
        if n < 257 || !(n - 1).is_power_of_two() {
            return Err(Error::Config(format!("grid must be 2^k + 1 and >= 257, got {n}")));
        }
        if self.iter_cap == 0 || self.q_max == 0 {
            return Err(Error::Config("iter_cap and q_max must be positive".into()));
        }
        let pos = [
            ("eps_conv", self.eps_conv),
            ("rho", self.rho),
            ("eps_edge", self.eps_edge),
            ("eps_comm", self.eps_comm),
            ("eps_tau", self.eps_tau),
            ("eps_flat", self.eps_flat),
            ("eps_rat", self.eps_rat),
            ("eps_comp", self.eps_comp),
            ("eps_glue", self.eps_glue),
            ("detect_floor", self.detect_floor),
            ("eps_inv", self.eps_inv),
            ("eps_quad", self.eps_quad),
        ];
        for (k, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{k} must be positive, got {v}")));
            }
        }
        if self.rho >= 0.5 || self.eps_edge >= 0.5 {
            return Err(Error::Config("rho and eps_edge must be below 1/2".into()));
        }
        Ok(())
    }

    /// Sets one knob by name, as used by `key=value` config files.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |e: String| Error::Config(format!("{key}={value}: {e}"));
        let f = || value.trim().parse::<f64>().map_err(|e| bad(e.to_string()));
        let u = || value.trim().parse::<usize>().map_err(|e| bad(e.to_string()));
        match key.trim() {
            "grid" => self.grid = u()?,
            "eps_conv" => self.eps_conv = f()?,
            "iter_cap" => self.iter_cap = u()?,
            "rho" => self.rho = f()?,
            "eps_edge" => self.eps_edge = f()?,
            "eps_comm" => self.eps_comm = f()?,
            "eps_tau" => self.eps_tau = f()?,
            "eps_flat" => self.eps_flat = f()?,
            "eps_rat" => self.eps_rat = f()?,
            "q_max" => self.q_max = u()? as u32,
            "eps_comp" => self.eps_comp = f()?,
            "eps_glue" => self.eps_glue = f()?,
            "detect_floor" => self.detect_floor = f()?,
            "eps_inv" => self.eps_inv = f()?,
            "eps_quad" => self.eps_quad = f()?,
            other => return Err(Error::Config(format!("unknown tolerance key `{other}`"))),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Tolerances::default().validate().unwrap();
    }

    #[test]
    fn grid_must_be_dyadic_plus_one() {
        assert!(Tolerances::default().with_grid(1000).validate().is_err());
        assert!(Tolerances::default().with_grid(129).validate().is_err());
        Tolerances::default().with_grid(257).validate().unwrap();
    }

    #[test]
    fn set_by_name() {
        let mut t = Tolerances::default();
        t.set("eps_rat", "1e-6").unwrap();
        t.set("q_max", "12").unwrap();
        assert_eq!(t.eps_rat, 1e-6);
        assert_eq!(t.q_max, 12);
        assert!(t.set("nope", "1").is_err());
        assert!(t.set("eps_comp", "abc").is_err());
    }
}
