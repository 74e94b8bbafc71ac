//! A small expression language over one variable `x`, with symbolic
//! differentiation.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := base ('^' number)?
//! base   := 'x' | number | '(' expr ')' | func '(' expr ')' | '-' base
//! func   := 'exp' | 'log' | 'sqrt'
//! ```
//!
//! Whitespace is ignored. Numbers are decimal literals (an exponent part such
//! as `1e-3` is accepted). Unary minus applies to a base, so `-x^2` is `(-x)^2`.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr<T> {
    X,
    Const(T),
    Neg(Box<Expr<T>>),
    Add(Box<Expr<T>>, Box<Expr<T>>),
    Sub(Box<Expr<T>>, Box<Expr<T>>),
    Mul(Box<Expr<T>>, Box<Expr<T>>),
    Div(Box<Expr<T>>, Box<Expr<T>>),
    Pow(Box<Expr<T>>, T),
    Exp(Box<Expr<T>>),
    Log(Box<Expr<T>>),
    Sqrt(Box<Expr<T>>),
}

use Expr::*;

fn b<T>(e: Expr<T>) -> Box<Expr<T>> {
    Box::new(e)
}

impl<T: Real> Expr<T> {
    pub fn parse(text: &str) -> Result<Self> {
        Parser::new(text).parse_all()
    }

    pub fn eval(&self, x: T) -> T {
        match self {
            X => x,
            Const(c) => *c,
            Neg(a) => -a.eval(x),
            Add(a, c) => a.eval(x) + c.eval(x),
            Sub(a, c) => a.eval(x) - c.eval(x),
            Mul(a, c) => a.eval(x) * c.eval(x),
            Div(a, c) => a.eval(x) / c.eval(x),
            Pow(a, n) => {
                let v = a.eval(x);
                if n.fract() == T::zero() && n.abs() < T::c(64.0) {
                    v.powi(n.to_i32().unwrap_or(0))
                } else {
                    v.powf(*n)
                }
            }
            Exp(a) => a.eval(x).exp(),
            Log(a) => a.eval(x).ln(),
            Sqrt(a) => a.eval(x).sqrt(),
        }
    }

    fn is_const(&self, v: f64) -> bool {
        matches!(self, Const(c) if *c == T::c(v))
    }

    fn add(a: Self, c: Self) -> Self {
        match (&a, &c) {
            (Const(p), Const(q)) => Const(*p + *q),
            _ if a.is_const(0.0) => c,
            _ if c.is_const(0.0) => a,
            _ => Add(b(a), b(c)),
        }
    }

    fn sub(a: Self, c: Self) -> Self {
        match (&a, &c) {
            (Const(p), Const(q)) => Const(*p - *q),
            _ if c.is_const(0.0) => a,
            _ if a.is_const(0.0) => Self::neg(c),
            _ => Sub(b(a), b(c)),
        }
    }

    fn neg(a: Self) -> Self {
        match a {
            Const(p) => Const(-p),
            Neg(inner) => *inner,
            other => Neg(b(other)),
        }
    }

    fn mul(a: Self, c: Self) -> Self {
        match (&a, &c) {
            (Const(p), Const(q)) => Const(*p * *q),
            _ if a.is_const(0.0) || c.is_const(0.0) => Const(T::zero()),
            _ if a.is_const(1.0) => c,
            _ if c.is_const(1.0) => a,
            _ => Mul(b(a), b(c)),
        }
    }

    fn div(a: Self, c: Self) -> Self {
        match (&a, &c) {
            (Const(p), Const(q)) => Const(*p / *q),
            _ if a.is_const(0.0) => Const(T::zero()),
            _ if c.is_const(1.0) => a,
            _ => Div(b(a), b(c)),
        }
    }

    fn pow(a: Self, n: T) -> Self {
        if n == T::zero() {
            Const(T::one())
        } else if n == T::one() {
            a
        } else if let Const(p) = a {
            Const(p.powf(n))
        } else {
            Pow(b(a), n)
        }
    }

    /// Symbolic derivative with respect to `x`.
    pub fn derivative(&self) -> Self {
        match self {
            X => Const(T::one()),
            Const(_) => Const(T::zero()),
            Neg(a) => Self::neg(a.derivative()),
            Add(a, c) => Self::add(a.derivative(), c.derivative()),
            Sub(a, c) => Self::sub(a.derivative(), c.derivative()),
            Mul(a, c) => Self::add(
                Self::mul(a.derivative(), (**c).clone()),
                Self::mul((**a).clone(), c.derivative()),
            ),
            Div(a, c) => {
                let da = a.derivative();
                let dc = c.derivative();
                if dc.is_const(0.0) {
                    Self::div(da, (**c).clone())
                } else {
                    Self::div(
                        Self::sub(
                            Self::mul(da, (**c).clone()),
                            Self::mul((**a).clone(), dc),
                        ),
                        Self::pow((**c).clone(), T::c(2.0)),
                    )
                }
            }
            Pow(a, n) => Self::mul(
                Self::mul(Const(*n), Self::pow((**a).clone(), *n - T::one())),
                a.derivative(),
            ),
            Exp(a) => Self::mul(Exp(a.clone()), a.derivative()),
            Log(a) => Self::div(a.derivative(), (**a).clone()),
            Sqrt(a) => Self::div(
                a.derivative(),
                Self::mul(Const(T::c(2.0)), Sqrt(a.clone())),
            ),
        }
    }

    /// Node count, used to keep an eye on derivative growth.
    pub fn size(&self) -> usize {
        match self {
            X | Const(_) => 1,
            Neg(a) | Pow(a, _) | Exp(a) | Log(a) | Sqrt(a) => 1 + a.size(),
            Add(a, c) | Sub(a, c) | Mul(a, c) | Div(a, c) => 1 + a.size() + c.size(),
        }
    }

    /// `self - x`, with the identity part cancelled symbolically when the
    /// expression has the shape `x + r` or `x - r`.
    pub fn displacement(&self) -> Self {
        match self {
            Add(a, c) if **a == X => (**c).clone(),
            Add(a, c) if **c == X => (**a).clone(),
            Sub(a, c) if **a == X => Self::neg((**c).clone()),
            _ => Self::sub(self.clone(), X),
        }
    }
}

impl<T: Real> fmt::Display for Expr<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            X => write!(f, "x"),
            Const(c) => write!(f, "{c}"),
            Neg(a) => write!(f, "-({a})"),
            Add(a, c) => write!(f, "({a} + {c})"),
            Sub(a, c) => write!(f, "({a} - {c})"),
            Mul(a, c) => write!(f, "({a} * {c})"),
            Div(a, c) => write!(f, "({a} / {c})"),
            Pow(a, n) => write!(f, "({a})^{n}"),
            Exp(a) => write!(f, "exp({a})"),
            Log(a) => write!(f, "log({a})"),
            Sqrt(a) => write!(f, "sqrt({a})"),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, bytes: src.as_bytes(), pos: 0 }
    }

    fn err<R>(&self, msg: impl Into<String>) -> Result<R> {
        self.err_at(self.pos, msg)
    }

    fn err_at<R>(&self, pos: usize, msg: impl Into<String>) -> Result<R> {
        Err(Error::Parse {
            pos: pos + 1,
            msg: msg.into(),
            text: self.src.to_string(),
            caret: format!("{}^", " ".repeat(pos)),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn parse_all<T: Real>(&mut self) -> Result<Expr<T>> {
        if self.peek().is_none() {
            return self.err("empty expression");
        }
        let e = self.expr()?;
        if self.peek().is_some() {
            return self.err("unexpected trailing input");
        }
        Ok(e)
    }

    fn expr<T: Real>(&mut self) -> Result<Expr<T>> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Add(b(lhs), b(self.term()?));
            } else if self.eat(b'-') {
                lhs = Sub(b(lhs), b(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term<T: Real>(&mut self) -> Result<Expr<T>> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat(b'*') {
                lhs = Mul(b(lhs), b(self.factor()?));
            } else if self.eat(b'/') {
                lhs = Div(b(lhs), b(self.factor()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor<T: Real>(&mut self) -> Result<Expr<T>> {
        let base = self.base()?;
        if self.eat(b'^') {
            let neg = self.eat(b'-');
            let n: T = self.number()?;
            return Ok(Pow(b(base), if neg { -n } else { n }));
        }
        Ok(base)
    }

    fn base<T: Real>(&mut self) -> Result<Expr<T>> {
        match self.peek() {
            None => self.err("unexpected end of input"),
            Some(b'-') => {
                self.pos += 1;
                Ok(Neg(b(self.base()?)))
            }
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return self.err("expected `)`");
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Const(self.number()?)),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name = &self.src[start..self.pos];
                if name == "x" {
                    return Ok(X);
                }
                let wrap: fn(Box<Expr<T>>) -> Expr<T> = match name {
                    "exp" => Exp,
                    "log" => Log,
                    "sqrt" => Sqrt,
                    _ => return self.err_at(start, format!("unknown identifier `{name}`")),
                };
                if !self.eat(b'(') {
                    return self.err(format!("expected `(` after `{name}`"));
                }
                let arg = self.expr()?;
                if !self.eat(b')') {
                    return self.err("expected `)`");
                }
                Ok(wrap(b(arg)))
            }
            Some(_) => self.err("unexpected character"),
        }
    }

    fn number<T: Real>(&mut self) -> Result<T> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.bytes;
        let mut i = self.pos;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let lit = &self.src[start..i];
        match lit.parse::<f64>() {
            Ok(v) if !lit.is_empty() => {
                self.pos = i;
                Ok(T::c(v))
            }
            _ => self.err_at(start, "expected a number"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr<f64> {
        Expr::parse(s).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(p("1 - 2 - 3").eval(0.0), -4.0);
        assert_eq!(p("8 / 4 / 2").eval(0.0), 1.0);
        assert_eq!(p("2 + 3 * x").eval(2.0), 8.0);
        assert_eq!(p("2 * x ^ 2").eval(3.0), 18.0);
        assert!((p("exp(1)").eval(0.0) - std::f64::consts::E).abs() < 1e-15);
        assert_eq!(p("-x + 1").eval(0.25), 0.75);
        assert_eq!(p("x^-1").eval(4.0), 0.25);
        assert_eq!(p("1.5e-1 * x").eval(2.0), 0.3);
        assert_eq!(p("-x^2").eval(3.0), 9.0);
    }

    #[test]
    fn errors_carry_position() {
        match Expr::<f64>::parse("x + * 2") {
            Err(Error::Parse { pos, caret, .. }) => {
                assert_eq!(pos, 5);
                assert_eq!(caret, "    ^");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(Expr::<f64>::parse("sin(x)").is_err());
        assert!(Expr::<f64>::parse("(x").is_err());
        assert!(Expr::<f64>::parse("").is_err());
        assert!(Expr::<f64>::parse("x x").is_err());
    }

    #[test]
    fn mobius_derivative_at_zero_is_inverse_e() {
        let f = p("x/(x+(1-x)*exp(1))");
        let df = f.derivative();
        assert!((df.eval(0.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_central_difference() {
        let f = p("sqrt(x + 1) * log(2 + x) / (1 + x^3) + exp(-x)");
        let df = f.derivative();
        let d2f = df.derivative();
        for &x in &[0.1, 0.4, 0.9] {
            let h = 1e-5;
            let fd = (f.eval(x + h) - f.eval(x - h)) / (2.0 * h);
            assert!((fd - df.eval(x)).abs() < 1e-9);
            let fd2 = (df.eval(x + h) - df.eval(x - h)) / (2.0 * h);
            assert!((fd2 - d2f.eval(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn displacement_cancels_identity() {
        let f = p("x + 0.1*x*(1-x)");
        assert_eq!(f.displacement(), p("0.1*x*(1-x)"));
        let g = p("x/2");
        assert_eq!(g.displacement().eval(0.5), -0.25);
    }
}
