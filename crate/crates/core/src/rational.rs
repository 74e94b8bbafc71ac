//! Continued fractions and Bezout pairs for rotation-like times.

use num_integer::Integer;
use num_rational::Ratio;

/// Convergents `p/q` of `x` with `1 <= q <= q_max`, in order.
///
/// Signs are carried by the numerator. Stops early once a convergent is
/// exact to within `1e-15 |x|`.
pub fn convergents(x: f64, q_max: i64) -> Vec<Ratio<i64>> {
    let mut out = Vec::new();
    if !x.is_finite() || q_max < 1 {
        return out;
    }
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 9e15 {
            break;
        }
        let a = a as i64;
        let (Some(h), Some(k)) = (a.checked_mul(h1).and_then(|v| v.checked_add(h0)), a.checked_mul(k1).and_then(|v| v.checked_add(k0))) else {
            break;
        };
        if k > q_max {
            break;
        }
        out.push(Ratio::new(h, k));
        (h0, h1, k0, k1) = (h1, h, k1, k);
        let frac = r - a as f64;
        if frac.abs() <= 1e-15 * x.abs().max(1.0) || (h as f64 / k as f64 - x).abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
        r = 1.0 / frac;
    }
    out
}

/// Convergents of `x` within `eps` of `x`.
pub fn rational_candidates(x: f64, q_max: i64, eps: f64) -> Vec<Ratio<i64>> {
    convergents(x, q_max)
        .into_iter()
        .filter(|c| (*c.numer() as f64 / *c.denom() as f64 - x).abs() < eps)
        .collect()
}

/// `(r, s)` with `p r + q s = 1`, minimising `|r| + |s|`; ties prefer
/// `s = 0`, then smaller `|s|`.
///
/// Requires `gcd(p, q) = 1` and `(p, q) != (0, 0)`.
pub fn bezout_pair(p: i64, q: i64) -> Option<(i64, i64)> {
    if p.gcd(&q) != 1 {
        return None;
    }
    let e = p.extended_gcd(&q);
    let (mut r0, mut s0) = (e.x, e.y);
    if e.gcd < 0 {
        r0 = -r0;
        s0 = -s0;
    }
    debug_assert_eq!(p * r0 + q * s0, 1);
    // general solution r = r0 + k q, s = s0 - k p
    let key = |r: i64, s: i64| (r.abs() + s.abs(), s != 0, s.abs(), r);
    let mut best = (r0, s0);
    let span = if p == 0 || q == 0 {
        0
    } else {
        (r0.abs() / q.abs().max(1)).max(s0.abs() / p.abs().max(1)) + 2
    };
    for k in -span..=span {
        let (r, s) = (r0 + k * q, s0 - k * p);
        if key(r, s) < key(best.0, best.1) {
            best = (r, s);
        }
    }
    Some(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn convergents_of_known_values() {
        let c = convergents(std::f64::consts::PI, 1000);
        let v: Vec<(i64, i64)> = c.iter().map(|r| (*r.numer(), *r.denom())).collect();
        assert_eq!(v, vec![(3, 1), (22, 7), (333, 106), (355, 113)]);
        assert_eq!(convergents(1.5, 64), vec![Ratio::new(1, 1), Ratio::new(3, 2)]);
        assert_eq!(*convergents(-1.5, 64).last().unwrap(), Ratio::new(-3, 2));
        assert_eq!(convergents(2.0, 64), vec![Ratio::from_integer(2)]);
    }

    #[test]
    fn sqrt2_has_no_small_candidate() {
        assert!(rational_candidates(2f64.sqrt(), 64, 1e-9).is_empty());
        assert_eq!(rational_candidates(1.5 + 1e-12, 64, 1e-9), vec![Ratio::new(3, 2)]);
    }

    #[test]
    fn bezout_examples() {
        assert_eq!(bezout_pair(3, 2), Some((1, -1)));
        assert_eq!(bezout_pair(1, 0), Some((1, 0)));
        assert_eq!(bezout_pair(0, 1), Some((0, 1)));
        assert_eq!(bezout_pair(1, 1), Some((1, 0)));
        assert_eq!(bezout_pair(2, 4), None);
        let (r, s) = bezout_pair(-3, 2).unwrap();
        assert_eq!(-3 * r + 2 * s, 1);
    }

    proptest! {
        #[test]
        fn bezout_identity_and_minimality(p in -200i64..200, q in 1i64..200) {
            prop_assume!(p.gcd(&q) == 1);
            let (r, s) = bezout_pair(p, q).unwrap();
            prop_assert_eq!(p * r + q * s, 1);
            for k in -50i64..=50 {
                let (r2, s2) = (r + k * q, s - k * p);
                prop_assert!(r.abs() + s.abs() <= r2.abs() + s2.abs());
            }
        }

        #[test]
        fn convergents_recover_exact_ratios(p in -500i64..500, q in 1i64..64) {
            let exact = Ratio::new(p, q);
            let x = p as f64 / q as f64;
            let c = convergents(x, 64);
            prop_assert_eq!(*c.last().unwrap(), exact);
            // convergents alternate around x and improve
            for w in c.windows(2) {
                let e0 = (*w[0].numer() as f64 / *w[0].denom() as f64 - x).abs();
                let e1 = (*w[1].numer() as f64 / *w[1].denom() as f64 - x).abs();
                prop_assert!(e1 <= e0);
            }
        }
    }
}
