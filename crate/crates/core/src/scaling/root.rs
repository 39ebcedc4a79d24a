//! Bracketing root finder: bisection with inverse-quadratic and secant
//! steps (Brent-Dekker). The returned bracket always straddles the root.

use crate::error::{Error, Result};

pub const MAX_ITER: usize = 200;
pub const REL_WIDTH: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    /// Final bracket, `lo <= x <= hi`.
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
}

impl Root {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Finds `x` in `[a, b]` with `f(x) = 0`, given `f(a)` and `f(b)` of opposite sign.
pub fn brent<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<Root> {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if !(fa.is_finite() && fb.is_finite()) {
        return Err(Error::Solver("non-finite function value at bracket end".into()));
    }
    if fa == 0.0 {
        return Ok(Root { x: a, fx: 0.0, lo: a, hi: a, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, fx: 0.0, lo: b, hi: b, iterations: 0 });
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Solver(format!("[{a}, {b}] does not bracket a root")));
    }
    // b is the best estimate, c the opposite bracket end.
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for iter in 1..=MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 0.5 * REL_WIDTH * b.abs().max(f64::MIN_POSITIVE);
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            let (lo, hi) = if b < c { (b, c) } else { (c, b) };
            let (lo, hi) = if fb == 0.0 { (b, b) } else { (lo, hi) };
            return Ok(Root { x: b, fx: fb, lo, hi, iterations: iter });
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(Error::Solver(format!("non-finite function value at {b}")));
        }
    }
    Err(Error::Solver(format!("no convergence in {MAX_ITER} iterations")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_simple_roots() {
        let r = brent(|x| x * x - 2.0, 0.0, 2.0).unwrap();
        assert!((r.x - 2f64.sqrt()).abs() < 1e-12);
        assert!(r.lo <= r.x && r.x <= r.hi);
        assert!(r.width() <= REL_WIDTH * r.x.abs());
        let r = brent(|x| (-x).exp() - 0.5, 0.0, 10.0).unwrap();
        assert!((r.x - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_bracket() {
        assert!(brent(|x| x * x + 1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn bracket_straddles_root() {
        let f = |x: f64| x.powi(3) - 0.3;
        let r = brent(f, 0.0, 1.0).unwrap();
        assert!(f(r.lo) <= 0.0 && f(r.hi) >= 0.0);
        assert!(r.iterations <= MAX_ITER);
    }
}
