//! Bracketed root finding for monotone scalar functions.
//!
//! Every root the solvers need sits on an interval where the target function
//! is strictly monotone, so a sign-changing bracket is always available.
//! [`brent`] keeps that bracket at every step; the bracket search helpers
//! produce one by stepping away from a point with known sign.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootTol {
    /// Absolute tolerance on the abscissa.
    pub x: f64,
    /// Stop early once `|f| <= f`; zero disables the check.
    pub f: f64,
    pub max_iter: usize,
}

impl Default for RootTol {
    fn default() -> Self {
        RootTol {
            x: 1e-12,
            f: 0.0,
            max_iter: 200,
        }
    }
}

/// A point together with the function value there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub x: f64,
    pub fx: f64,
}

impl Probe {
    pub fn new(x: f64, fx: f64) -> Self {
        Probe { x, fx }
    }
}

fn opposite(a: f64, b: f64) -> bool {
    (a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0)
}

/// Brent's method on a sign-changing bracket `[lo, hi]` with known values.
pub fn brent<F>(mut f: F, lo: Probe, hi: Probe, tol: RootTol) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut fa) = (lo.x, lo.fx);
    let (mut b, mut fb) = (hi.x, hi.fx);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !opposite(fa, fb) {
        return Err(Error::Root(format!(
            "no sign change on [{a}, {b}] (f = {fa:.3e}, {fb:.3e})"
        )));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..tol.max_iter {
        if !opposite(fb, fc) {
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
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol.x;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 || fb.abs() <= tol.f {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b)?;
        if !fb.is_finite() {
            return Err(Error::Root(format!("non-finite function value at {b}")));
        }
    }
    Err(Error::Root(format!(
        "no convergence after {} iterations (bracket [{b}, {c}])",
        tol.max_iter
    )))
}

/// Plain bisection; slower than [`brent`] but immune to interpolation quirks.
pub fn bisect<F>(mut f: F, lo: Probe, hi: Probe, tol: RootTol) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut fa) = (lo.x, lo.fx);
    let mut b = hi.x;
    if fa == 0.0 {
        return Ok(a);
    }
    if hi.fx == 0.0 {
        return Ok(b);
    }
    if !opposite(fa, hi.fx) {
        return Err(Error::Root(format!("no sign change on [{a}, {b}]")));
    }
    for _ in 0..tol.max_iter {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= tol.x || m == a || m == b {
            return Ok(m);
        }
        let fm = f(m)?;
        if fm == 0.0 || fm.abs() <= tol.f {
            return Ok(m);
        }
        if opposite(fa, fm) {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    Ok(0.5 * (a + b))
}

/// Steps from `start` by `step * 2^j` (sign of `step` gives the direction)
/// until `f` changes sign relative to `start.fx`. Returns the last same-sign
/// probe and the first opposite-sign probe.
pub fn expand<F>(mut f: F, start: Probe, step: f64, max_expansions: usize) -> Result<(Probe, Probe)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut inner = start;
    let mut offset = step;
    for _ in 0..max_expansions {
        let x = start.x + offset;
        let fx = f(x)?;
        if !fx.is_finite() {
            break;
        }
        if fx == 0.0 || opposite(start.fx, fx) {
            return Ok((inner, Probe::new(x, fx)));
        }
        inner = Probe::new(x, fx);
        offset *= 2.0;
    }
    Err(Error::Root(format!(
        "bracket expansion from {} by {step} exhausted {max_expansions} doublings",
        start.x
    )))
}
