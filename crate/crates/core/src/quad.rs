//! Adaptive Simpson quadrature.

use crate::error::{Error, Result};

/// Adaptive Simpson rule with Richardson correction.
///
/// `tol` is an absolute tolerance for the whole integral; it is split in half
/// at every bisection. Subintervals whose error estimate is within the
/// rounding floor of their own estimate are accepted as converged.
/// Refinement also stops once `max_evals` integrand calls have been spent,
/// which turns a tolerance that noise in the integrand makes unreachable
/// into an error instead of an exponential search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Simpson {
    pub tol: f64,
    pub max_depth: u32,
    pub max_evals: usize,
}

impl Default for Simpson {
    fn default() -> Self {
        Simpson {
            tol: 1e-10,
            max_depth: 60,
            max_evals: 1 << 20,
        }
    }
}

struct Budget {
    evals: usize,
    shortfall: f64,
}

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

impl Simpson {
    pub fn new(tol: f64) -> Self {
        Simpson {
            tol,
            ..Default::default()
        }
    }

    /// Integrates `f` over `[a, b]`. Reversed limits give the negated value.
    pub fn integrate<F>(&self, f: F, a: f64, b: f64) -> Result<f64>
    where
        F: Fn(f64) -> f64,
    {
        if a == b {
            return Ok(0.0);
        }
        if b < a {
            return self.integrate(f, b, a).map(|v| -v);
        }
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Domain(format!(
                "integration limits must be finite, got [{a}, {b}]"
            )));
        }
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        let mut budget = Budget {
            evals: self.max_evals.saturating_sub(3),
            shortfall: 0.0,
        };
        let value = self.recurse(
            &f,
            Panel {
                a,
                b,
                fa,
                fm,
                fb,
                whole,
            },
            self.tol,
            self.max_depth,
            &mut budget,
        );
        let shortfall = budget.shortfall;
        if !value.is_finite() {
            return Err(Error::Quadrature { bound: f64::INFINITY });
        }
        if shortfall > self.tol {
            return Err(Error::Quadrature { bound: shortfall });
        }
        Ok(value)
    }

    /// Integrates over `[a, b]`, splitting at each breakpoint strictly inside
    /// the interval (kinks of the integrand).
    pub fn integrate_split<F>(&self, f: F, a: f64, b: f64, breaks: &[f64]) -> Result<f64>
    where
        F: Fn(f64) -> f64,
    {
        if b < a {
            return self.integrate_split(f, b, a, breaks).map(|v| -v);
        }
        let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&c| c > a && c < b).collect();
        cuts.sort_by(f64::total_cmp);
        let mut lo = a;
        let mut total = 0.0;
        for c in cuts.into_iter().chain(std::iter::once(b)) {
            total += self.integrate(&f, lo, c)?;
            lo = c;
        }
        Ok(total)
    }

    fn recurse<F>(&self, f: &F, p: Panel, tol: f64, depth: u32, budget: &mut Budget) -> f64
    where
        F: Fn(f64) -> f64,
    {
        let Panel {
            a,
            b,
            fa,
            fm,
            fb,
            whole,
        } = p;
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        budget.evals = budget.evals.saturating_sub(2);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        let floor = 4.0 * f64::EPSILON * (left.abs() + right.abs());
        if delta.abs() <= 15.0 * tol.max(floor) || m <= a || m >= b {
            return left + right + delta / 15.0;
        }
        if depth == 0 || budget.evals < 2 {
            budget.shortfall += delta.abs() / 15.0;
            return left + right + delta / 15.0;
        }
        self.recurse(
            f,
            Panel {
                a,
                b: m,
                fa,
                fm: flm,
                fb: fm,
                whole: left,
            },
            0.5 * tol,
            depth - 1,
            budget,
        ) + self.recurse(
            f,
            Panel {
                a: m,
                b,
                fa: fm,
                fm: frm,
                fb,
                whole: right,
            },
            0.5 * tol,
            depth - 1,
            budget,
        )
    }
}
