//! Impulse control with the inventory constrained to stay nonnegative.
//!
//! The cascade is the backlog one run on `[0, ∞)`: the curve minimizer is
//! pinned at zero once the shape passes the clamp threshold, admissible
//! shapes are unbounded above, and the lower trigger may sit on the
//! boundary. There the pasting condition `g(d) = -k` relaxes to
//! `g(0) = -k - α` with a multiplier `α >= 0` and `α d = 0`.

use crate::error::{Error, Result};
use crate::gcurve::{ExtremaPair, GCurve, SolverOptions};
use crate::impulse::{ImpulseSolver, Solution};
use crate::model::{Mode, ProblemSpec};
use crate::roots::{self, Probe, RootTol};

/// Root of `g = -k` on `(0, x1)`, or zero when the curve at the boundary is
/// already at or below `-k` (including the clamped-minimizer regime).
pub fn lower_trigger(g: &GCurve<'_>, extrema: ExtremaPair, k: f64, tol: RootTol) -> Result<f64> {
    if extrema.trough_clamped || extrema.trough <= 0.0 {
        return Ok(0.0);
    }
    let at_zero = g.value(0.0)? + k;
    if at_zero <= 0.0 {
        return Ok(0.0);
    }
    let f = |x: f64| g.value(x).map(|v| v + k);
    let trough = Probe::new(extrema.trough, f(extrema.trough)?);
    roots::brent(f, Probe::new(0.0, at_zero), trough, tol)
}

/// The multiplier `α = max(0, -(k + g(0)))` when the trigger is on the
/// boundary, exactly zero otherwise.
pub fn multiplier(g: &GCurve<'_>, lower_trigger: f64, k: f64) -> Result<f64> {
    if lower_trigger > 0.0 {
        return Ok(0.0);
    }
    Ok((-(k + g.value(0.0)?)).max(0.0))
}

pub fn solve_nonneg(spec: &ProblemSpec, opts: SolverOptions) -> Result<Solution> {
    if spec.mode != Mode::NonNegImpulse {
        return Err(Error::InvalidParameter(format!(
            "nonnegative solver called on a {} problem",
            spec.mode
        )));
    }
    spec.ensure_valid()?;
    ImpulseSolver::new(spec, opts)?.solve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impulse::solve_impulse;
    use crate::model::HoldingCost;

    fn spec(a: f64, mode: Mode) -> ProblemSpec {
        ProblemSpec {
            mu: 1.0,
            sigma2: 2.0,
            up_fixed: 1.0,
            up_unit: 0.5,
            down_fixed: 1.0,
            down_unit: 0.5,
            holding: HoldingCost::linear(1.0, 1.0, a).unwrap(),
            mode,
        }
    }

    #[test]
    fn boundary_trigger_with_multiplier() {
        let sol = solve_nonneg(&spec(0.0, Mode::NonNegImpulse), SolverOptions::default()).unwrap();
        let b = sol.policy;
        assert_eq!(b.lower_trigger, 0.0);
        assert!(b.alpha > 0.0);
        assert_eq!(b.alpha * b.lower_trigger, 0.0);
        assert!(b.validate().is_ok());
        assert!(sol.max_residual() < 1e-6, "{:?}", sol.residuals);
    }

    #[test]
    fn slack_constraint_matches_backlog() {
        let nn = solve_nonneg(&spec(5.0, Mode::NonNegImpulse), SolverOptions::default()).unwrap();
        let bl = solve_impulse(&spec(5.0, Mode::Impulse), SolverOptions::default()).unwrap();
        assert_eq!(nn.policy.alpha, 0.0);
        let (x, y) = (nn.policy.thresholds(), bl.policy.thresholds());
        for i in 0..4 {
            assert!((x[i] - y[i]).abs() < 1e-6, "{x:?} vs {y:?}");
        }
        assert!((nn.gamma - bl.gamma).abs() < 1e-6);
    }

    #[test]
    fn amplitude_unbounded_past_clamp() {
        let s = spec(1.0, Mode::NonNegImpulse);
        let solver = ImpulseSolver::new(&s, SolverOptions::default()).unwrap();
        let mut prev = 0.0;
        for b in [0.1, 0.4, 0.7, 1.5, 4.0, 10.0] {
            let v = solver.amplitude(b).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!(prev > 5.0);
    }

    #[test]
    fn rejects_wrong_mode_and_negative_minimizer() {
        assert!(solve_nonneg(&spec(0.0, Mode::Impulse), SolverOptions::default()).is_err());
        assert!(matches!(
            solve_nonneg(&spec(-1.0, Mode::NonNegImpulse), SolverOptions::default()),
            Err(Error::Validation(_))
        ));
    }
}
