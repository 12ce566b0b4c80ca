//! Two-barrier solver for zero fixed costs.
//!
//! Without fixed costs the band degenerates to reflecting barriers
//! `d* = x1(B₁)` and `u* = x2(B₁)`, where `B₁` is the shape whose curve has
//! peak-to-trough amplitude `k + ℓ`. The level is pinned by `g(u*) = ℓ` and
//! must agree with the one pinned by `g(d*) = -k`.

use std::collections::BTreeMap;

use crate::error::{Error, Result, StageExt};
use crate::gcurve::SolverOptions;
use crate::impulse::{BandPolicy, ImpulseSolver, ShapeDeficits, Solution};
use crate::model::{Mode, ProblemSpec};

/// Largest accepted disagreement between the two level formulas before the
/// shape root is refined.
const LEVEL_AGREEMENT: f64 = 1e-8;

pub fn solve_singular(spec: &ProblemSpec, opts: SolverOptions) -> Result<Solution> {
    if spec.mode != Mode::Singular {
        return Err(Error::InvalidParameter(format!(
            "singular solver called on a {} problem",
            spec.mode
        )));
    }
    spec.ensure_valid()?;
    if spec.mu < 0.0 {
        let mirrored = spec.reflect();
        return Ok(solve_oriented(&mirrored, opts)?.mirrored());
    }
    solve_oriented(spec, opts)
}

fn solve_oriented(spec: &ProblemSpec, opts: SolverOptions) -> Result<Solution> {
    let mut solver = ImpulseSolver::new(spec, opts)?;
    let mut shape = solver.solve_shape_gap().stage("shape gap")?;
    let mut state = solver.state(shape).stage("shape gap")?;
    if (state.level_upper - state.level_lower).abs() > LEVEL_AGREEMENT {
        let fine = SolverOptions {
            tol_root: 0.0,
            tol_quad: opts.tol_quad.min(1e-13),
            ..opts
        };
        solver = ImpulseSolver::new(spec, fine)?;
        shape = solver.solve_shape_gap().stage("shape gap")?;
        state = solver.state(shape).stage("shape gap")?;
    }
    let level = state.level_lower;
    let (d, u) = (state.extrema.trough, state.extrema.peak);
    let g = solver.curves().curve(level, shape);

    let mut residuals = BTreeMap::new();
    residuals.insert("lower_trigger".into(), (g.value(d)? + spec.up_unit).abs());
    residuals.insert("upper_trigger".into(), (g.value(u)? - spec.down_unit).abs());
    residuals.insert("lower_slope".into(), g.derivative(d)?.abs());
    residuals.insert("upper_slope".into(), g.derivative(u)?.abs());
    residuals.insert("level_agreement".into(), (state.level_upper - state.level_lower).abs());

    let limit = solver.curves().shape_limit();
    Ok(Solution {
        policy: BandPolicy::singular(d, u),
        gamma: spec.mu * level,
        level,
        shape: shape.value,
        extrema: state.extrema,
        shape_limit: limit.is_finite().then_some(limit),
        shape_gap: shape.value,
        shape_floor: None,
        clamp_threshold: None,
        deficits: limit.is_finite().then(|| ShapeDeficits {
            gap: solver.curves().deficit(shape),
            floor: None,
            optimal: solver.curves().deficit(shape),
        }),
        residuals,
        reflected: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HoldingCost;

    fn r1() -> ProblemSpec {
        ProblemSpec {
            mu: 1.0,
            sigma2: 2.0,
            up_fixed: 0.0,
            up_unit: 0.5,
            down_fixed: 0.0,
            down_unit: 0.5,
            holding: HoldingCost::linear(1.0, 1.0, 0.0).unwrap(),
            mode: Mode::Singular,
        }
    }

    #[test]
    fn r1_closed_form() {
        let sol = solve_singular(&r1(), SolverOptions::default()).unwrap();
        let b1 = (1.0 - (-1f64).exp()).sqrt();
        assert!((sol.shape - b1).abs() < 1e-11);
        assert!((sol.policy.lower_trigger - (1.0 - b1).ln()).abs() < 1e-10);
        assert!((sol.policy.upper_trigger - (1.0 + b1).ln()).abs() < 1e-10);
        assert!((sol.gamma - ((1.0 + b1).ln() + 0.5)).abs() < 1e-10);
        assert!((sol.policy.lower_trigger + 1.585039).abs() < 1e-6);
        assert!((sol.policy.upper_trigger - 0.585039).abs() < 1e-6);
        assert!((sol.gamma - 1.085039).abs() < 1e-6);
        assert!(sol.max_residual() < 1e-8, "{:?}", sol.residuals);
    }

    #[test]
    fn band_straddles_minimizer() {
        let mut spec = r1();
        spec.holding = HoldingCost::quadratic(1.0, 0.7).unwrap();
        let sol = solve_singular(&spec, SolverOptions::default()).unwrap();
        assert!(sol.policy.lower_trigger < 0.7 && 0.7 < sol.policy.upper_trigger);
        assert!(sol.max_residual() < 1e-8);
    }

    #[test]
    fn negative_drift_by_reflection() {
        let mut spec = r1();
        spec.holding = HoldingCost::linear(2.0, 1.0, 0.0).unwrap();
        spec.up_unit = 0.3;
        let direct = solve_singular(&spec, SolverOptions::default()).unwrap();
        let back = solve_singular(&spec.reflect(), SolverOptions::default()).unwrap();
        assert!(back.reflected);
        let m = back.policy.mirrored();
        assert!((m.lower_trigger - direct.policy.lower_trigger).abs() < 1e-8);
        assert!((m.upper_trigger - direct.policy.upper_trigger).abs() < 1e-8);
        assert!((direct.gamma - back.gamma).abs() < 1e-9);
    }

    #[test]
    fn optimum_within_rounding_of_shape_limit() {
        // h = 0.3|x| with a steep λ: the trough needed for k + ℓ lies where
        // B̄ - B is about 1e-15 B̄, and for B -> B̄ the peak tends to ln 2 / λ
        let spec = ProblemSpec {
            mu: 1.6789092987970442,
            sigma2: 0.5,
            up_fixed: 0.0,
            up_unit: 0.1,
            down_fixed: 0.0,
            down_unit: 0.8116485949494703,
            holding: HoldingCost::linear(0.3, 0.3, 0.0).unwrap(),
            mode: Mode::Singular,
        };
        let sol = solve_singular(&spec, SolverOptions::default()).unwrap();
        let (d, u) = (sol.policy.lower_trigger, sol.policy.upper_trigger);
        let lambda = spec.lambda();
        assert!((u - 2f64.ln() / lambda).abs() < 1e-9, "u = {u}");
        let amplitude = (0.3 * -d - 0.3 * u) / spec.mu;
        assert!((amplitude - (spec.up_unit + spec.down_unit)).abs() < 1e-9, "d = {d}");
        assert!((sol.gamma - (0.3 * u + spec.mu * spec.down_unit)).abs() < 1e-9);
        assert!(sol.max_residual() < 1e-8, "{:?}", sol.residuals);
    }
}
