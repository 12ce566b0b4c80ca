//! Free-boundary solver for the four-threshold impulse band.
//!
//! The optimal band comes out of a chain of one-dimensional monotone root
//! problems in the curve constants `(A, B)`:
//!
//! 1. the shape gap `B₁` where the curve's peak-to-trough amplitude equals
//!    `k + ℓ`;
//! 2. for each shape `B > B₁` the admissible levels `(A_lo(B), A_hi(B)]`,
//!    the upper targets `U < u` where `g = ℓ`, and the area
//!    `∫_U^u (g - ℓ)`;
//! 3. the shape floor `B₂` where the area at the top level reaches `L`;
//! 4. for `B >= B₂` the level `A*(B)` at which the upper area equals `L`;
//! 5. the optimal shape `B*` where the lower area `∫_d^D (g + k)` at
//!    `A*(B)` equals `-K`.
//!
//! The long-run average cost is then `γ* = μ A*`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageExt};
use crate::gcurve::{Curves, ExtremaPair, GCurve, Shape, SolverOptions};
use crate::model::{Mode, ProblemSpec};
use crate::nonneg;
use crate::roots::{self, Probe};

/// A control band. Singular bands have `D = d` and `U = u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPolicy {
    #[serde(rename = "d")]
    pub lower_trigger: f64,
    #[serde(rename = "D")]
    pub lower_target: f64,
    #[serde(rename = "U")]
    pub upper_target: f64,
    #[serde(rename = "u")]
    pub upper_trigger: f64,
    /// Multiplier of the nonnegativity constraint; zero outside that mode.
    #[serde(default)]
    pub alpha: f64,
    pub mode: Mode,
}

impl BandPolicy {
    pub fn impulse(d: f64, big_d: f64, big_u: f64, u: f64) -> Self {
        BandPolicy {
            lower_trigger: d,
            lower_target: big_d,
            upper_target: big_u,
            upper_trigger: u,
            alpha: 0.0,
            mode: Mode::Impulse,
        }
    }

    pub fn singular(d: f64, u: f64) -> Self {
        BandPolicy {
            lower_trigger: d,
            lower_target: d,
            upper_target: u,
            upper_trigger: u,
            alpha: 0.0,
            mode: Mode::Singular,
        }
    }

    pub fn nonneg(d: f64, big_d: f64, big_u: f64, u: f64, alpha: f64) -> Self {
        BandPolicy {
            alpha,
            mode: Mode::NonNegImpulse,
            ..Self::impulse(d, big_d, big_u, u)
        }
    }

    /// `(d, D, U, u)`.
    pub fn thresholds(&self) -> [f64; 4] {
        [
            self.lower_trigger,
            self.lower_target,
            self.upper_target,
            self.upper_trigger,
        ]
    }

    /// Checks the ordering required by the band's mode.
    pub fn validate(&self) -> Result<()> {
        let [d, big_d, big_u, u] = self.thresholds();
        if !self.thresholds().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "band has non-finite thresholds {self:?}"
            )));
        }
        let ok = match self.mode {
            Mode::Singular => d < u && big_d == d && big_u == u,
            Mode::Impulse => d < big_d && big_d < big_u && big_u < u,
            Mode::NonNegImpulse => {
                0.0 <= d && d < big_d && big_d < big_u && big_u < u && self.alpha >= 0.0 && self.alpha * d == 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "{} band ordering violated: d = {d}, D = {big_d}, U = {big_u}, u = {u}, alpha = {}",
                self.mode, self.alpha
            )))
        }
    }

    /// The band of the mirrored problem `x -> -x`.
    pub fn mirrored(&self) -> Self {
        BandPolicy {
            lower_trigger: -self.upper_trigger,
            lower_target: -self.upper_target,
            upper_target: -self.lower_target,
            upper_trigger: -self.lower_trigger,
            ..*self
        }
    }
}

/// An optimal band together with the cascade constants that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    #[serde(rename = "band")]
    pub policy: BandPolicy,
    pub gamma: f64,
    #[serde(rename = "A_star")]
    pub level: f64,
    #[serde(rename = "B_star")]
    pub shape: f64,
    #[serde(flatten)]
    pub extrema: ExtremaPair,
    /// Upper end of the admissible shapes; absent when unbounded.
    #[serde(rename = "B_bar")]
    pub shape_limit: Option<f64>,
    #[serde(rename = "B1")]
    pub shape_gap: f64,
    #[serde(rename = "B2")]
    pub shape_floor: Option<f64>,
    #[serde(rename = "B_bar1", skip_serializing_if = "Option::is_none")]
    pub clamp_threshold: Option<f64>,
    /// `B̄ - B` for the cascade shapes in backlog mode. Shapes that differ
    /// from `B̄` by less than its rounding all print as `B̄`.
    #[serde(rename = "B_bar_minus", skip_serializing_if = "Option::is_none")]
    pub deficits: Option<ShapeDeficits>,
    /// Absolute defects of the defining equations at the returned band.
    pub residuals: BTreeMap<String, f64>,
    /// Set when the problem was solved in mirrored coordinates.
    pub reflected: bool,
}

/// Distances below `B̄` of the cascade shapes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShapeDeficits {
    #[serde(rename = "B1")]
    pub gap: f64,
    #[serde(rename = "B2", skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
    #[serde(rename = "B_star")]
    pub optimal: f64,
}

impl Solution {
    pub fn max_residual(&self) -> f64 {
        self.residuals.values().fold(0.0, |m, &v| m.max(v))
    }

    /// `B*` with its exact distance below `B̄` when that is known.
    pub fn optimal_shape(&self) -> Shape {
        match (self.shape_limit, self.deficits) {
            (Some(limit), Some(d)) => Shape::below(limit, d.optimal),
            _ => Shape::from(self.shape),
        }
    }

    pub(crate) fn mirrored(mut self) -> Self {
        self.policy = self.policy.mirrored();
        self.extrema = self.extrema.mirrored();
        self.reflected = !self.reflected;
        self
    }
}

/// Per-shape quantities every later stage needs.
#[derive(Debug, Clone, Copy)]
pub struct ShapeState {
    pub shape: Shape,
    pub extrema: ExtremaPair,
    /// `A_lo(B) = ℓ - g_{0,B}(x2)`: the level at which the peak touches `ℓ`.
    pub level_lower: f64,
    /// `A_hi(B) = -k - g_{0,B}(x1)`: the level at which the trough touches `-k`.
    pub level_upper: f64,
}

/// Cascade driver for one problem with `μ > 0`.
#[derive(Debug, Clone)]
pub struct ImpulseSolver<'a> {
    curves: Curves<'a>,
    spec: &'a ProblemSpec,
}

impl<'a> ImpulseSolver<'a> {
    pub fn new(spec: &'a ProblemSpec, opts: SolverOptions) -> Result<Self> {
        let curves = Curves::new(spec, opts).stage("shape limit")?;
        Ok(ImpulseSolver { curves, spec })
    }

    pub fn curves(&self) -> &Curves<'a> {
        &self.curves
    }

    fn up_unit(&self) -> f64 {
        self.spec.up_unit
    }

    fn down_unit(&self) -> f64 {
        self.spec.down_unit
    }

    pub fn state(&self, shape: impl Into<Shape>) -> Result<ShapeState> {
        let shape = shape.into();
        let extrema = self.curves.extrema(shape)?;
        let g0 = self.curves.curve(0.0, shape);
        Ok(ShapeState {
            shape,
            extrema,
            level_lower: self.down_unit() - g0.value(extrema.peak)?,
            level_upper: -self.up_unit() - g0.value(extrema.trough)?,
        })
    }

    /// `g_{0,B}(x2) - g_{0,B}(x1)`.
    pub fn amplitude(&self, shape: impl Into<Shape>) -> Result<f64> {
        let s = self.state(shape)?;
        Ok(s.level_upper - s.level_lower + self.up_unit() + self.down_unit())
    }

    /// `(A_lo(B), A_hi(B))`.
    pub fn level_bounds(&self, shape: impl Into<Shape>) -> Result<(f64, f64)> {
        let s = self.state(shape)?;
        Ok((s.level_lower, s.level_upper))
    }

    /// The shape `B₁` where the amplitude equals `k + ℓ`.
    pub fn solve_shape_gap(&self) -> Result<Shape> {
        let target = self.up_unit() + self.down_unit();
        let f = |b: Shape| self.amplitude(b).map(|v| v - target);
        self.solve_shape(f, Shape::from(0.0), -target, 0.5 * target)
    }

    /// Finds a root of `f` in shapes above `start`, where `f` is `start_fx`.
    ///
    /// In backlog mode the search runs over `ln(B̄ - B)`, which keeps the
    /// relative resolution uniform however close to `B̄` the root lies.
    /// Otherwise shapes are unbounded and brackets grow by doubling steps.
    fn solve_shape<F>(&self, mut f: F, start: Shape, start_fx: f64, step: f64) -> Result<Shape>
    where
        F: FnMut(Shape) -> Result<f64>,
    {
        let limit = self.curves.shape_limit();
        let n = self.curves.options().max_bracket_expansions;
        let tol = self.curves.options().root();
        if !limit.is_finite() {
            let mut g = |b: f64| f(Shape::from(b));
            let (inner, outer) = roots::expand(&mut g, Probe::new(start.value, start_fx), step, n)?;
            return roots::brent(g, inner, outer, tol).map(Shape::from);
        }
        let mut g = |t: f64| f(Shape::below(limit, t.exp()));
        let from = Probe::new(self.curves.deficit(start).ln(), start_fx);
        let (inner, outer) = roots::expand(&mut g, from, -std::f64::consts::LN_2, n)?;
        let t = roots::brent(g, inner, outer, tol)?;
        Ok(Shape::below(limit, t.exp()))
    }

    fn check_level(&self, s: &ShapeState, level: f64) -> Result<()> {
        let slack = 1e-12 * (1.0 + s.level_upper.abs());
        if !(level > s.level_lower && level <= s.level_upper + slack) {
            return Err(Error::Domain(format!(
                "level {level} outside ({}, {}] for shape {}",
                s.level_lower, s.level_upper, s.shape.value
            )));
        }
        Ok(())
    }

    /// `(U, u)`: the roots of `g = ℓ` on the increasing and the final
    /// decreasing branch.
    pub fn upper_targets(&self, shape: impl Into<Shape>, level: f64) -> Result<(f64, f64)> {
        let s = self.state(shape)?;
        self.upper_targets_in(&s, level)
    }

    pub fn upper_targets_in(&self, s: &ShapeState, level: f64) -> Result<(f64, f64)> {
        self.check_level(s, level)?;
        let g = self.curves.curve(level, s.shape);
        let ell = self.down_unit();
        let f = |x: f64| g.value(x).map(|v| v - ell);
        let peak = Probe::new(s.extrema.peak, f(s.extrema.peak)?);
        if peak.fx <= 0.0 {
            // level within rounding of A_lo: the band above has collapsed
            return Ok((peak.x, peak.x));
        }
        let tol = self.curves.options().root();
        let trough = Probe::new(s.extrema.trough, f(s.extrema.trough)?);
        let big_u = roots::brent(f, trough, peak, tol)?;
        let step = 1.0 / self.curves.lambda();
        let (inner, outer) = roots::expand(f, peak, step, self.curves.options().max_bracket_expansions)?;
        let u = roots::brent(f, inner, outer, tol)?;
        Ok((big_u, u))
    }

    /// `∫_U^u (g - ℓ) dx >= 0`.
    pub fn upper_area(&self, shape: impl Into<Shape>, level: f64) -> Result<f64> {
        let s = self.state(shape)?;
        self.upper_area_in(&s, level).map(|(v, _, _)| v)
    }

    fn upper_area_in(&self, s: &ShapeState, level: f64) -> Result<(f64, f64, f64)> {
        let (big_u, u) = self.upper_targets_in(s, level)?;
        let g = self.curves.curve(level, s.shape);
        let area = g.integral(big_u, u)? - self.down_unit() * (u - big_u);
        Ok((area, big_u, u))
    }

    /// The shape `B₂` where the upper area at the top level equals `L`.
    pub fn solve_shape_floor(&self, shape_gap: Shape) -> Result<Shape> {
        let fixed = self.spec.down_fixed;
        let f = |b: Shape| {
            let s = self.state(b)?;
            Ok(self.upper_area_in(&s, s.level_upper)?.0 - fixed)
        };
        self.solve_shape(f, shape_gap, -fixed, 0.5 * shape_gap.value)
    }

    /// The level `A*(B)` at which the upper area equals `L`.
    pub fn solve_level(&self, shape: impl Into<Shape>) -> Result<f64> {
        let s = self.state(shape)?;
        self.solve_level_in(&s)
    }

    fn solve_level_in(&self, s: &ShapeState) -> Result<f64> {
        let fixed = self.spec.down_fixed;
        let top = self.upper_area_in(s, s.level_upper)?.0 - fixed;
        if top < 0.0 {
            if top > -1e-10 * (1.0 + fixed) {
                return Ok(s.level_upper);
            }
            return Err(Error::Domain(format!(
                "shape {} is below the shape floor (upper area short of L by {:.3e})",
                s.shape.value, -top
            )));
        }
        let f = |a: f64| self.upper_area_in(s, a).map(|(v, _, _)| v - fixed);
        let lo = Probe::new(s.level_lower, -fixed);
        let hi = Probe::new(s.level_upper, top);
        roots::brent(f, lo, hi, self.curves.options().root())
    }

    /// `(d, D)`: the roots of `g = -k` left of and right of the trough.
    /// In nonnegative mode `d` is clamped at zero when `g(0) <= -k`.
    pub fn lower_targets(&self, shape: impl Into<Shape>, level: f64) -> Result<(f64, f64)> {
        let s = self.state(shape)?;
        self.lower_targets_in(&s, level)
    }

    pub fn lower_targets_in(&self, s: &ShapeState, level: f64) -> Result<(f64, f64)> {
        if level > s.level_upper + 1e-12 * (1.0 + s.level_upper.abs()) {
            return Err(Error::Domain(format!(
                "level {level} above {} leaves the trough above -k",
                s.level_upper
            )));
        }
        let g = self.curves.curve(level, s.shape);
        let k = self.up_unit();
        let f = |x: f64| g.value(x).map(|v| v + k);
        let trough = Probe::new(s.extrema.trough, f(s.extrema.trough)?);
        if trough.fx >= 0.0 {
            return Ok((trough.x, trough.x));
        }
        let tol = self.curves.options().root();
        let peak = Probe::new(s.extrema.peak, f(s.extrema.peak)?);
        let big_d = roots::brent(f, trough, peak, tol)?;
        let d = if self.curves.is_nonneg() {
            nonneg::lower_trigger(&g, s.extrema, k, tol)?
        } else {
            let step = -1.0 / self.curves.lambda();
            let (inner, outer) = roots::expand(f, trough, step, self.curves.options().max_bracket_expansions)?;
            roots::brent(f, outer, inner, tol)?
        };
        Ok((d, big_d))
    }

    /// `∫_d^D (g + k) dx <= 0`.
    pub fn lower_area(&self, shape: impl Into<Shape>, level: f64) -> Result<f64> {
        let s = self.state(shape)?;
        self.lower_area_in(&s, level).map(|(v, _, _)| v)
    }

    fn lower_area_in(&self, s: &ShapeState, level: f64) -> Result<(f64, f64, f64)> {
        let (d, big_d) = self.lower_targets_in(s, level)?;
        let g = self.curves.curve(level, s.shape);
        let area = g.integral(d, big_d)? + self.up_unit() * (big_d - d);
        Ok((area, d, big_d))
    }

    /// Runs the full cascade.
    pub fn solve(&self) -> Result<Solution> {
        let fixed = self.spec.up_fixed;
        let shape_gap = self.solve_shape_gap().stage("shape gap")?;
        let shape_floor = self.solve_shape_floor(shape_gap).stage("shape floor")?;
        let f = |b: Shape| {
            let s = self.state(b)?;
            let level = self.solve_level_in(&s)?;
            Ok(self.lower_area_in(&s, level)?.0 + fixed)
        };
        let shape = self
            .solve_shape(f, shape_floor, fixed, 0.5 * shape_floor.value)
            .stage("optimal shape")?;

        let s = self.state(shape).stage("targets")?;
        let level = self.solve_level_in(&s).stage("optimal level")?;
        let (big_u, u) = self.upper_targets_in(&s, level).stage("targets")?;
        let (d, big_d) = self.lower_targets_in(&s, level).stage("targets")?;
        let g = self.curves.curve(level, shape);

        let policy = if self.curves.is_nonneg() {
            let alpha = nonneg::multiplier(&g, d, self.up_unit()).stage("targets")?;
            BandPolicy::nonneg(d, big_d, big_u, u, alpha)
        } else {
            BandPolicy::impulse(d, big_d, big_u, u)
        };
        let residuals = self.residuals(&g, &policy).stage("residuals")?;
        let limit = self.curves.shape_limit();
        let deficits = limit.is_finite().then(|| ShapeDeficits {
            gap: self.curves.deficit(shape_gap),
            floor: Some(self.curves.deficit(shape_floor)),
            optimal: self.curves.deficit(shape),
        });
        Ok(Solution {
            policy,
            gamma: self.spec.mu * level,
            level,
            shape: shape.value,
            extrema: s.extrema,
            shape_limit: limit.is_finite().then_some(limit),
            shape_gap: shape_gap.value,
            shape_floor: Some(shape_floor.value),
            clamp_threshold: self
                .curves
                .is_nonneg()
                .then(|| self.curves.clamp_threshold())
                .transpose()?,
            deficits,
            residuals,
            reflected: false,
        })
    }

    /// Defects of the pasting conditions and the two area conditions, the
    /// latter by direct quadrature of the curve.
    fn residuals(&self, g: &GCurve<'_>, band: &BandPolicy) -> Result<BTreeMap<String, f64>> {
        let (k, ell) = (self.up_unit(), self.down_unit());
        let (big_k, big_l) = (self.spec.up_fixed, self.spec.down_fixed);
        let [d, big_d, big_u, u] = band.thresholds();
        let mut r = BTreeMap::new();
        r.insert("lower_trigger".into(), (g.value(d)? + k + band.alpha).abs());
        r.insert("lower_target".into(), (g.value(big_d)? + k).abs());
        r.insert("upper_target".into(), (g.value(big_u)? - ell).abs());
        r.insert("upper_trigger".into(), (g.value(u)? - ell).abs());
        let lower = g.integral_by_quadrature(d, big_d)? + k * (big_d - d);
        let upper = g.integral_by_quadrature(big_u, u)? - ell * (u - big_u);
        r.insert("lower_area".into(), (lower + big_k).abs());
        r.insert("upper_area".into(), (upper - big_l).abs());
        Ok(r)
    }
}

/// Solves an impulse-mode problem, reflecting first when `μ < 0`.
pub fn solve_impulse(spec: &ProblemSpec, opts: SolverOptions) -> Result<Solution> {
    if spec.mode != Mode::Impulse {
        return Err(Error::InvalidParameter(format!(
            "impulse solver called on a {} problem",
            spec.mode
        )));
    }
    spec.ensure_valid()?;
    if spec.mu < 0.0 {
        let mirrored = spec.reflect();
        return Ok(ImpulseSolver::new(&mirrored, opts)?.solve()?.mirrored());
    }
    ImpulseSolver::new(spec, opts)?.solve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HoldingCost;

    fn r1() -> ProblemSpec {
        ProblemSpec {
            mu: 1.0,
            sigma2: 2.0,
            up_fixed: 1.0,
            up_unit: 0.5,
            down_fixed: 1.0,
            down_unit: 0.5,
            holding: HoldingCost::linear(1.0, 1.0, 0.0).unwrap(),
            mode: Mode::Impulse,
        }
    }

    #[test]
    fn amplitude_closed_form() {
        // for h = |x| with λ = μ = 1 the amplitude is -ln(1 - B²)
        let spec = r1();
        let s = ImpulseSolver::new(&spec, SolverOptions::default()).unwrap();
        assert!((s.amplitude(0.5).unwrap() - 0.287682).abs() < 1e-6);
        assert!((s.amplitude(0.795060).unwrap() - 1.0).abs() < 1e-5);
        assert!(s.amplitude(1e-6).unwrap() < 1e-10);
    }

    #[test]
    fn shape_gap_closed_form() {
        let spec = r1();
        let s = ImpulseSolver::new(&spec, SolverOptions::default()).unwrap();
        let b1 = s.solve_shape_gap().unwrap();
        assert!((b1.value - (1.0 - (-1f64).exp()).sqrt()).abs() < 1e-11);
    }

    #[test]
    fn level_bounds_closed_form() {
        let spec = r1();
        let s = ImpulseSolver::new(&spec, SolverOptions::default()).unwrap();
        let (lo, hi) = s.level_bounds(0.9).unwrap();
        assert!((lo - (1.9f64.ln() + 0.5)).abs() < 1e-10);
        assert!((lo - 1.141854).abs() < 1e-6);
        assert!((hi - 1.802585).abs() < 1e-6);
        let b1 = s.solve_shape_gap().unwrap();
        let (lo, hi) = s.level_bounds(b1).unwrap();
        assert!((lo - hi).abs() < 1e-10);
    }

    #[test]
    fn upper_targets_bracket_peak() {
        let spec = r1();
        let s = ImpulseSolver::new(&spec, SolverOptions::default()).unwrap();
        let (big_u, u) = s.upper_targets(0.9, 1.3).unwrap();
        let peak = 1.9f64.ln();
        assert!(big_u < peak && peak < u);
        let c = s.curves().curve(1.3, 0.9);
        assert!((c.value(big_u).unwrap() - 0.5).abs() < 1e-10);
        assert!((c.value(u).unwrap() - 0.5).abs() < 1e-10);
        assert!(c.derivative(big_u).unwrap() > 0.0 && c.derivative(u).unwrap() < 0.0);
        assert!(s.upper_targets(0.9, 1.0).is_err());
    }

    #[test]
    fn upper_area_grows_with_level() {
        let spec = r1();
        let s = ImpulseSolver::new(&spec, SolverOptions::default()).unwrap();
        let (lo, hi) = s.level_bounds(0.9).unwrap();
        assert!(s.upper_area(0.9, lo + 1e-9).unwrap() < 1e-10);
        let a = s.upper_area(0.9, 1.3).unwrap();
        let b = s.upper_area(0.9, 1.3 + 1e-6).unwrap();
        let (big_u, u) = s.upper_targets(0.9, 1.3).unwrap();
        assert!(b > a && a > 0.0);
        assert!(((b - a) / 1e-6 - (u - big_u)).abs() < 1e-4);
        assert!(s.upper_area(0.9, hi).unwrap() > 0.0);
    }

    #[test]
    fn r1_cascade() {
        let spec = r1();
        let s = ImpulseSolver::new(&spec, SolverOptions::default()).unwrap();
        let sol = s.solve().unwrap();
        let b2 = sol.shape_floor.unwrap();
        assert!(sol.shape_gap < b2 && b2 < sol.shape && sol.shape < 1.0);
        let [d, big_d, big_u, u] = sol.policy.thresholds();
        let e = sol.extrema;
        assert!(d < e.trough && e.trough < big_d && big_d < big_u && big_u < e.peak && e.peak < u);
        assert!(d < -1.585145);
        assert!(sol.gamma >= 1.085274);
        assert!((sol.gamma - sol.level).abs() < 1e-12);
        for (name, v) in &sol.residuals {
            let tol = if name.ends_with("area") { 1e-6 } else { 1e-8 };
            assert!(*v <= tol, "{name} = {v}");
        }
        // the level at the floor shape is the top level
        let top = s.level_bounds(b2).unwrap().1;
        assert!((s.solve_level(b2).unwrap() - top).abs() < 1e-8);
    }

    #[test]
    fn lower_area_nonpositive() {
        let spec = r1();
        let s = ImpulseSolver::new(&spec, SolverOptions::default()).unwrap();
        let b = 0.95;
        let level = s.solve_level(b).unwrap();
        assert!(s.lower_area(b, level).unwrap() <= 0.0);
    }

    #[test]
    fn reflection_mirrors_band() {
        let mut spec = r1();
        spec.holding = HoldingCost::linear(2.0, 1.0, 0.3).unwrap();
        spec.down_fixed = 2.0;
        let direct = solve_impulse(&spec, SolverOptions::default()).unwrap();
        let mirrored = spec.reflect();
        let back = solve_impulse(&mirrored, SolverOptions::default()).unwrap();
        assert!(back.reflected);
        let a = direct.policy.thresholds();
        let b = back.policy.mirrored().thresholds();
        for i in 0..4 {
            assert!((a[i] - b[i]).abs() < 1e-8, "{a:?} vs {b:?}");
        }
        assert!((direct.gamma - back.gamma).abs() < 1e-9 * direct.gamma);
    }

    #[test]
    fn band_ordering() {
        assert!(BandPolicy::impulse(-2.0, -1.0, 1.0, 2.0).validate().is_ok());
        assert!(BandPolicy::impulse(-2.0, 1.0, -1.0, 2.0).validate().is_err());
        assert!(BandPolicy::singular(1.0, -1.0).validate().is_err());
        assert!(BandPolicy::nonneg(0.0, 1.0, 2.0, 3.0, 0.4).validate().is_ok());
        assert!(BandPolicy::nonneg(0.5, 1.0, 2.0, 3.0, 0.4).validate().is_err());
        let m = BandPolicy::impulse(-2.0, -1.0, 0.5, 3.0).mirrored();
        assert_eq!(m.thresholds(), [-3.0, -0.5, 1.0, 2.0]);
    }

    #[test]
    fn optimum_within_rounding_of_shape_limit() {
        let spec = ProblemSpec {
            mu: 1.6789092987970442,
            sigma2: 0.5,
            up_fixed: 0.2,
            up_unit: 0.1,
            down_fixed: 0.2,
            down_unit: 0.8116485949494703,
            holding: HoldingCost::linear(0.3, 0.3, 0.0).unwrap(),
            mode: Mode::Impulse,
        };
        let sol = solve_impulse(&spec, SolverOptions::default()).unwrap();
        sol.policy.validate().unwrap();
        assert!(sol.max_residual() < 1e-6, "{:?}", sol.residuals);
        let eval = crate::evaluator::evaluate(&spec, &sol.policy, &Default::default()).unwrap();
        assert!((eval.gamma - sol.gamma).abs() < 1e-6 * sol.gamma);
    }
}
