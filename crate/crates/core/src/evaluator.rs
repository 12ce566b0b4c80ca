//! Long-run average cost and relative value function of a given band.
//!
//! On the band interval the relative value function solves
//! `(σ²/2) V'' + μ V' + h = γ`, so with an anchor `m`
//!
//! ```text
//! V'(x) = V'(m) e^{λ(m-x)} + (γ/μ)(1 - e^{λ(m-x)}) - (2/σ²) H(x),
//! H(x)  = ∫_m^x h(y) e^{λ(y-x)} dy.
//! ```
//!
//! The two boundary conditions of the band (value jumps for impulse bands,
//! slopes `-k` and `ℓ` for reflecting bands) are linear in `(V'(m), γ)`.
//! The double integrals they involve collapse to single ones because
//! `H' = h - λ H`, which gives `∫ H = (∫ h - ΔH) / λ`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::impulse::BandPolicy;
use crate::model::{validate_spec, Mode, ProblemSpec, ValidationOptions};
use crate::quad::Simpson;

/// Settings for [`evaluate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Anchor `m` of the value function; the holding-cost minimizer when unset.
    pub anchor: Option<f64>,
    pub tol_quad: f64,
    /// Step of the finite differences used for `V''`.
    pub fd_step: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            anchor: None,
            tol_quad: 1e-12,
            fd_step: 1e-3,
        }
    }
}

/// `γ` and the relative value function of one band.
#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub gamma: f64,
    #[serde(rename = "m")]
    pub anchor: f64,
    #[serde(rename = "Vprime_m")]
    pub slope_at_anchor: f64,
    pub coefficients: BTreeMap<String, f64>,
    /// Problems found by model validation; the formulas do not need them.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(skip)]
    spec: ProblemSpec,
    #[serde(skip)]
    band: BandPolicy,
    #[serde(skip)]
    quad: Simpson,
    #[serde(skip)]
    fd_step: f64,
}

/// One row of the tabulated value function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRow {
    pub x: f64,
    pub value: f64,
    pub slope: f64,
    /// `Γf(x) + h(x)`, equal to `γ` wherever the Poisson equation holds.
    pub generator_plus_cost: f64,
}

fn check_dynamics(spec: &ProblemSpec) -> Result<f64> {
    let lambda = spec.lambda();
    if spec.mu == 0.0 || !(spec.sigma2 > 0.0) || !lambda.is_finite() {
        return Err(Error::Unsupported(format!(
            "unsupported drift or variance: lambda undefined for mu = {}, sigma2 = {}",
            spec.mu, spec.sigma2
        )));
    }
    Ok(lambda)
}

/// Solves `p1 v + q1 g = r1`, `p2 v + q2 g = r2` for `(v, g)`.
fn solve2(p1: f64, q1: f64, r1: f64, p2: f64, q2: f64, r2: f64) -> Result<(f64, f64)> {
    let det = p1 * q2 - p2 * q1;
    let scale = (p1.abs() + q1.abs()) * (p2.abs() + q2.abs());
    if !det.is_finite() || det.abs() <= 1e-14 * scale || scale == 0.0 {
        return Err(Error::Degenerate(det));
    }
    Ok(((r1 * q2 - r2 * q1) / det, (p1 * r2 - p2 * r1) / det))
}

/// Evaluates a band of any mode; reflecting bands use slope conditions,
/// all others the value-jump conditions.
pub fn evaluate(spec: &ProblemSpec, band: &BandPolicy, opts: &EvalOptions) -> Result<Evaluation> {
    match band.mode {
        Mode::Singular => evaluate_singular(spec, band, opts),
        Mode::Impulse | Mode::NonNegImpulse => evaluate_impulse(spec, band, opts),
    }
}

struct Setup {
    lambda: f64,
    anchor: f64,
    quad: Simpson,
    warnings: Vec<String>,
}

fn setup(spec: &ProblemSpec, band: &BandPolicy, opts: &EvalOptions) -> Result<Setup> {
    let lambda = check_dynamics(spec)?;
    band.validate()?;
    let anchor = opts.anchor.unwrap_or_else(|| spec.minimizer());
    if !anchor.is_finite() {
        return Err(Error::InvalidParameter(format!("anchor {anchor} is not finite")));
    }
    let warnings = validate_spec(spec, &ValidationOptions::default())
        .violations
        .iter()
        .map(|v| format!("{}: {}", v.kind.label(), v.detail))
        .collect();
    Ok(Setup {
        lambda,
        anchor,
        quad: Simpson::new(opts.tol_quad),
        warnings,
    })
}

/// `H(x) = ∫_m^x h(y) e^{λ(y-x)} dy`.
fn transform(spec: &ProblemSpec, quad: &Simpson, lambda: f64, m: f64, x: f64) -> Result<f64> {
    let h = &spec.holding;
    quad.integrate_split(
        |y| h.value(y) * (lambda * (y - x)).exp(),
        m.min(x),
        m.max(x),
        &[h.minimizer()],
    )
    .map(|v| if x >= m { v } else { -v })
}

/// `∫_lo^hi H(x) dx`.
fn transform_integral(spec: &ProblemSpec, quad: &Simpson, lambda: f64, m: f64, lo: f64, hi: f64) -> Result<f64> {
    let hint = spec.holding.integral(quad, lo, hi)?;
    let delta = transform(spec, quad, lambda, m, hi)? - transform(spec, quad, lambda, m, lo)?;
    Ok((hint - delta) / lambda)
}

/// `∫_lo^hi e^{λ(m-x)} dx`.
fn decay_integral(lambda: f64, m: f64, lo: f64, hi: f64) -> f64 {
    ((lambda * (m - lo)).exp() - (lambda * (m - hi)).exp()) / lambda
}

pub fn evaluate_impulse(spec: &ProblemSpec, band: &BandPolicy, opts: &EvalOptions) -> Result<Evaluation> {
    if band.mode == Mode::Singular {
        return Err(Error::InvalidParameter(
            "impulse evaluation of a reflecting band".into(),
        ));
    }
    let s = setup(spec, band, opts)?;
    let (lambda, m, q) = (s.lambda, s.anchor, &s.quad);
    let c = 2.0 / spec.sigma2;
    let [d, big_d, big_u, u] = band.thresholds();

    let a1 = decay_integral(lambda, m, d, big_d);
    let a2 = decay_integral(lambda, m, big_u, u);
    // ∫_m^x e^{λ(y-x)} dy = (1 - e^{λ(m-x)}) / λ
    let b1 = -c * ((big_d - d) - a1) / lambda;
    let b2 = c * ((u - big_u) - a2) / lambda;
    let c1 = -c * transform_integral(spec, q, lambda, m, d, big_d)?;
    let c2 = c * transform_integral(spec, q, lambda, m, big_u, u)?;

    let lower = c1 + spec.up_fixed + spec.up_unit * (big_d - d);
    let upper = c2 + spec.down_fixed + spec.down_unit * (u - big_u);
    let (slope, gamma) = solve2(a1, -b1, -lower, a2, b2, upper)?;

    let coefficients = [("a1", a1), ("a2", a2), ("b1", b1), ("b2", b2), ("c1", c1), ("c2", c2)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    Ok(Evaluation {
        gamma,
        anchor: m,
        slope_at_anchor: slope,
        coefficients,
        warnings: s.warnings,
        spec: spec.clone(),
        band: *band,
        quad: s.quad,
        fd_step: opts.fd_step,
    })
}

pub fn evaluate_singular(spec: &ProblemSpec, band: &BandPolicy, opts: &EvalOptions) -> Result<Evaluation> {
    if band.mode != Mode::Singular {
        return Err(Error::InvalidParameter(format!(
            "reflecting-band evaluation of a {} band",
            band.mode
        )));
    }
    let s = setup(spec, band, opts)?;
    let (lambda, m, q) = (s.lambda, s.anchor, &s.quad);
    let c = 2.0 / spec.sigma2;
    let (d, u) = (band.lower_trigger, band.upper_trigger);

    let d1 = (lambda * (m - d)).exp();
    let d2 = (lambda * (m - u)).exp();
    let e1 = -c * (1.0 - d1) / lambda;
    let e2 = c * (1.0 - d2) / lambda;
    let f1 = -c * transform(spec, q, lambda, m, d)?;
    let f2 = c * transform(spec, q, lambda, m, u)?;

    let (slope, gamma) = solve2(d1, -e1, -(spec.up_unit + f1), d2, e2, spec.down_unit + f2)?;

    let coefficients = [("d1", d1), ("d2", d2), ("e1", e1), ("e2", e2), ("f1", f1), ("f2", f2)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    Ok(Evaluation {
        gamma,
        anchor: m,
        slope_at_anchor: slope,
        coefficients,
        warnings: s.warnings,
        spec: spec.clone(),
        band: *band,
        quad: s.quad,
        fd_step: opts.fd_step,
    })
}

impl Evaluation {
    pub fn band(&self) -> &BandPolicy {
        &self.band
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn lambda(&self) -> f64 {
        self.spec.lambda()
    }

    /// `V'(x)`.
    pub fn slope(&self, x: f64) -> Result<f64> {
        let (lambda, m) = (self.lambda(), self.anchor);
        let e = (lambda * (m - x)).exp();
        let t = transform(&self.spec, &self.quad, lambda, m, x)?;
        Ok(self.slope_at_anchor * e + self.gamma / self.spec.mu * (1.0 - e) - 2.0 / self.spec.sigma2 * t)
    }

    /// `V(x) = ∫_m^x V'`, through `μ V(x) = γ (x - m) - ∫_m^x h - (σ²/2)(V'(x) - V'(m))`.
    pub fn value(&self, x: f64) -> Result<f64> {
        let m = self.anchor;
        let hint = self.spec.holding.integral(&self.quad, m, x)?;
        let vp = self.slope(x)?;
        Ok((self.gamma * (x - m) - hint - 0.5 * self.spec.sigma2 * (vp - self.slope_at_anchor)) / self.spec.mu)
    }

    /// `V''(x)` by finite differences of `V'`, one-sided next to the kink of `h`.
    pub fn curvature(&self, x: f64) -> Result<f64> {
        let step = self.fd_step;
        let a = self.spec.minimizer();
        if (x - a).abs() >= step {
            return Ok((self.slope(x + step)? - self.slope(x - step)?) / (2.0 * step));
        }
        let dir = if x >= a { 1.0 } else { -1.0 };
        let s = dir * step;
        let (f0, f1, f2) = (self.slope(x)?, self.slope(x + s)?, self.slope(x + 2.0 * s)?);
        Ok((-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * s))
    }

    /// `(σ²/2) V'' + μ V' + h - γ`, with `V''` from finite differences.
    pub fn poisson_residual(&self, x: f64) -> Result<f64> {
        Ok(self.generator_plus_cost(x)? - self.gamma)
    }

    fn generator_plus_cost(&self, x: f64) -> Result<f64> {
        Ok(0.5 * self.spec.sigma2 * self.curvature(x)? + self.spec.mu * self.slope(x)? + self.spec.holding.value(x))
    }

    /// Tabulates `V`, `V'` and `Γf + h` on `points` equally spaced points
    /// of the band interval.
    pub fn tabulate(&self, points: usize, exec: Execution) -> Result<Vec<GridRow>> {
        if points < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2 points, got {points}"
            )));
        }
        let (lo, hi) = (self.band.lower_trigger, self.band.upper_trigger);
        let step = (hi - lo) / (points - 1) as f64;
        exec.map(points, |i| {
            let x = if i + 1 == points { hi } else { lo + step * i as f64 };
            Ok(GridRow {
                x,
                value: self.value(x)?,
                slope: self.slope(x)?,
                generator_plus_cost: self.generator_plus_cost(x)?,
            })
        })
        .into_iter()
        .collect()
    }

    /// The value function extended linearly outside the band.
    pub fn extend(&self) -> Result<ValueFunction<'_>> {
        extend_value_function(self)
    }
}

/// Writes a table from [`Evaluation::tabulate`] as CSV.
pub fn write_csv(path: &Path, rows: &[GridRow]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "x,V,V_prime,Gamma_f_plus_h")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.x, r.value, r.slope, r.generator_plus_cost)?;
    }
    out.flush()
}

/// The relative value function on the whole line: `V` on the band interval
/// and the cost of the immediate adjustment outside it.
#[derive(Debug, Clone)]
pub struct ValueFunction<'a> {
    eval: &'a Evaluation,
    lower: f64,
    upper: f64,
    /// `f(x) = below - k x` for `x < d`.
    below: f64,
    /// `f(x) = above + ℓ x` for `x > u`.
    above: f64,
}

pub fn extend_value_function(eval: &Evaluation) -> Result<ValueFunction<'_>> {
    let spec = &eval.spec;
    let (k, ell) = (spec.up_unit, spec.down_unit);
    let [d, big_d, big_u, u] = eval.band.thresholds();
    let (below, above) = if eval.band.mode == Mode::Singular {
        (eval.value(d)? + k * d, eval.value(u)? - ell * u)
    } else {
        (
            spec.up_fixed + k * big_d + eval.value(big_d)?,
            spec.down_fixed - ell * big_u + eval.value(big_u)?,
        )
    };
    Ok(ValueFunction {
        eval,
        lower: d,
        upper: u,
        below,
        above,
    })
}

impl ValueFunction<'_> {
    pub fn evaluation(&self) -> &Evaluation {
        self.eval
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        let spec = &self.eval.spec;
        if x < self.lower {
            Ok(self.below - spec.up_unit * x)
        } else if x > self.upper {
            Ok(self.above + spec.down_unit * x)
        } else {
            self.eval.value(x)
        }
    }

    pub fn slope(&self, x: f64) -> Result<f64> {
        let spec = &self.eval.spec;
        if x < self.lower {
            Ok(-spec.up_unit)
        } else if x > self.upper {
            Ok(spec.down_unit)
        } else {
            self.eval.slope(x)
        }
    }

    /// Signed jumps `f'(x+) - f'(x-)` at the lower and upper trigger.
    pub fn slope_jumps(&self) -> Result<(f64, f64)> {
        let spec = &self.eval.spec;
        Ok((
            self.eval.slope(self.lower)? + spec.up_unit,
            spec.down_unit - self.eval.slope(self.upper)?,
        ))
    }

    /// `f''` from the Poisson equation inside the band, zero outside.
    pub fn curvature(&self, x: f64) -> Result<f64> {
        if x < self.lower || x > self.upper {
            return Ok(0.0);
        }
        let spec = &self.eval.spec;
        Ok(2.0 / spec.sigma2 * (self.eval.gamma - spec.holding.value(x) - spec.mu * self.eval.slope(x)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Family, HoldingCost};

    fn zero_cost() -> ProblemSpec {
        ProblemSpec {
            mu: 1.0,
            sigma2: 2.0,
            up_fixed: 1.0,
            up_unit: 0.0,
            down_fixed: 1.0,
            down_unit: 0.0,
            holding: HoldingCost::from_family(Family::Linear {
                backlog: 0.0,
                excess: 0.0,
                kink: 0.0,
            }),
            mode: Mode::Impulse,
        }
    }

    fn r1(mode: Mode) -> ProblemSpec {
        let fixed = if mode == Mode::Singular { 0.0 } else { 1.0 };
        ProblemSpec {
            mu: 1.0,
            sigma2: 2.0,
            up_fixed: fixed,
            up_unit: 0.5,
            down_fixed: fixed,
            down_unit: 0.5,
            holding: HoldingCost::linear(1.0, 1.0, 0.0).unwrap(),
            mode,
        }
    }

    #[test]
    fn zero_holding_cost_by_hand() {
        let e = std::f64::consts::E;
        let ev = evaluate_impulse(
            &zero_cost(),
            &BandPolicy::impulse(-2.0, -1.0, 1.0, 2.0),
            &EvalOptions::default(),
        )
        .unwrap();
        let c = &ev.coefficients;
        assert!((c["a1"] - (e * e - e)).abs() < 1e-12);
        assert!((c["a2"] - (1.0 / e - 1.0 / (e * e))).abs() < 1e-12);
        assert!((c["b1"] - (e * e - e - 1.0)).abs() < 1e-12);
        assert!((c["b2"] - (1.0 + 1.0 / (e * e) - 1.0 / e)).abs() < 1e-12);
        let a1 = e * e - e;
        let a2 = 1.0 / e - 1.0 / (e * e);
        let b1 = e * e - e - 1.0;
        let b2 = 1.0 + 1.0 / (e * e) - 1.0 / e;
        let hand = (a1 + a2) / (a2 * b1 + a1 * b2);
        assert!((ev.gamma - hand).abs() < 1e-12);
        assert!((ev.gamma - 1.104791).abs() < 1e-6);
        assert!(!ev.warnings.is_empty());
    }

    #[test]
    fn boundary_conditions_hold() {
        let spec = r1(Mode::Impulse);
        let band = BandPolicy::impulse(-2.0, -0.8, 0.2, 1.0);
        let ev = evaluate(&spec, &band, &EvalOptions::default()).unwrap();
        let v = |x| ev.value(x).unwrap();
        assert!((v(-2.0) - v(-0.8) - (1.0 + 0.5 * 1.2)).abs() < 1e-8);
        assert!((v(1.0) - v(0.2) - (1.0 + 0.5 * 0.8)).abs() < 1e-8);
        for x in [-1.9, -1.0, -0.3, 0.0, 0.45, 0.9] {
            assert!(ev.poisson_residual(x).unwrap().abs() < 1e-6, "x = {x}");
        }
    }

    #[test]
    fn anchor_invariance() {
        let spec = r1(Mode::Impulse);
        let band = BandPolicy::impulse(-2.0, -0.8, 0.2, 1.0);
        let a = evaluate(&spec, &band, &EvalOptions::default()).unwrap();
        let b = evaluate(
            &spec,
            &band,
            &EvalOptions {
                anchor: Some(-0.5),
                ..Default::default()
            },
        )
        .unwrap();
        assert!((a.gamma - b.gamma).abs() < 1e-9);
        let shift = a.value(-2.0).unwrap() - b.value(-2.0).unwrap();
        for x in [-1.5, -0.4, 0.3, 1.0] {
            assert!((a.value(x).unwrap() - b.value(x).unwrap() - shift).abs() < 1e-8);
        }
    }

    #[test]
    fn larger_fixed_costs_cost_more() {
        let mut spec = r1(Mode::Impulse);
        let band = BandPolicy::impulse(-2.0, -0.8, 0.2, 1.0);
        let g1 = evaluate(&spec, &band, &EvalOptions::default()).unwrap().gamma;
        spec.up_fixed *= 2.0;
        spec.down_fixed *= 2.0;
        let g2 = evaluate(&spec, &band, &EvalOptions::default()).unwrap().gamma;
        assert!(g2 > g1);
    }

    #[test]
    fn reflecting_band_slopes() {
        let spec = r1(Mode::Singular);
        let b = (1.0 - (-1f64).exp()).sqrt();
        let band = BandPolicy::singular((1.0 - b).ln(), (1.0 + b).ln());
        let ev = evaluate(&spec, &band, &EvalOptions::default()).unwrap();
        assert!((ev.gamma - ((1.0 + b).ln() + 0.5)).abs() < 1e-9);
        assert!((ev.slope(band.lower_trigger).unwrap() + 0.5).abs() < 1e-8);
        assert!((ev.slope(band.upper_trigger).unwrap() - 0.5).abs() < 1e-8);
        let wide = BandPolicy::singular(band.lower_trigger - 0.5, band.upper_trigger + 0.5);
        assert!(evaluate(&spec, &wide, &EvalOptions::default()).unwrap().gamma > ev.gamma);
    }

    #[test]
    fn extension_is_continuous() {
        let spec = r1(Mode::Impulse);
        let band = BandPolicy::impulse(-2.0, -0.8, 0.2, 1.0);
        let ev = evaluate(&spec, &band, &EvalOptions::default()).unwrap();
        let f = ev.extend().unwrap();
        let eps = 1e-12;
        assert!((f.value(-2.0 - eps).unwrap() - f.value(-2.0).unwrap()).abs() < 1e-10);
        assert!((f.value(1.0 + eps).unwrap() - f.value(1.0).unwrap()).abs() < 1e-10);
        assert_eq!(f.slope(-3.0).unwrap(), -0.5);
        assert_eq!(f.slope(4.0).unwrap(), 0.5);
    }

    #[test]
    fn tabulation_modes_agree() {
        let spec = r1(Mode::Impulse);
        let band = BandPolicy::impulse(-2.0, -0.8, 0.2, 1.0);
        let ev = evaluate(&spec, &band, &EvalOptions::default()).unwrap();
        let a = ev.tabulate(50, Execution::Parallel).unwrap();
        let b = ev.tabulate(50, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].x, -2.0);
        assert_eq!(a[49].x, 1.0);
        assert!(a.iter().all(|r| (r.generator_plus_cost - ev.gamma).abs() < 1e-6));
        assert!(ev.tabulate(1, Execution::Sequential).is_err());
    }

    #[test]
    fn rejects_bad_band_and_zero_drift() {
        let spec = r1(Mode::Impulse);
        assert!(evaluate(&spec, &BandPolicy::impulse(1.0, 0.0, 2.0, 3.0), &EvalOptions::default()).is_err());
        let mut z = spec.clone();
        z.mu = 0.0;
        assert!(matches!(
            evaluate(&z, &BandPolicy::impulse(-2.0, -1.0, 1.0, 2.0), &EvalOptions::default()),
            Err(Error::Unsupported(_))
        ));
    }
}
