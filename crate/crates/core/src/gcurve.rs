//! The two-parameter family of solutions to the differentiated Poisson
//! equation `(σ²/2) g'' + μ g' + h' = 0`:
//!
//! ```text
//! g(x) = A - B e^{-λ(x-a)} - (λ/μ) ∫_a^x h(y) e^{-λ(x-y)} dy
//! ```
//!
//! `A` is called the *level* and `B` the *shape* of a curve. Derivatives are
//! expressed through the slope factor
//!
//! ```text
//! F(B, x) = B - (1/μ) ∫_a^x h'(y) e^{λ(y-a)} dy,    g'(x) = λ F(B, x) e^{-λ(x-a)}.
//! ```
//!
//! Integrating the ODE once gives `(σ²/2) g' + μ g + h = μ A`, so
//! `g(x) = A - h(x)/μ - F(B, x) e^{-λ(x-a)}`. Every evaluation goes through
//! that form: a single quadrature whose exponential weights never exceed one
//! inside the integral. The direct form above is kept as
//! [`GCurve::value_direct`] for cross-checking.
//!
//! Everything here assumes `μ > 0`; solvers reflect negative-drift problems
//! before they get here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Mode, ProblemSpec};
use crate::quad::Simpson;
use crate::roots::{self, Probe, RootTol};

/// Magnitude beyond which a curve value is treated as having left the
/// bounded region where bands live.
const VALUE_CAP: f64 = 1e12;

/// Numerical settings shared by the solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Absolute quadrature tolerance.
    pub tol_quad: f64,
    /// Absolute tolerance on roots.
    pub tol_root: f64,
    pub max_depth: u32,
    pub max_bracket_expansions: usize,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_quad: 1e-10,
            tol_root: 1e-12,
            max_depth: 60,
            max_bracket_expansions: 80,
            max_iterations: 200,
        }
    }
}

impl SolverOptions {
    pub fn simpson(&self) -> Simpson {
        Simpson {
            tol: self.tol_quad,
            max_depth: self.max_depth,
            ..Simpson::default()
        }
    }

    pub fn root(&self) -> RootTol {
        RootTol {
            x: self.tol_root,
            f: 0.0,
            max_iter: self.max_iterations,
        }
    }
}

/// Local minimizer `x1(B) <= a` and local maximizer `x2(B) > a` of `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremaPair {
    #[serde(rename = "x1")]
    pub trough: f64,
    #[serde(rename = "x2")]
    pub peak: f64,
    /// Set when the nonnegativity constraint pins the minimizer at zero.
    #[serde(rename = "x1_clamped_at_zero")]
    pub trough_clamped: bool,
}

impl ExtremaPair {
    pub(crate) fn mirrored(self) -> Self {
        ExtremaPair {
            trough: -self.peak,
            peak: -self.trough,
            trough_clamped: self.trough_clamped,
        }
    }
}

/// A shape constant `B`.
///
/// Left of the minimizer the curves depend on `B̄ - B`, which for shapes
/// within rounding of `B̄` is lost in `B` itself. A shape made with
/// [`Shape::below`] carries that distance exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub value: f64,
    deficit: Option<f64>,
}

impl Shape {
    /// The shape `limit - deficit`, remembering `deficit`.
    pub fn below(limit: f64, deficit: f64) -> Self {
        Shape {
            value: limit - deficit,
            deficit: Some(deficit),
        }
    }
}

impl From<f64> for Shape {
    fn from(value: f64) -> Self {
        Shape { value, deficit: None }
    }
}

/// Evaluation context for the curve family of one problem.
#[derive(Debug, Clone)]
pub struct Curves<'a> {
    spec: &'a ProblemSpec,
    opts: SolverOptions,
    quad: Simpson,
    lambda: f64,
    mu: f64,
    a: f64,
    nonneg: bool,
    /// `B̄` (backlog) or `B̄₁` (nonnegative); the shape beyond which the
    /// minimizer stops existing, respectively gets clamped at zero.
    shape_bound: f64,
}

impl<'a> Curves<'a> {
    /// Builds the context; the nonnegative variant is chosen from the mode.
    pub fn new(spec: &'a ProblemSpec, opts: SolverOptions) -> Result<Self> {
        Self::with_domain(spec, opts, spec.mode == Mode::NonNegImpulse)
    }

    pub fn with_domain(spec: &'a ProblemSpec, opts: SolverOptions, nonneg: bool) -> Result<Self> {
        let lambda = spec.lambda();
        if !(spec.mu > 0.0) || !lambda.is_finite() {
            return Err(Error::Domain(format!(
                "curve family needs mu > 0 and finite lambda (mu = {}, sigma2 = {})",
                spec.mu, spec.sigma2
            )));
        }
        let mut curves = Curves {
            spec,
            opts,
            quad: opts.simpson(),
            lambda,
            mu: spec.mu,
            a: spec.minimizer(),
            nonneg,
            shape_bound: f64::NAN,
        };
        curves.shape_bound = if nonneg {
            curves.clamp_threshold()?
        } else {
            curves.compute_shape_limit()?
        };
        Ok(curves)
    }

    pub fn spec(&self) -> &'a ProblemSpec {
        self.spec
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn quadrature(&self) -> &Simpson {
        &self.quad
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn is_nonneg(&self) -> bool {
        self.nonneg
    }

    pub fn minimizer(&self) -> f64 {
        self.a
    }

    /// `B̄ = -(1/μ) ∫_{-∞}^a h'(y) e^{λ(y-a)} dy`; `+∞` in nonnegative mode.
    pub fn shape_limit(&self) -> f64 {
        if self.nonneg {
            f64::INFINITY
        } else {
            self.shape_bound
        }
    }

    fn compute_shape_limit(&self) -> Result<f64> {
        // Errors in B̄ are amplified by e^{λ(a-x)} left of a.
        let tight = Simpson {
            tol: 1e-4 * self.quad.tol,
            ..self.quad
        };
        let limit = self.tail_with(&tight, self.a)?;
        if !(limit > 0.0) {
            return Err(Error::Domain(format!(
                "shape limit {limit} is not positive; h' must be negative left of a"
            )));
        }
        Ok(limit)
    }

    /// `-(1/μ) ∫_{-∞}^x h'(y) e^{λ(y-x)} dy`, summed over panels that double
    /// in width leftward until they stop contributing.
    fn tail(&self, x: f64) -> Result<f64> {
        self.tail_with(&self.quad, x)
    }

    fn tail_with(&self, quad: &Simpson, x: f64) -> Result<f64> {
        let h = &self.spec.holding;
        let lambda = self.lambda;
        let integrand = |y: f64| h.slope(y) * (lambda * (y - x)).exp();
        // Curve slopes are differenced in x, so the result must vary smoothly
        // with x: tight pieces, and truncation far below the tolerance.
        let piece_quad = Simpson {
            tol: quad.tol / 16.0,
            ..*quad
        };
        let cutoff = 1e-3 * quad.tol;
        let mut near = 1.0 / lambda;
        let mut total = piece_quad.integrate(integrand, x - near, x)?;
        for _ in 0..self.opts.max_bracket_expansions {
            let piece = piece_quad.integrate(integrand, x - 2.0 * near, x - near)?;
            if !piece.is_finite() {
                break;
            }
            total += piece;
            if piece.abs() < cutoff {
                return Ok(-total / self.mu);
            }
            near *= 2.0;
        }
        Err(Error::Quadrature { bound: total.abs() })
    }

    /// `B̄₁ = -(1/μ) ∫_0^a h'(y) e^{λ(y-a)} dy`, zero when `a <= 0`.
    pub fn clamp_threshold(&self) -> Result<f64> {
        if self.a <= 0.0 {
            return Ok(0.0);
        }
        let h = &self.spec.holding;
        let (a, lambda) = (self.a, self.lambda);
        let v = self.quad.integrate(|y| h.slope(y) * (lambda * (y - a)).exp(), 0.0, a)?;
        Ok(-v / self.mu)
    }

    /// The slope factor `F(B, x)`.
    ///
    /// Left of `a` in backlog mode this is `(B - B̄) + e^{λ(x-a)} T(x)` with `T`
    /// the tail integral, which stays accurate however far left `x` lies.
    pub fn slope_factor(&self, shape: impl Into<Shape>, x: f64) -> Result<f64> {
        let shape = shape.into();
        if !x.is_finite() {
            return Err(Error::Domain(format!("slope factor at non-finite x = {x}")));
        }
        if x < self.a && !self.nonneg {
            return Ok((self.lambda * (x - self.a)).exp() * self.tail(x)? - self.deficit(shape));
        }
        let h = &self.spec.holding;
        let (a, lambda) = (self.a, self.lambda);
        let i = self.quad.integrate(|y| h.slope(y) * (lambda * (y - a)).exp(), a, x)?;
        Ok(shape.value - i / self.mu)
    }

    /// `B̄ - B`.
    pub(crate) fn deficit(&self, shape: Shape) -> f64 {
        shape.deficit.unwrap_or(self.shape_bound - shape.value)
    }

    /// `F(B, x) e^{-λ(x-a)} = g'(x) / λ`, with the weight anchored at `x`.
    fn scaled_slope(&self, shape: Shape, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("curve slope at non-finite x = {x}")));
        }
        if x < self.a && !self.nonneg {
            return Ok(self.tail(x)? - self.deficit(shape) * (self.lambda * (self.a - x)).exp());
        }
        let h = &self.spec.holding;
        let (a, lambda) = (self.a, self.lambda);
        let i = self.quad.integrate(|y| h.slope(y) * (lambda * (y - x)).exp(), a, x)?;
        Ok(shape.value * (lambda * (a - x)).exp() - i / self.mu)
    }

    pub fn curve(&self, level: f64, shape: impl Into<Shape>) -> GCurve<'_> {
        GCurve {
            curves: self,
            level,
            shape: shape.into(),
        }
    }

    /// Minimizer and maximizer of `g` for the given shape.
    pub fn extrema(&self, shape: impl Into<Shape>) -> Result<ExtremaPair> {
        self.extrema_in(shape, self.nonneg)
    }

    /// [`Curves::extrema`] with an explicit choice of domain.
    pub fn extrema_in(&self, shape: impl Into<Shape>, nonneg: bool) -> Result<ExtremaPair> {
        let shape = shape.into();
        if !(shape.value > 0.0) || !shape.value.is_finite() {
            return Err(Error::Domain(format!("shape {} must be positive", shape.value)));
        }
        let a = self.a;
        let step = 1.0 / self.lambda;
        let f = |x: f64| self.slope_factor(shape, x);
        let at_a = Probe::new(a, shape.value);
        let tol = self.opts.root();

        let (trough, trough_clamped) = if nonneg {
            let threshold = if self.nonneg {
                self.shape_bound
            } else {
                self.clamp_threshold()?
            };
            if a <= 0.0 || shape.value >= threshold {
                (0.0, true)
            } else {
                let lo = Probe::new(0.0, shape.value - threshold);
                (roots::brent(f, lo, at_a, tol)?, false)
            }
        } else {
            let (limit, exists) = if self.nonneg {
                let limit = self.compute_shape_limit()?;
                (limit, shape.value < limit)
            } else {
                (self.shape_bound, self.deficit(shape) > 0.0)
            };
            if !exists {
                return Err(Error::Domain(format!(
                    "shape {} is not below the limit {limit}; the minimizer does not exist",
                    shape.value
                )));
            }
            let (inner, outer) = roots::expand(f, at_a, -step, self.opts.max_bracket_expansions)?;
            (roots::brent(f, outer, inner, tol)?, false)
        };

        let (inner, outer) = roots::expand(f, at_a, step, self.opts.max_bracket_expansions)?;
        let peak = roots::brent(f, inner, outer, tol)?;
        Ok(ExtremaPair {
            trough,
            peak,
            trough_clamped,
        })
    }
}

/// One member `g_{A,B}` of the family.
#[derive(Debug, Clone, Copy)]
pub struct GCurve<'a> {
    curves: &'a Curves<'a>,
    /// `A`
    pub level: f64,
    /// `B`
    pub shape: Shape,
}

impl<'a> GCurve<'a> {
    pub fn value(&self, x: f64) -> Result<f64> {
        let c = self.curves;
        let v = self.level - c.spec.holding.value(x) / c.mu - c.scaled_slope(self.shape, x)?;
        if !v.is_finite() || v.abs() > VALUE_CAP {
            return Err(Error::Domain(format!(
                "curve value at x = {x} leaves the bounded region (|g| = {:.3e})",
                v.abs()
            )));
        }
        Ok(v)
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        let c = self.curves;
        Ok(c.lambda * c.scaled_slope(self.shape, x)?)
    }

    /// Evaluates the defining integral directly. Loses accuracy far left of
    /// `a`, where both exponential terms grow; meant for checks only.
    pub fn value_direct(&self, x: f64) -> Result<f64> {
        let c = self.curves;
        let h = &c.spec.holding;
        let (a, lambda) = (c.a, c.lambda);
        let i = c.quad.integrate(|y| h.value(y) * (-lambda * (x - y)).exp(), a, x)?;
        Ok(self.level - self.shape.value * (-lambda * (x - a)).exp() - lambda / c.mu * i)
    }

    /// `∫_lo^hi g(x) dx` using the once-integrated ODE; exact up to the
    /// accuracy of `h`'s integral and the two endpoint values.
    pub fn integral(&self, lo: f64, hi: f64) -> Result<f64> {
        let c = self.curves;
        let hint = c.spec.holding.integral(&c.quad, lo, hi)?;
        let (glo, ghi) = (self.value(lo)?, self.value(hi)?);
        Ok(self.level * (hi - lo) - hint / c.mu - (ghi - glo) / c.lambda)
    }

    /// `∫_lo^hi g(x) dx` by adaptive quadrature of point values.
    pub fn integral_by_quadrature(&self, lo: f64, hi: f64) -> Result<f64> {
        let c = self.curves;
        c.quad
            .integrate_split(|x| self.value(x).unwrap_or(f64::NAN), lo, hi, &[c.a])
    }
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

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    // closed forms for h = |x|, λ = μ = 1:
    //   F(B, x) = B - (1 - e^x) for x < 0, B - (e^x - 1) for x > 0
    //   g(x)    = A - x + 1 - (B + 1) e^{-x} for x >= 0
    #[test]
    fn value_matches_closed_form() {
        let spec = r1();
        let c = Curves::new(&spec, SolverOptions::default()).unwrap();
        let g = c.curve(2.0, 0.5);
        assert!(close(g.value(0.0).unwrap(), 1.5, 1e-14));
        assert!(close(g.value(1.0).unwrap(), 1.448181, 1e-6));
        assert!(close(
            g.value(1.0).unwrap(),
            2.0 - 1.0 + 1.0 - 1.5 * (-1f64).exp(),
            1e-10
        ));
        for x in [0.3f64, 1.7, 4.0] {
            let closed = 2.0 - x + 1.0 - 1.5 * (-x).exp();
            assert!(close(g.value(x).unwrap(), closed, 1e-9), "x = {x}");
            assert!(close(g.value_direct(x).unwrap(), closed, 1e-9), "x = {x}");
        }
    }

    #[test]
    fn value_at_trough_is_minus_h_over_mu() {
        let spec = r1();
        let c = Curves::new(&spec, SolverOptions::default()).unwrap();
        let g = c.curve(0.0, 0.5);
        assert!(close(g.value(0.5f64.ln()).unwrap(), -std::f64::consts::LN_2, 1e-10));
    }

    #[test]
    fn slope_factor_closed_forms() {
        let spec = r1();
        let c = Curves::new(&spec, SolverOptions::default()).unwrap();
        assert_eq!(c.slope_factor(0.5, 0.0).unwrap(), 0.5);
        assert!(close(c.slope_factor(0.5, 0.5f64.ln()).unwrap(), 0.0, 1e-11));
        assert!(close(c.slope_factor(0.5, 1.5f64.ln()).unwrap(), 0.0, 1e-11));
        assert!(close(
            c.slope_factor(0.5, -1.0).unwrap(),
            0.5 - (1.0 - (-1f64).exp()),
            1e-11
        ));
    }

    #[test]
    fn derivative_values() {
        let spec = r1();
        let c = Curves::new(&spec, SolverOptions::default()).unwrap();
        let g = c.curve(0.3, 0.5);
        assert!(close(g.derivative(0.0).unwrap(), 0.5, 1e-15));
        assert!(close(g.derivative(0.5f64.ln()).unwrap(), 0.0, 1e-10));
        assert!(g.derivative(0.2).unwrap() > 0.0);
    }

    #[test]
    fn shape_limits() {
        let spec = r1();
        let c = Curves::new(&spec, SolverOptions::default()).unwrap();
        assert!(close(c.shape_limit(), 1.0, 1e-9));

        let mut quad = r1();
        quad.holding = HoldingCost::quadratic(1.0, 0.0).unwrap();
        let c = Curves::new(&quad, SolverOptions::default()).unwrap();
        assert!(close(c.shape_limit(), 2.0, 1e-9));

        let mut nn = r1();
        nn.mode = Mode::NonNegImpulse;
        nn.holding = HoldingCost::linear(1.0, 1.0, 1.0).unwrap();
        let c = Curves::new(&nn, SolverOptions::default()).unwrap();
        assert!(close(c.clamp_threshold().unwrap(), 1.0 - (-1f64).exp(), 1e-10));
        assert!(close(c.clamp_threshold().unwrap(), 0.632121, 1e-6));
    }

    #[test]
    fn extrema_closed_forms() {
        let spec = r1();
        let c = Curves::new(&spec, SolverOptions::default()).unwrap();
        let e = c.extrema(0.5).unwrap();
        assert!(close(e.trough, 0.5f64.ln(), 1e-11));
        assert!(close(e.peak, 1.5f64.ln(), 1e-11));
        assert!(!e.trough_clamped);

        let e = c.extrema(1e-7).unwrap();
        assert!(e.trough.abs() < 1e-6 && e.peak.abs() < 1e-6);
        assert!(e.trough < 0.0 && e.peak > 0.0);

        assert!(matches!(c.extrema(1.0 + 1e-9), Err(Error::Domain(_))));
        assert!(matches!(c.extrema(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn nonneg_extrema_clamp() {
        let mut nn = r1();
        nn.mode = Mode::NonNegImpulse;
        nn.holding = HoldingCost::linear(1.0, 1.0, 1.0).unwrap();
        let c = Curves::new(&nn, SolverOptions::default()).unwrap();
        let e = c.extrema(0.8).unwrap();
        assert_eq!(e.trough, 0.0);
        assert!(e.trough_clamped);
        // below the threshold the minimizer is interior: x1 = 1 + ln(1 - B) for this h
        let e = c.extrema(0.3).unwrap();
        assert!(!e.trough_clamped);
        assert!(close(e.trough, 1.0 + 0.7f64.ln(), 1e-11));
    }

    #[test]
    fn integral_identity_matches_quadrature() {
        let spec = r1();
        let c = Curves::new(&spec, SolverOptions::default()).unwrap();
        let g = c.curve(1.2, 0.9);
        let a = g.integral(-1.5, 2.0).unwrap();
        let b = g.integral_by_quadrature(-1.5, 2.0).unwrap();
        assert!(close(a, b, 1e-9), "{a} vs {b}");
    }

    #[test]
    fn rejects_nonpositive_drift() {
        let mut spec = r1();
        spec.mu = -1.0;
        assert!(Curves::new(&spec, SolverOptions::default()).is_err());
    }
}
