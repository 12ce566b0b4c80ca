//! Problem instances: drift, variance, adjustment costs and the convex
//! holding-cost rate `h` with its minimizer `a`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::Simpson;

/// Which control problem an instance describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Fixed plus proportional costs in both directions; backlog allowed.
    Impulse,
    /// Proportional costs only (`K = L = 0`).
    Singular,
    /// Impulse control with the inventory kept nonnegative.
    #[serde(rename = "nonneg")]
    NonNegImpulse,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Impulse => "impulse",
            Mode::Singular => "singular",
            Mode::NonNegImpulse => "nonneg",
        })
    }
}

type CostFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied holding cost. Both `h` and `h'` must be given.
#[derive(Clone)]
pub struct CustomCost {
    pub value: CostFn,
    pub slope: CostFn,
    pub minimizer: f64,
}

impl fmt::Debug for CustomCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomCost")
            .field("minimizer", &self.minimizer)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum Family {
    /// `backlog * (a - x)` left of `a`, `excess * (x - a)` right of it.
    Linear {
        backlog: f64,
        excess: f64,
        kink: f64,
    },
    /// `curvature * (x - center)^2`.
    Quadratic {
        curvature: f64,
        center: f64,
    },
    /// `scale * |x - center|^exponent`.
    Power {
        exponent: f64,
        scale: f64,
        center: f64,
    },
    Custom(CustomCost),
}

/// Holding-cost rate `h` together with its derivative and minimizer.
#[derive(Debug, Clone)]
pub struct HoldingCost {
    family: Family,
}

impl HoldingCost {
    /// Piecewise-linear cost with slopes `-p` and `c` meeting at `a`.
    pub fn linear(p: f64, c: f64, a: f64) -> Result<Self> {
        if !(p > 0.0 && c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "linear holding slopes must be positive (p = {p}, c = {c})"
            )));
        }
        if !a.is_finite() {
            return Err(Error::InvalidParameter(format!("kink location {a} is not finite")));
        }
        Ok(Self::from_family(Family::Linear {
            backlog: p,
            excess: c,
            kink: a,
        }))
    }

    pub fn quadratic(q: f64, center: f64) -> Result<Self> {
        if !(q > 0.0) || !center.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "quadratic holding needs q > 0 and a finite center (q = {q}, center = {center})"
            )));
        }
        Ok(Self::from_family(Family::Quadratic { curvature: q, center }))
    }

    pub fn power(exponent: f64, scale: f64, center: f64) -> Result<Self> {
        if !(exponent >= 1.0) || !(scale > 0.0) || !center.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "power holding needs exponent >= 1 and scale > 0 (exponent = {exponent}, scale = {scale})"
            )));
        }
        Ok(Self::from_family(Family::Power {
            exponent,
            scale,
            center,
        }))
    }

    pub fn custom<H, D>(value: H, slope: D, minimizer: f64) -> Self
    where
        H: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::from_family(Family::Custom(CustomCost {
            value: Arc::new(value),
            slope: Arc::new(slope),
            minimizer,
        }))
    }

    /// Wraps a family without checking its parameters. Validation reports
    /// any problems later; the evaluator accepts such costs on purpose.
    pub fn from_family(family: Family) -> Self {
        HoldingCost { family }
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// The minimizer `a`.
    pub fn minimizer(&self) -> f64 {
        match &self.family {
            Family::Linear { kink, .. } => *kink,
            Family::Quadratic { center, .. } | Family::Power { center, .. } => *center,
            Family::Custom(c) => c.minimizer,
        }
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match &self.family {
            Family::Linear { backlog, excess, kink } => {
                if x < *kink {
                    backlog * (kink - x)
                } else {
                    excess * (x - kink)
                }
            }
            Family::Quadratic { curvature, center } => {
                let z = x - center;
                curvature * z * z
            }
            Family::Power {
                exponent,
                scale,
                center,
            } => scale * (x - center).abs().powf(*exponent),
            Family::Custom(c) => (c.value)(x),
        }
    }

    /// `h'(x)`; the right derivative at the kink.
    #[inline]
    pub fn slope(&self, x: f64) -> f64 {
        match &self.family {
            Family::Linear { backlog, excess, kink } => {
                if x < *kink {
                    -backlog
                } else {
                    *excess
                }
            }
            Family::Quadratic { curvature, center } => 2.0 * curvature * (x - center),
            Family::Power {
                exponent,
                scale,
                center,
            } => {
                let z = x - center;
                if z == 0.0 {
                    if *exponent == 1.0 {
                        *scale
                    } else {
                        0.0
                    }
                } else {
                    scale * exponent * z.abs().powf(exponent - 1.0) * z.signum()
                }
            }
            Family::Custom(c) => (c.slope)(x),
        }
    }

    /// The cost `x -> h(-x)`.
    pub fn reflect(&self) -> Self {
        let family = match &self.family {
            Family::Linear { backlog, excess, kink } => Family::Linear {
                backlog: *excess,
                excess: *backlog,
                kink: -kink,
            },
            Family::Quadratic { curvature, center } => Family::Quadratic {
                curvature: *curvature,
                center: -center,
            },
            Family::Power {
                exponent,
                scale,
                center,
            } => Family::Power {
                exponent: *exponent,
                scale: *scale,
                center: -center,
            },
            Family::Custom(c) => {
                let (v, s) = (c.value.clone(), c.slope.clone());
                Family::Custom(CustomCost {
                    value: Arc::new(move |x| v(-x)),
                    slope: Arc::new(move |x| -s(-x)),
                    minimizer: -c.minimizer,
                })
            }
        };
        HoldingCost { family }
    }

    /// `∫_lo^hi h(x) dx`, split at the minimizer.
    pub fn integral(&self, q: &Simpson, lo: f64, hi: f64) -> Result<f64> {
        q.integrate_split(|x| self.value(x), lo, hi, &[self.minimizer()])
    }

    fn parameter_problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match &self.family {
            Family::Linear { backlog, excess, kink } => {
                if !(*backlog > 0.0) {
                    out.push(format!("linear backlog slope p = {backlog} must be positive"));
                }
                if !(*excess > 0.0) {
                    out.push(format!("linear excess slope c = {excess} must be positive"));
                }
                if !kink.is_finite() {
                    out.push("linear kink is not finite".into());
                }
            }
            Family::Quadratic { curvature, center } => {
                if !(*curvature > 0.0) {
                    out.push(format!("quadratic curvature q = {curvature} must be positive"));
                }
                if !center.is_finite() {
                    out.push("quadratic center is not finite".into());
                }
            }
            Family::Power {
                exponent,
                scale,
                center,
            } => {
                if !(*exponent >= 1.0) {
                    out.push(format!("power exponent {exponent} must be at least 1"));
                }
                if !(*scale > 0.0) {
                    out.push(format!("power scale {scale} must be positive"));
                }
                if !center.is_finite() {
                    out.push("power center is not finite".into());
                }
            }
            Family::Custom(c) => {
                if !c.minimizer.is_finite() {
                    out.push("custom minimizer is not finite".into());
                }
            }
        }
        out
    }
}

/// A complete problem instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    /// Drift per unit time; must be nonzero.
    pub mu: f64,
    /// Variance per unit time.
    pub sigma2: f64,
    /// Fixed cost per upward adjustment (`K`).
    pub up_fixed: f64,
    /// Cost per unit of upward adjustment (`k`).
    pub up_unit: f64,
    /// Fixed cost per downward adjustment (`L`).
    pub down_fixed: f64,
    /// Cost per unit of downward adjustment (`ℓ`).
    pub down_unit: f64,
    pub holding: HoldingCost,
    pub mode: Mode,
}

impl ProblemSpec {
    /// `λ = 2μ/σ²`.
    pub fn lambda(&self) -> f64 {
        2.0 * self.mu / self.sigma2
    }

    pub fn minimizer(&self) -> f64 {
        self.holding.minimizer()
    }

    /// The mirrored instance: `x -> -x`, `h(x) -> h(-x)`, drift negated and
    /// the upward/downward cost pairs swapped.
    pub fn reflect(&self) -> ProblemSpec {
        ProblemSpec {
            mu: -self.mu,
            sigma2: self.sigma2,
            up_fixed: self.down_fixed,
            up_unit: self.down_unit,
            down_fixed: self.up_fixed,
            down_unit: self.up_unit,
            holding: self.holding.reflect(),
            mode: self.mode,
        }
    }

    /// Runs [`validate_spec`] with default settings and converts a non-empty
    /// report into an error.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate_spec(self, &ValidationOptions::default());
        if report.is_empty() {
            return Ok(());
        }
        if report.has(ViolationKind::LambdaUndefined) {
            return Err(Error::Unsupported(report.to_string()));
        }
        Err(Error::Validation(report.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NonPositiveVariance,
    NonPositiveUnitCost,
    NegativeFixedCost,
    LambdaUndefined,
    ModeMismatch,
    HoldingParameter,
    MinimizerNotZero,
    SlopeSign,
    NotConvex,
    TailDivergent,
    NegativeMinimizer,
}

impl ViolationKind {
    pub fn label(self) -> &'static str {
        match self {
            ViolationKind::NonPositiveVariance => "variance must be positive",
            ViolationKind::NonPositiveUnitCost => "proportional cost must be positive",
            ViolationKind::NegativeFixedCost => "fixed cost must be nonnegative",
            ViolationKind::LambdaUndefined => "lambda undefined",
            ViolationKind::ModeMismatch => "mode does not match fixed costs",
            ViolationKind::HoldingParameter => "invalid holding-cost parameter",
            ViolationKind::MinimizerNotZero => "h(a) must be 0",
            ViolationKind::SlopeSign => "h' has the wrong sign",
            ViolationKind::NotConvex => "h is not convex",
            ViolationKind::TailDivergent => "tail integral diverges",
            ViolationKind::NegativeMinimizer => "minimizer must be nonnegative",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.label(), self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    fn push(&mut self, kind: ViolationKind, detail: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            detail: detail.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Settings for the sampled checks in [`validate_spec`].
#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    /// Half-width of the sampling window around `a`.
    pub half_width: f64,
    pub points: usize,
    /// The tail integral has converged once a segment adds less than this.
    pub tail_increment: f64,
    pub max_tail_segments: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            half_width: 20.0,
            points: 401,
            tail_increment: 1e-12,
            max_tail_segments: 64,
        }
    }
}

/// Checks every invariant of a problem instance. Never fails; an empty
/// report means all checks passed.
pub fn validate_spec(spec: &ProblemSpec, opts: &ValidationOptions) -> ValidationReport {
    use ViolationKind::*;
    let mut report = ValidationReport::default();

    if !(spec.sigma2 > 0.0) {
        report.push(NonPositiveVariance, format!("sigma2 = {}", spec.sigma2));
    }
    if !(spec.up_unit > 0.0) {
        report.push(NonPositiveUnitCost, format!("k = {}", spec.up_unit));
    }
    if !(spec.down_unit > 0.0) {
        report.push(NonPositiveUnitCost, format!("ell = {}", spec.down_unit));
    }
    if !(spec.up_fixed >= 0.0) {
        report.push(NegativeFixedCost, format!("K = {}", spec.up_fixed));
    }
    if !(spec.down_fixed >= 0.0) {
        report.push(NegativeFixedCost, format!("L = {}", spec.down_fixed));
    }
    let lambda = spec.lambda();
    if spec.mu == 0.0 || !lambda.is_finite() || lambda == 0.0 {
        report.push(
            LambdaUndefined,
            format!("unsupported drift: lambda = 2 mu / sigma2 with mu = {}", spec.mu),
        );
    }
    match spec.mode {
        Mode::Impulse | Mode::NonNegImpulse => {
            if !(spec.up_fixed > 0.0 && spec.down_fixed > 0.0) {
                report.push(
                    ModeMismatch,
                    format!(
                        "{} mode requires K > 0 and L > 0 (K = {}, L = {})",
                        spec.mode, spec.up_fixed, spec.down_fixed
                    ),
                );
            }
        }
        Mode::Singular => {
            if spec.up_fixed != 0.0 || spec.down_fixed != 0.0 {
                report.push(
                    ModeMismatch,
                    format!(
                        "singular mode requires K = L = 0 (K = {}, L = {})",
                        spec.up_fixed, spec.down_fixed
                    ),
                );
            }
        }
    }
    let nonneg = spec.mode == Mode::NonNegImpulse;
    if nonneg && spec.mu < 0.0 {
        report.push(
            LambdaUndefined,
            "nonnegative inventory requires mu > 0; negative drift is unsupported",
        );
    }

    for p in spec.holding.parameter_problems() {
        report.push(HoldingParameter, p);
    }
    let h = &spec.holding;
    let a = h.minimizer();
    if !a.is_finite() {
        return report;
    }
    if nonneg && a < 0.0 {
        report.push(NegativeMinimizer, format!("a = {a}"));
    }
    let ha = h.value(a);
    if ha != 0.0 {
        report.push(MinimizerNotZero, format!("h({a}) = {ha}"));
    }

    // sampled sign and monotonicity of h'
    let lo = if nonneg {
        (a - opts.half_width).max(0.0)
    } else {
        a - opts.half_width
    };
    let hi = a + opts.half_width;
    let n = opts.points.max(3);
    let mut prev: Option<(f64, f64)> = None;
    let mut sign_reported = false;
    let mut convex_reported = false;
    for i in 0..n {
        let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        if x == a {
            continue;
        }
        let s = h.slope(x);
        let hx = h.value(x);
        if !sign_reported && ((x < a && !(s < 0.0)) || (x > a && !(s > 0.0)) || hx < 0.0) {
            report.push(SlopeSign, format!("h'({x}) = {s}, h({x}) = {hx}"));
            sign_reported = true;
        }
        if let Some((px, ps)) = prev {
            if !convex_reported && s < ps - 1e-12 * (1.0 + ps.abs()) {
                report.push(NotConvex, format!("h'({px}) = {ps} > h'({x}) = {s}"));
                convex_reported = true;
            }
        }
        prev = Some((x, s));
    }

    if lambda.is_finite() && lambda != 0.0 && !nonneg {
        if let Err(estimate) = tail_integral(h, lambda, opts) {
            report.push(
                TailDivergent,
                format!("truncated tail integral did not settle (last estimate {estimate:.6e})"),
            );
        }
    }
    report
}

/// `∫ |h'(y)| e^{λ(y-a)} dy` over the half-line on the side where the weight
/// decays, by geometric truncation. `Err` carries the last partial sum.
fn tail_integral(h: &HoldingCost, lambda: f64, opts: &ValidationOptions) -> std::result::Result<f64, f64> {
    let a = h.minimizer();
    let dir = if lambda > 0.0 { -1.0 } else { 1.0 };
    let scale = 1.0 / lambda.abs();
    let q = Simpson::new(1e-13);
    let integrand = |y: f64| h.slope(y).abs() * (lambda * (y - a)).exp();
    let mut total = match q.integrate(integrand, a, a + dir * scale) {
        Ok(v) => v.abs(),
        Err(_) => return Err(f64::NAN),
    };
    let mut near = scale;
    for _ in 0..opts.max_tail_segments {
        let far = 2.0 * near;
        let piece = match q.integrate(integrand, a + dir * near, a + dir * far) {
            Ok(v) => v.abs(),
            Err(_) => return Err(total),
        };
        if !piece.is_finite() {
            return Err(total);
        }
        total += piece;
        if piece < opts.tail_increment {
            return Ok(total);
        }
        near = far;
    }
    Err(total)
}
