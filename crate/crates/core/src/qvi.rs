//! Numerical certificate of optimality for a band.
//!
//! A pair `(f, γ)` bounds the cost of every admissible policy from below when
//!
//! * `Γf(x) + h(x) >= γ` for almost every `x`,
//! * `f(y) - f(x) <= K + k (x - y)` for all `y < x` (no upward adjustment pays),
//! * `f(y) - f(x) <= L + ℓ (y - x)` for all `x < y` (no downward adjustment pays).
//!
//! The verifier checks these on a finite grid for the extended relative
//! value function of a band, together with the standing hypothesis that `f`
//! is continuously differentiable. A slope jump at a trigger is a point mass
//! in `Γf` that no grid sees, so the jumps are measured directly. The
//! pairwise conditions are maxima over all
//! ordered pairs; a running maximum of `f(y) + k y` (resp. minimum of
//! `f(x) - ℓ x`) computes them exactly in one pass.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluator::Evaluation;
use crate::exec::Execution;
use crate::model::Mode;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Distance the grid extends beyond each end of the band.
    pub span: f64,
    pub points: usize,
    pub tol: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            span: 5.0,
            points: 2000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    /// `min (Γf + h - γ)` over the grid.
    pub poisson_min: f64,
    #[serde(rename = "lbK_max")]
    pub upward_max: f64,
    #[serde(rename = "lbL_max")]
    pub downward_max: f64,
    /// `max(k, ℓ, sup |V'|)` over the band.
    pub fprime_bound: f64,
    #[serde(rename = "fprime_sup")]
    pub slope_sup: f64,
    /// Largest `|f'(x+) - f'(x-)|` at a trigger inside the grid.
    pub slope_jump_max: f64,
    pub pass: bool,
    /// Worst Poisson defect inside the band with `f''` from finite
    /// differences instead of the equation itself.
    pub poisson_min_fd: f64,
    pub poisson_argmin: f64,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub points: usize,
    /// Set when a grid point at the kink of `h` was dropped.
    pub kink_skipped: bool,
    pub tol: f64,
}

struct Sample {
    x: f64,
    value: f64,
    slope: f64,
    poisson: f64,
    poisson_fd: Option<f64>,
}

fn build_grid(lo: f64, hi: f64, points: usize, band: [f64; 4], kink: f64) -> (Vec<f64>, bool) {
    let step = (hi - lo) / (points - 1) as f64;
    let mut xs: Vec<f64> = (0..points)
        .map(|i| if i + 1 == points { hi } else { lo + step * i as f64 })
        .chain(band.into_iter().filter(|&b| b >= lo && b <= hi))
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let before = xs.len();
    xs.retain(|&x| (x - kink).abs() > 1e-12 * (1.0 + kink.abs()));
    let skipped = xs.len() != before;
    (xs, skipped)
}

pub fn verify(eval: &Evaluation, grid: &GridSpec) -> Result<VerifyReport> {
    verify_with(eval, grid, Execution::Parallel)
}

pub fn verify_with(eval: &Evaluation, grid: &GridSpec, exec: Execution) -> Result<VerifyReport> {
    if grid.points < 2 || !(grid.span >= 0.0) || !grid.span.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "verification grid needs span >= 0 and at least 2 points (span = {}, points = {})",
            grid.span, grid.points
        )));
    }
    let spec = eval.spec();
    let band = eval.band();
    let f = eval.extend()?;
    let (d, u) = f.bounds();
    let mut lo = d - grid.span;
    if band.mode == Mode::NonNegImpulse {
        lo = lo.max(0.0);
    }
    let hi = u + grid.span;
    let (xs, kink_skipped) = build_grid(lo, hi, grid.points, band.thresholds(), spec.minimizer());

    let gamma = eval.gamma;
    let samples: Vec<Sample> = exec
        .map(xs.len(), |i| -> Result<Sample> {
            let x = xs[i];
            let value = f.value(x)?;
            let slope = f.slope(x)?;
            let h = spec.holding.value(x);
            let poisson = 0.5 * spec.sigma2 * f.curvature(x)? + spec.mu * slope + h - gamma;
            let inside = x > d && x < u;
            let poisson_fd = inside.then(|| eval.poisson_residual(x)).transpose()?;
            Ok(Sample {
                x,
                value,
                slope,
                poisson,
                poisson_fd,
            })
        })
        .into_iter()
        .collect::<Result<_>>()?;

    let (k, ell) = (spec.up_unit, spec.down_unit);
    let (big_k, big_l) = (spec.up_fixed, spec.down_fixed);
    let mut poisson_min = f64::INFINITY;
    let mut poisson_argmin = f64::NAN;
    let mut poisson_min_fd = f64::INFINITY;
    let mut upward_max = f64::NEG_INFINITY;
    let mut downward_max = f64::NEG_INFINITY;
    let mut best_up = f64::NEG_INFINITY;
    let mut least_down = f64::INFINITY;
    let mut slope_sup: f64 = 0.0;
    let mut band_slope_sup: f64 = 0.0;
    for s in &samples {
        if s.poisson < poisson_min {
            poisson_min = s.poisson;
            poisson_argmin = s.x;
        }
        if let Some(p) = s.poisson_fd {
            poisson_min_fd = poisson_min_fd.min(p);
        }
        // pairs y < x, with y ranging over earlier grid points
        upward_max = upward_max.max(best_up - (s.value + k * s.x) - big_k);
        downward_max = downward_max.max((s.value - ell * s.x) - least_down - big_l);
        best_up = best_up.max(s.value + k * s.x);
        least_down = least_down.min(s.value - ell * s.x);
        slope_sup = slope_sup.max(s.slope.abs());
        if s.x >= d && s.x <= u {
            band_slope_sup = band_slope_sup.max(s.slope.abs());
        }
    }
    let fprime_bound = k.max(ell).max(band_slope_sup);
    let (jump_lo, jump_hi) = f.slope_jumps()?;
    let slope_jump_max = [(d, jump_lo), (u, jump_hi)]
        .into_iter()
        .filter(|&(x, _)| x > lo && x < hi)
        .fold(0.0f64, |m, (_, j)| m.max(j.abs()));
    let pass =
        poisson_min >= -grid.tol && upward_max <= grid.tol && downward_max <= grid.tol && slope_jump_max <= grid.tol;
    Ok(VerifyReport {
        poisson_min,
        upward_max,
        downward_max,
        fprime_bound,
        slope_sup,
        slope_jump_max,
        pass,
        poisson_min_fd,
        poisson_argmin,
        grid_lo: lo,
        grid_hi: hi,
        points: samples.len(),
        kink_skipped,
        tol: grid.tol,
    })
}
