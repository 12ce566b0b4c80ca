//! JSON problem files.

use std::path::Path;

use control_band::error::Result as CoreResult;
use control_band::gcurve::SolverOptions;
use control_band::model::{Family, HoldingCost, Mode, ProblemSpec};
use control_band::sim::SimConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub mu: f64,
    pub sigma2: f64,
    #[serde(rename = "K")]
    pub up_fixed: f64,
    #[serde(rename = "k")]
    pub up_unit: f64,
    #[serde(rename = "L")]
    pub down_fixed: f64,
    pub ell: f64,
    pub mode: Mode,
    pub holding: Holding,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub sim: SimConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum Holding {
    Linear {
        p: f64,
        c: f64,
        #[serde(default)]
        a: f64,
    },
    Quadratic {
        q: f64,
        #[serde(default)]
        center: f64,
    },
    Power {
        exponent: f64,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        center: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Holding {
    /// Zero slopes are let through so that `h ≡ 0` can be evaluated; the
    /// solvers still reject them during validation.
    pub fn build(&self) -> CoreResult<HoldingCost> {
        match *self {
            Holding::Linear { p, c, a } if p >= 0.0 && c >= 0.0 && a.is_finite() => {
                Ok(HoldingCost::from_family(Family::Linear {
                    backlog: p,
                    excess: c,
                    kink: a,
                }))
            }
            Holding::Linear { p, c, a } => HoldingCost::linear(p, c, a),
            Holding::Quadratic { q, center } => HoldingCost::quadratic(q, center),
            Holding::Power {
                exponent,
                scale,
                center,
            } => HoldingCost::power(exponent, scale, center),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }

    pub fn spec(&self) -> CoreResult<ProblemSpec> {
        Ok(ProblemSpec {
            mu: self.mu,
            sigma2: self.sigma2,
            up_fixed: self.up_fixed,
            up_unit: self.up_unit,
            down_fixed: self.down_fixed,
            down_unit: self.ell,
            holding: self.holding.build()?,
            mode: self.mode,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> serde_json::Result<Config> {
        serde_json::from_str(text)
    }

    const R1: &str = r#"{"mu": 1, "sigma2": 2, "K": 1, "k": 0.5, "L": 1, "ell": 0.5,
        "mode": "impulse", "holding": {"family": "linear", "p": 1, "c": 1, "a": 0}}"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = parse(R1).unwrap();
        let spec = cfg.spec().unwrap();
        assert_eq!(spec.mode, Mode::Impulse);
        assert_eq!(spec.holding.value(-2.0), 2.0);
        assert_eq!(cfg.sim, SimConfig::default());
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(parse(&R1.replace("\"mu\"", "\"drift\": 1, \"mu\"")).is_err());
        assert!(parse(&R1.replace("\"a\": 0", "\"a\": 0, \"b\": 1")).is_err());
        assert!(parse(&R1.replace("}}", "}, \"solver\": {\"tol\": 1}}")).is_err());
    }

    #[test]
    fn optional_sections() {
        let text = R1.replace("}}", "}, \"solver\": {\"tol_root\": 1e-10}, \"sim\": {\"seed\": 7}}");
        let cfg = parse(&text).unwrap();
        assert_eq!(cfg.solver.tol_root, 1e-10);
        assert_eq!(cfg.sim.seed, 7);
    }

    #[test]
    fn holding_families() {
        let q = Holding::Quadratic { q: 0.5, center: 1.0 }.build().unwrap();
        assert_eq!(q.value(3.0), 2.0);
        let zero = Holding::Linear { p: 0.0, c: 0.0, a: 0.0 }.build().unwrap();
        assert_eq!(zero.value(-3.0), 0.0);
        assert!(Holding::Linear {
            p: -1.0,
            c: 1.0,
            a: 0.0
        }
        .build()
        .is_err());
        assert!(Holding::Quadratic { q: 0.0, center: 0.0 }.build().is_err());
    }
}
