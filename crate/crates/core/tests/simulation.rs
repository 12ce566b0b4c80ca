//! Path-level invariants of the simulator, read back from its trace.

use std::path::PathBuf;

use control_band::exec::Execution;
use control_band::gcurve::SolverOptions;
use control_band::impulse::BandPolicy;
use control_band::model::{HoldingCost, Mode, ProblemSpec};
use control_band::sim::{simulate_traced, simulate_with, SimConfig, SimResult};

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

fn short() -> SimConfig {
    SimConfig {
        dt: 1e-3,
        horizon: 200.0,
        burn_in: 10.0,
        replications: 4,
        seed: 7,
        z0: None,
    }
}

struct Trace {
    rows: Vec<[f64; 3]>,
    result: SimResult,
}

fn trace(spec: &ProblemSpec, band: &BandPolicy, cfg: &SimConfig, name: &str) -> Trace {
    let path: PathBuf = std::env::temp_dir().join(format!("control-band-{}-{name}.csv", std::process::id()));
    let result = simulate_traced(spec, band, cfg, Execution::Sequential, &path, 1).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).ok();
    let rows = text
        .lines()
        .skip(1)
        .map(|line| {
            let v: Vec<f64> = line.split(',').map(|t| t.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .collect();
    Trace { rows, result }
}

#[test]
fn reflected_path_stays_in_band_and_touches_both_barriers() {
    let spec = r1(Mode::Singular);
    let band = BandPolicy::singular(-1.5, 0.5);
    let t = trace(&spec, &band, &short(), "singular");
    assert_eq!(t.rows.len(), 200_001);
    assert!(t.rows.iter().all(|r| (-1.5..=0.5).contains(&r[1])));
    assert!(t.rows.iter().any(|r| r[1] == -1.5));
    assert!(t.rows.iter().any(|r| r[1] == 0.5));
}

#[test]
fn impulse_path_lands_on_targets() {
    let spec = r1(Mode::Impulse);
    let band = BandPolicy::impulse(-2.0, -1.0, 0.5, 1.5);
    let t = trace(&spec, &band, &short(), "impulse");
    assert!(t.rows.iter().all(|r| (-2.0..=1.5).contains(&r[1])));
    let jumps = t.rows.windows(2).filter(|w| (w[1][1] - w[0][1]).abs() > 0.4).count();
    let landings = t
        .rows
        .windows(2)
        .filter(|w| (w[1][1] - w[0][1]).abs() > 0.4)
        .filter(|w| w[1][1] == -1.0 || w[1][1] == 0.5)
        .count();
    assert!(jumps > 10);
    assert_eq!(jumps, landings);
}

#[test]
fn cumulative_cost_matches_first_replication() {
    let spec = r1(Mode::Impulse);
    let band = BandPolicy::impulse(-2.0, -1.0, 0.5, 1.5);
    let cfg = short();
    let t = trace(&spec, &band, &cfg, "cost");
    assert!(t.rows.windows(2).all(|w| w[1][2] >= w[0][2]));
    let last = t.rows.last().unwrap();
    let rate = last[2] / (cfg.horizon - cfg.burn_in);
    let first = t.result.replications[0].average_cost;
    assert!((rate - first).abs() <= 1e-9 * first, "{rate} vs {first}");
}

#[test]
fn tracing_does_not_change_results() {
    let spec = r1(Mode::Impulse);
    let band = BandPolicy::impulse(-2.0, -1.0, 0.5, 1.5);
    let cfg = short();
    let traced = trace(&spec, &band, &cfg, "same").result;
    let plain = simulate_with(&spec, &band, &cfg, Execution::Parallel).unwrap();
    assert_eq!(traced.ac_mean, plain.ac_mean);
    assert_eq!(traced.ac_stderr, plain.ac_stderr);
}

#[test]
fn halving_the_step_keeps_the_estimate() {
    let spec = r1(Mode::Impulse);
    let sol = control_band::solve(&spec, SolverOptions::default()).unwrap();
    let base = SimConfig {
        horizon: 2000.0,
        burn_in: 50.0,
        replications: 8,
        ..short()
    };
    for dt in [1e-3, 5e-4] {
        let r = simulate_with(&spec, &sol.policy, &SimConfig { dt, ..base }, Execution::Parallel).unwrap();
        let gap = (r.ac_mean - sol.gamma).abs();
        assert!(
            gap <= 4.0 * r.ac_stderr + 0.01,
            "dt = {dt}: {} vs {}",
            r.ac_mean,
            sol.gamma
        );
    }
}
