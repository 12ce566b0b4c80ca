//! Monte Carlo estimate of the long-run average cost of a band.
//!
//! Each replication runs the Euler scheme `Z += μ dt + σ √dt ξ` and applies
//! the band after every step: impulse bands jump from a trigger to its
//! target and pay at the overshot state, reflecting bands push the state
//! back onto the nearest barrier and pay per unit pushed. Holding cost
//! accrues at the left endpoint of each step. Costs incurred after the
//! burn-in are averaged over the remaining time.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::impulse::BandPolicy;
use crate::model::{Family, HoldingCost, Mode, ProblemSpec};

/// Steps accumulated locally before being added to the running totals.
const BLOCK: u64 = 1 << 16;

/// Normals drawn ahead of the state update, sized to stay in L1.
const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub replications: usize,
    pub seed: u64,
    /// Starting state; midway between the targets when unset.
    pub z0: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            horizon: 1e4,
            burn_in: 100.0,
            replications: 16,
            seed: 42,
            z0: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dt > 0.0
            && self.dt.is_finite()
            && self.horizon.is_finite()
            && self.burn_in >= 0.0
            && self.burn_in < self.horizon
            && self.replications >= 1
            && self.dt <= self.horizon - self.burn_in
            && self.z0.is_none_or(f64::is_finite);
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "simulation needs dt > 0, 0 <= burn_in < horizon, at least one replication \
                 and a finite start (dt = {}, horizon = {}, burn_in = {}, replications = {}, z0 = {:?})",
                self.dt, self.horizon, self.burn_in, self.replications, self.z0
            )))
        }
    }

    fn steps(&self) -> (u64, u64) {
        let total = (self.horizon / self.dt).round() as u64;
        let burn = (self.burn_in / self.dt).round() as u64;
        (total, burn)
    }
}

/// Per-unit-time averages of one replication.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ReplicationStats {
    pub average_cost: f64,
    pub holding_rate: f64,
    pub up_count_rate: f64,
    pub down_count_rate: f64,
    pub up_volume_rate: f64,
    pub down_volume_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub ac_mean: f64,
    pub ac_stderr: f64,
    /// Mean upward and downward adjustments per unit time.
    pub n_up: f64,
    pub n_down: f64,
    /// Mean upward and downward adjustment volume per unit time.
    pub y1_rate: f64,
    pub y2_rate: f64,
    pub holding_rate: f64,
    pub replications: Vec<ReplicationStats>,
}

/// Receives `(t, Z, cumulative cost)` after every step.
trait Recorder {
    /// False when records are discarded, so the bookkeeping compiles away.
    const ACTIVE: bool = true;
    fn record(&mut self, t: f64, z: f64, cost: f64);
}

struct Discard;

impl Recorder for Discard {
    const ACTIVE: bool = false;
    #[inline(always)]
    fn record(&mut self, _: f64, _: f64, _: f64) {}
}

struct Decimated<W: Write> {
    out: W,
    stride: u64,
    count: u64,
    error: Option<std::io::Error>,
}

impl<W: Write> Recorder for Decimated<W> {
    fn record(&mut self, t: f64, z: f64, cost: f64) {
        if self.count.is_multiple_of(self.stride) && self.error.is_none() {
            if let Err(e) = writeln!(self.out, "{t},{z},{cost}") {
                self.error = Some(e);
            }
        }
        self.count += 1;
    }
}

/// Holding cost specialised per family so the hot loop inlines it.
trait Cost: Copy {
    fn at(self, x: f64) -> f64;
}

#[derive(Clone, Copy)]
struct Kinked {
    backlog: f64,
    excess: f64,
    kink: f64,
}

impl Cost for Kinked {
    #[inline(always)]
    fn at(self, x: f64) -> f64 {
        // branch-free; the state keeps crossing the kink
        (self.backlog * (self.kink - x)).max(self.excess * (x - self.kink))
    }
}

#[derive(Clone, Copy)]
struct Parabola {
    curvature: f64,
    center: f64,
}

impl Cost for Parabola {
    #[inline(always)]
    fn at(self, x: f64) -> f64 {
        let z = x - self.center;
        self.curvature * z * z
    }
}

#[derive(Clone, Copy)]
struct General<'a>(&'a HoldingCost);

impl Cost for General<'_> {
    #[inline(always)]
    fn at(self, x: f64) -> f64 {
        self.0.value(x)
    }
}

/// What one step of control did.
#[derive(Default)]
struct Control {
    cost: f64,
    up: f64,
    down: f64,
    up_volume: f64,
    down_volume: f64,
}

trait Rule: Copy {
    fn apply(self, z: &mut f64, out: &mut Control);
}

#[derive(Clone, Copy)]
struct Jumps {
    d: f64,
    big_d: f64,
    big_u: f64,
    u: f64,
    up_fixed: f64,
    up_unit: f64,
    down_fixed: f64,
    down_unit: f64,
}

impl Rule for Jumps {
    #[inline(always)]
    fn apply(self, z: &mut f64, out: &mut Control) {
        if *z <= self.d {
            let amount = self.big_d - *z;
            out.cost += self.up_fixed + self.up_unit * amount;
            out.up += 1.0;
            out.up_volume += amount;
            *z = self.big_d;
        } else if *z >= self.u {
            let amount = *z - self.big_u;
            out.cost += self.down_fixed + self.down_unit * amount;
            out.down += 1.0;
            out.down_volume += amount;
            *z = self.big_u;
        }
    }
}

#[derive(Clone, Copy)]
struct Barriers {
    d: f64,
    u: f64,
    up_unit: f64,
    down_unit: f64,
}

impl Rule for Barriers {
    #[inline(always)]
    fn apply(self, z: &mut f64, out: &mut Control) {
        if *z < self.d {
            let amount = self.d - *z;
            out.cost += self.up_unit * amount;
            out.up_volume += amount;
            out.up += 1.0;
            *z = self.d;
        } else if *z > self.u {
            let amount = *z - self.u;
            out.cost += self.down_unit * amount;
            out.down_volume += amount;
            out.down += 1.0;
            *z = self.u;
        }
    }
}

/// Generator for replication `rep`: the base generator advanced by `rep`
/// jumps of 2^128 draws, so streams never overlap and do not depend on the
/// order in which replications run.
fn stream(seed: u64, rep: usize) -> Xoshiro256PlusPlus {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    for _ in 0..rep {
        rng.jump();
    }
    rng
}

struct Params<'a> {
    mu: f64,
    sigma: f64,
    holding: &'a HoldingCost,
    cfg: &'a SimConfig,
    z0: f64,
}

impl Control {
    fn absorb(&mut self, other: &Control) {
        self.cost += other.cost;
        self.up += other.up;
        self.down += other.down;
        self.up_volume += other.up_volume;
        self.down_volume += other.down_volume;
    }
}

fn replicate<R: Rule, H: Cost, C: Recorder>(
    p: &Params<'_>,
    rule: R,
    cost: H,
    rep: usize,
    recorder: &mut C,
) -> ReplicationStats {
    let mut rng = stream(p.cfg.seed, rep);
    let dt = p.cfg.dt;
    let drift = p.mu * dt;
    let scale = p.sigma * dt.sqrt();
    let (total, burn) = p.cfg.steps();

    let mut z = p.z0;
    let mut trash = Control::default();
    for i in 1..=burn {
        let xi: f64 = rng.sample(StandardNormal);
        z += drift + scale * xi;
        rule.apply(&mut z, &mut trash);
        if C::ACTIVE {
            recorder.record(i as f64 * dt, z, 0.0);
        }
    }

    let mut holding = 0.0;
    let mut control = Control::default();
    let mut cumulative = 0.0;
    let mut noise = [0.0f64; CHUNK];
    let mut first = burn + 1;
    while first <= total {
        let last = total.min(first + BLOCK - 1);
        let mut block_holding = 0.0;
        let mut block = Control::default();
        let mut i = first;
        while i <= last {
            let noise = &mut noise[..(last + 1 - i).min(CHUNK as u64) as usize];
            noise.iter_mut().for_each(|xi| *xi = rng.sample(StandardNormal));
            for &xi in noise.iter() {
                let hz = cost.at(z);
                z += drift + scale * xi;
                block_holding += hz;
                if C::ACTIVE {
                    let before = block.cost;
                    rule.apply(&mut z, &mut block);
                    cumulative += hz * dt + (block.cost - before);
                    recorder.record(i as f64 * dt, z, cumulative);
                } else {
                    rule.apply(&mut z, &mut block);
                }
                i += 1;
            }
        }
        holding += block_holding * dt;
        control.absorb(&block);
        first = last + 1;
    }

    let span = (total - burn) as f64 * dt;
    ReplicationStats {
        average_cost: (holding + control.cost) / span,
        holding_rate: holding / span,
        up_count_rate: control.up / span,
        down_count_rate: control.down / span,
        up_volume_rate: control.up_volume / span,
        down_volume_rate: control.down_volume / span,
    }
}

fn with_cost<R: Rule, C: Recorder>(p: &Params<'_>, rule: R, rep: usize, recorder: &mut C) -> ReplicationStats {
    match *p.holding.family() {
        Family::Linear { backlog, excess, kink } if backlog >= 0.0 && excess >= 0.0 => {
            replicate(p, rule, Kinked { backlog, excess, kink }, rep, recorder)
        }
        Family::Quadratic { curvature, center } => replicate(p, rule, Parabola { curvature, center }, rep, recorder),
        _ => replicate(p, rule, General(p.holding), rep, recorder),
    }
}

fn run<C: Recorder>(
    p: &Params<'_>,
    band: &BandPolicy,
    spec: &ProblemSpec,
    rep: usize,
    recorder: &mut C,
) -> ReplicationStats {
    match band.mode {
        Mode::Singular => {
            let rule = Barriers {
                d: band.lower_trigger,
                u: band.upper_trigger,
                up_unit: spec.up_unit,
                down_unit: spec.down_unit,
            };
            with_cost(p, rule, rep, recorder)
        }
        Mode::Impulse | Mode::NonNegImpulse => {
            let [d, big_d, big_u, u] = band.thresholds();
            let rule = Jumps {
                d,
                big_d,
                big_u,
                u,
                up_fixed: spec.up_fixed,
                up_unit: spec.up_unit,
                down_fixed: spec.down_fixed,
                down_unit: spec.down_unit,
            };
            with_cost(p, rule, rep, recorder)
        }
    }
}

fn params<'a>(spec: &'a ProblemSpec, band: &BandPolicy, cfg: &'a SimConfig) -> Result<Params<'a>> {
    cfg.validate()?;
    band.validate()?;
    if !(spec.sigma2 >= 0.0) || !spec.mu.is_finite() {
        return Err(Error::Domain(format!(
            "simulation needs sigma2 >= 0 and finite drift (mu = {}, sigma2 = {})",
            spec.mu, spec.sigma2
        )));
    }
    Ok(Params {
        mu: spec.mu,
        sigma: spec.sigma2.sqrt(),
        holding: &spec.holding,
        cfg,
        z0: cfg.z0.unwrap_or(0.5 * (band.lower_target + band.upper_target)),
    })
}

pub fn simulate(spec: &ProblemSpec, band: &BandPolicy, cfg: &SimConfig) -> Result<SimResult> {
    simulate_with(spec, band, cfg, Execution::Parallel)
}

pub fn simulate_with(spec: &ProblemSpec, band: &BandPolicy, cfg: &SimConfig, exec: Execution) -> Result<SimResult> {
    let p = params(spec, band, cfg)?;
    let reps = exec.map(cfg.replications, |rep| run(&p, band, spec, rep, &mut Discard));
    Ok(summarize(reps))
}

/// Like [`simulate`], writing the path of the first replication as CSV
/// (`t,Z,cumulative_cost`, every `stride`-th step).
pub fn simulate_traced(
    spec: &ProblemSpec,
    band: &BandPolicy,
    cfg: &SimConfig,
    exec: Execution,
    path: &Path,
    stride: usize,
) -> Result<SimResult> {
    if stride == 0 {
        return Err(Error::InvalidParameter("trace stride must be positive".into()));
    }
    let p = params(spec, band, cfg)?;
    let io = |e: std::io::Error| Error::InvalidParameter(format!("cannot write {}: {e}", path.display()));
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(out, "t,Z,cumulative_cost").map_err(io)?;
    writeln!(out, "0,{},0", p.z0).map_err(io)?;
    let mut rec = Decimated {
        out,
        stride: stride as u64,
        count: 1,
        error: None,
    };
    let first = run(&p, band, spec, 0, &mut rec);
    if let Some(e) = rec.error.take() {
        return Err(io(e));
    }
    rec.out.flush().map_err(io)?;
    let rest = exec.map(cfg.replications - 1, |i| run(&p, band, spec, i + 1, &mut Discard));
    Ok(summarize(std::iter::once(first).chain(rest).collect()))
}

fn mean(xs: impl Iterator<Item = f64>, n: usize) -> f64 {
    xs.sum::<f64>() / n as f64
}

fn summarize(reps: Vec<ReplicationStats>) -> SimResult {
    let n = reps.len();
    let ac_mean = mean(reps.iter().map(|r| r.average_cost), n);
    let ac_stderr = if n > 1 {
        let var = reps.iter().map(|r| (r.average_cost - ac_mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    SimResult {
        ac_mean,
        ac_stderr,
        n_up: mean(reps.iter().map(|r| r.up_count_rate), n),
        n_down: mean(reps.iter().map(|r| r.down_count_rate), n),
        y1_rate: mean(reps.iter().map(|r| r.up_volume_rate), n),
        y2_rate: mean(reps.iter().map(|r| r.down_volume_rate), n),
        holding_rate: mean(reps.iter().map(|r| r.holding_rate), n),
        replications: reps,
    }
}
