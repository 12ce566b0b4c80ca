//! `control-band`: solve, evaluate, verify and simulate control-band
//! policies for a problem described in a JSON file.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 invalid problem,
//! 3 numerical failure, 4 verification failed.

mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use control_band::error::Error;
use control_band::evaluator::{evaluate, write_csv, EvalOptions};
use control_band::exec::Execution;
use control_band::impulse::BandPolicy;
use control_band::model::{Mode, ProblemSpec};
use control_band::qvi::{verify_with, GridSpec};
use control_band::sim::{simulate_traced, simulate_with, SimConfig};
use serde_json::{json, Value};

use config::Config;

#[derive(Parser)]
#[command(
    name = "control-band",
    version,
    about = "Optimal control bands for Brownian inventory models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the optimal band and its average cost.
    Solve(Common),
    /// Average cost and relative value function of a band.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Number of grid points for the CSV table.
        #[arg(long, default_value_t = 201)]
        grid: usize,
        /// Write x, V, V', Γf+h on the band to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Check the optimality conditions for a band on a grid.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Distance the grid extends beyond the band.
        #[arg(long, default_value_t = 5.0)]
        span: f64,
        #[arg(long, default_value_t = 2000)]
        points: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Estimate the average cost of a band by Monte Carlo.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimArgs,
    },
}

#[derive(Args)]
struct Common {
    /// Problem file (JSON).
    config: PathBuf,
    /// Band as d,D,U,u (d,u for reflecting problems); solved for when absent.
    #[arg(long, allow_hyphen_values = true)]
    band: Option<BandArg>,
    /// Run on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    burn_in: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    z0: Option<f64>,
    /// Write t, Z, cumulative cost of the first replication to this file.
    #[arg(long)]
    dump_path: Option<PathBuf>,
    /// Keep every n-th step in the dump.
    #[arg(long, default_value_t = 100)]
    stride: usize,
}

#[derive(Debug, Clone)]
struct BandArg(Vec<f64>);

impl FromStr for BandArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("'{}' is not a number", t.trim()))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(BandArg)
    }
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(e) if e.is_numeric() => 3,
            Failure::Core(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

/// The problem with its band, either given or freshly solved.
struct Setup {
    config: Config,
    spec: ProblemSpec,
    band: BandPolicy,
    exec: Execution,
    /// Optimal average cost when the band was solved for.
    solved_gamma: Option<f64>,
}

fn setup(common: &Common) -> Result<Setup, Failure> {
    let config = Config::load(&common.config).map_err(Failure::Usage)?;
    let spec = config.spec()?;
    let exec = if common.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let (band, solved_gamma) = match &common.band {
        Some(arg) => (band_from(spec.mode, &arg.0)?, None),
        None => {
            let sol = control_band::solve(&spec, config.solver)?;
            (sol.policy, Some(sol.gamma))
        }
    };
    Ok(Setup {
        config,
        spec,
        band,
        exec,
        solved_gamma,
    })
}

fn band_from(mode: Mode, values: &[f64]) -> Result<BandPolicy, Failure> {
    match (mode, values) {
        (Mode::Singular, &[d, u]) => Ok(BandPolicy::singular(d, u)),
        (Mode::Impulse, &[d, big_d, big_u, u]) => Ok(BandPolicy::impulse(d, big_d, big_u, u)),
        (Mode::NonNegImpulse, &[d, big_d, big_u, u]) => Ok(BandPolicy::nonneg(d, big_d, big_u, u, 0.0)),
        (Mode::Singular, _) => Err(Failure::Usage(
            "--band needs two values d,u for a singular problem".into(),
        )),
        _ => Err(Failure::Usage("--band needs four values d,D,U,u".into())),
    }
}

/// Puts the band first and, for a solved band, the solver's γ.
fn document(s: &Setup, body: impl serde::Serialize) -> Value {
    let mut doc = json!({ "band": s.band });
    if let Some(gamma) = s.solved_gamma {
        doc["solved_gamma"] = json!(gamma);
    }
    if let (Value::Object(out), Ok(Value::Object(rest))) = (&mut doc, serde_json::to_value(body)) {
        out.extend(rest);
    }
    doc
}

fn cmd_solve(common: &Common) -> Result<(Value, u8), Failure> {
    let config = Config::load(&common.config).map_err(Failure::Usage)?;
    if common.band.is_some() {
        return Err(Failure::Usage("solve does not take --band".into()));
    }
    let sol = control_band::solve(&config.spec()?, config.solver)?;
    let doc = serde_json::to_value(&sol).expect("solutions serialize");
    Ok((doc, 0))
}

fn cmd_evaluate(common: &Common, grid: usize, csv: Option<&PathBuf>) -> Result<(Value, u8), Failure> {
    if grid < 2 {
        return Err(Failure::Usage(format!("--grid needs at least 2 points, got {grid}")));
    }
    let s = setup(common)?;
    let eval = evaluate(&s.spec, &s.band, &EvalOptions::default())?;
    let mut doc = document(&s, &eval);
    if let Some(path) = csv {
        let rows = eval.tabulate(grid, s.exec)?;
        write_csv(path, &rows).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?;
        doc["csv"] = json!(path.display().to_string());
    }
    Ok((doc, 0))
}

fn cmd_verify(common: &Common, grid: GridSpec) -> Result<(Value, u8), Failure> {
    if grid.points < 2 || grid.span.is_nan() || grid.span < 0.0 || grid.tol.is_nan() || grid.tol < 0.0 {
        return Err(Failure::Usage(
            "verification needs --points >= 2, --span >= 0 and --tol >= 0".into(),
        ));
    }
    let s = setup(common)?;
    let eval = evaluate(&s.spec, &s.band, &EvalOptions::default())?;
    let report = verify_with(&eval, &grid, s.exec)?;
    let code = if report.pass { 0 } else { 4 };
    let mut doc = document(&s, &report);
    doc["gamma"] = json!(eval.gamma);
    Ok((doc, code))
}

fn sim_config(base: SimConfig, args: &SimArgs) -> Result<SimConfig, Failure> {
    let cfg = SimConfig {
        dt: args.dt.unwrap_or(base.dt),
        horizon: args.horizon.unwrap_or(base.horizon),
        burn_in: args.burn_in.unwrap_or(base.burn_in),
        replications: args.reps.unwrap_or(base.replications),
        seed: args.seed.unwrap_or(base.seed),
        z0: args.z0.or(base.z0),
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if args.stride == 0 {
        return Err(Failure::Usage("--stride must be positive".into()));
    }
    Ok(cfg)
}

fn cmd_simulate(common: &Common, args: &SimArgs) -> Result<(Value, u8), Failure> {
    let s = setup(common)?;
    let cfg = sim_config(s.config.sim, args)?;
    let result = match &args.dump_path {
        Some(path) => simulate_traced(&s.spec, &s.band, &cfg, s.exec, path, args.stride)?,
        None => simulate_with(&s.spec, &s.band, &cfg, s.exec)?,
    };
    let mut doc = document(&s, &result);
    doc["sim"] = serde_json::to_value(cfg).expect("configs serialize");
    Ok((doc, 0))
}

fn run(cli: &Cli) -> Result<(Value, u8), Failure> {
    match &cli.command {
        Command::Solve(common) => cmd_solve(common),
        Command::Evaluate { common, grid, csv } => cmd_evaluate(common, *grid, csv.as_ref()),
        Command::Verify {
            common,
            span,
            points,
            tol,
        } => cmd_verify(
            common,
            GridSpec {
                span: *span,
                points: *points,
                tol: *tol,
            },
        ),
        Command::Simulate { common, sim } => cmd_simulate(common, sim),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok((doc, code)) => {
            output::emit(doc);
            if code == 4 {
                eprintln!("verification failed");
            }
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
