//! `hsc`: analysis, simulation, sweeps and figure data for harvest-store-consume
//! energy systems.

mod config;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hsc_core::analytic::{self, DEFAULT_ROOT_TOL};
use hsc_core::distributions::{trial_rng, PoissonEvents};
use hsc_core::simulate::{self, DEFAULT_HORIZON, DEFAULT_LADDER_STEPS, DEFAULT_TRIALS};
use hsc_core::sweep::{self, Figure, ReproduceOptions, SweepSpec};
use hsc_core::{DistributionSpec, Error, Result, SystemParams};
use serde_json::json;

use crate::config::FileConfig;

const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "hsc", version, about = "Eventual energy outage of harvest-store-consume systems")]
struct Cli {
    /// Master seed for the Monte-Carlo streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte-Carlo trials per point (0 disables simulation in sweeps).
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Simulation horizon in time units.
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Output file (directory for `reproduce`); stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON file with default values for any of these flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for the Monte-Carlo engine.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct PointArgs {
    /// Packet arrival rate.
    #[arg(long)]
    lambda: Option<f64>,
    /// Utilization λX̄/p, as an alternative to --lambda.
    #[arg(long)]
    rho: Option<f64>,
    /// Packet law, e.g. `exp:mean=1`, `det:mean=1`, `unif:mean=1`.
    #[arg(long)]
    packet: Option<String>,
    /// Consumption rate.
    #[arg(long)]
    p: Option<f64>,
    /// Initial battery energy.
    #[arg(long)]
    u0: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SimKind {
    /// Eventual outage probability within the horizon.
    Outage,
    /// Ascending ladder statistics of the trough walk.
    Ladder,
    /// Stationary battery statistics (ρ < 1).
    Lindley,
    /// Sawtooth breakpoints of one surplus path, as CSV.
    Path,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form analysis of one operating point.
    Analyze(PointArgs),
    /// Monte-Carlo run at one operating point.
    Simulate {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long, value_enum, default_value = "outage")]
        kind: SimKind,
        /// Report the Wilson interval instead of the normal one.
        #[arg(long)]
        wilson: bool,
        /// Steps for `--kind lindley`.
        #[arg(long)]
        steps: Option<u64>,
        /// Burn-in for `--kind lindley` (default: 10% of steps).
        #[arg(long)]
        burn_in: Option<u64>,
        /// Step limit per walk for `--kind ladder`.
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// CSV of exact, bound and simulated outage over a grid.
    Sweep {
        /// `start:step:stop` or comma-separated list.
        #[arg(long)]
        u0_grid: Option<String>,
        /// Comma-separated utilization factors.
        #[arg(long)]
        rho: Option<String>,
        /// Packet law; repeat for several.
        #[arg(long)]
        dist: Vec<String>,
        #[arg(long)]
        p: Option<f64>,
    },
    /// Data files for figures 2 to 5.
    Reproduce {
        #[arg(long)]
        figure: Option<u8>,
        #[arg(long)]
        u0_grid: Option<String>,
        #[arg(long)]
        rho: Option<String>,
    },
}

struct Globals {
    seed: u64,
    trials: u64,
    horizon: f64,
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hsc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let globals = Globals {
        seed: cli.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED),
        trials: cli.trials.or(cfg.trials).unwrap_or(DEFAULT_TRIALS),
        horizon: cli.horizon.or(cfg.horizon).unwrap_or(DEFAULT_HORIZON),
        out: cli.out.clone().or_else(|| cfg.out.clone()),
    };
    let workers = cli.workers.or(cfg.workers);
    let pool = {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = workers {
            if n == 0 {
                return Err(Error::Value("workers must be at least 1".into()));
            }
            builder = builder.num_threads(n);
        }
        builder
            .build()
            .map_err(|e| Error::Value(format!("cannot start worker pool: {e}")))?
    };
    pool.install(|| dispatch(cli.command, &globals, &cfg))
}

fn dispatch(command: Command, g: &Globals, cfg: &FileConfig) -> Result<()> {
    match command {
        Command::Analyze(point) => {
            let params = resolve_point(&point, cfg)?;
            let report = sweep::run_analyze(&params)?;
            emit_json(&report, g.out.as_deref())
        }
        Command::Simulate {
            point,
            kind,
            wilson,
            steps,
            burn_in,
            max_steps,
        } => {
            let params = resolve_point(&point, cfg)?;
            simulate_point(&params, kind, wilson, steps, burn_in, max_steps, g)
        }
        Command::Sweep {
            u0_grid,
            rho,
            dist,
            p,
        } => {
            let u0_grid = match u0_grid.or_else(|| cfg.u0_grid.clone()) {
                Some(text) => sweep::parse_grid(&text)?,
                None => ReproduceOptions::default().u0_grid,
            };
            let rho_list = match rho {
                Some(text) => sweep::parse_grid(&text)?,
                None => cfg
                    .rho
                    .clone()
                    .unwrap_or_else(|| ReproduceOptions::default().rho_list),
            };
            let dist_text = if dist.is_empty() {
                cfg.dist.clone().unwrap_or_else(|| vec!["exp:mean=1".into()])
            } else {
                dist
            };
            let dist_list = dist_text
                .iter()
                .map(|d| d.parse())
                .collect::<Result<Vec<DistributionSpec>>>()?;
            let spec = SweepSpec {
                u0_grid,
                rho_list,
                dist_list,
                p: p.or(cfg.p).unwrap_or(1.0),
                trials: g.trials,
                horizon: g.horizon,
                seed: g.seed,
            };
            let rows = sweep::run_sweep(&spec)?;
            let mut buf = Vec::new();
            sweep::write_csv(&rows, &mut buf)?;
            emit_bytes(&buf, g.out.as_deref())
        }
        Command::Reproduce {
            figure,
            u0_grid,
            rho,
        } => {
            let figure = figure
                .or(cfg.figure)
                .ok_or_else(|| Error::Value("--figure is required".into()))?;
            let figure = Figure::try_from(figure)?;
            let mut opts = ReproduceOptions {
                trials: g.trials,
                horizon: g.horizon,
                seed: g.seed,
                ..ReproduceOptions::default()
            };
            if let Some(text) = u0_grid.or_else(|| cfg.u0_grid.clone()) {
                opts.u0_grid = sweep::parse_grid(&text)?;
            }
            if let Some(text) = rho {
                opts.rho_list = sweep::parse_grid(&text)?;
            } else if let Some(list) = &cfg.rho {
                opts.rho_list = list.clone();
            }
            if let Some(p) = cfg.p {
                opts.p = p;
            }
            let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let output = sweep::run_reproduce(figure, &dir, &opts)?;
            println!("{}", output.csv.display());
            println!("{}", output.manifest.display());
            Ok(())
        }
    }
}

fn resolve_point(point: &PointArgs, cfg: &FileConfig) -> Result<SystemParams> {
    let packet: DistributionSpec = point
        .packet
        .clone()
        .or_else(|| cfg.packet.clone())
        .unwrap_or_else(|| "exp:mean=1".into())
        .parse()?;
    let p = point.p.or(cfg.p).unwrap_or(1.0);
    let u0 = point.u0.or(cfg.u0).unwrap_or(0.0);
    let cfg_rho = match cfg.rho.as_deref() {
        None => None,
        Some([r]) => Some(*r),
        Some(_) => {
            return Err(Error::Value(
                "config `rho` must hold a single value for a single point".into(),
            ))
        }
    };
    match (point.lambda, point.rho) {
        (Some(_), Some(_)) => Err(Error::Value("give either --lambda or --rho, not both".into())),
        (Some(lambda), None) => SystemParams::new(lambda, packet, p, u0),
        (None, Some(rho)) => SystemParams::from_rho(rho, packet, p, u0),
        (None, None) => match (cfg.lambda, cfg_rho) {
            (Some(lambda), _) => SystemParams::new(lambda, packet, p, u0),
            (None, Some(rho)) => SystemParams::from_rho(rho, packet, p, u0),
            (None, None) => Err(Error::Value("one of --lambda or --rho is required".into())),
        },
    }
}

fn simulate_point(
    params: &SystemParams,
    kind: SimKind,
    wilson: bool,
    steps: Option<u64>,
    burn_in: Option<u64>,
    max_steps: Option<u64>,
    g: &Globals,
) -> Result<()> {
    let exact = if params.rho() > 1.0 {
        let r = analytic::solve_adjustment_coefficient(params, DEFAULT_ROOT_TOL)?.r_star;
        Some((r, analytic::eventual_outage_poisson_exact(params, r)?))
    } else {
        None
    };
    match kind {
        SimKind::Outage => {
            let mut est = simulate::estimate_eventual_outage(params, g.horizon, g.trials, g.seed)?;
            if wilson {
                est = est.wilson();
            }
            let value = json!({
                "params": params,
                "estimate": est,
                "psi_exact": exact.map(|e| e.1).unwrap_or(1.0),
                "psi_bound": exact.map(|(r, _)| analytic::outage_bound(r, params.u0)).transpose()?,
            });
            emit_json(&value, g.out.as_deref())
        }
        SimKind::Ladder => {
            let max_steps = max_steps.unwrap_or(DEFAULT_LADDER_STEPS);
            let samples = simulate::sample_ladder_walks(params, max_steps, g.trials, g.seed)?;
            let theta = exact
                .map(|(r, _)| analytic::ladder_mass_poisson(params, r))
                .transpose()?;
            let value = json!({
                "params": params,
                "walks": g.trials,
                "max_steps": max_steps,
                "seed": g.seed,
                "ladder_fraction": simulate::ladder_fraction(&samples)?,
                "theta_exact": theta,
                "phi_from_max": simulate::estimate_phi_from_max(&samples, params.u0)?,
                "phi_exact": exact.map(|e| 1.0 - e.1),
            });
            emit_json(&value, g.out.as_deref())
        }
        SimKind::Lindley => {
            let steps = steps.unwrap_or(1_000_000);
            let burn_in = burn_in.unwrap_or(steps / 10);
            let stats = simulate::estimate_battery_stationary(params, steps, burn_in, g.seed)?;
            let value = json!({
                "params": params,
                "stats": stats,
                "stationary_outage_exact": analytic::stationary_outage(params)?,
            });
            emit_json(&value, g.out.as_deref())
        }
        SimKind::Path => {
            let events = PoissonEvents::new(params.lambda, params.packet, trial_rng(g.seed, 0));
            let path = simulate::record_path(params, g.horizon, events)?;
            let mut text = String::from("time,surplus\n");
            for pt in path {
                text.push_str(&format!("{},{}\n", pt.time, pt.surplus));
            }
            emit_bytes(text.as_bytes(), g.out.as_deref())
        }
    }
}

fn emit_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialize(e.to_string()))?;
    text.push('\n');
    emit_bytes(text.as_bytes(), out)
}

fn emit_bytes(bytes: &[u8], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => io::stdout().write_all(bytes).map_err(|source| Error::Io {
            path: PathBuf::from("<stdout>"),
            source,
        }),
    }
}
