//! Single-point reports, grid sweeps and figure reproduction, with their
//! CSV and JSON output formats.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytic::{self, SolveMethod, Sustainability, SystemParams, DEFAULT_ROOT_TOL};
use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::simulate::{self, DEFAULT_HORIZON, DEFAULT_TRIALS};

pub const CSV_HEADER: &str =
    "dist,rho,u0,r_star,psi_exact,psi_bound,psi_mc,ci_lo,ci_hi,trials,horizon,seed";

pub const REPORT_EPSILONS: [f64; 3] = [0.1, 0.01, 0.001];
pub const REPORT_QUANTILES: [f64; 3] = [0.5, 0.9, 0.99];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyForTarget {
    pub epsilon: f64,
    pub u0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationQuantile {
    pub q: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub params: SystemParams,
    pub rho: f64,
    pub verdict: Sustainability,
    pub r_star: Option<f64>,
    pub r_star_method: Option<SolveMethod>,
    pub r_star_residual: Option<f64>,
    pub r_star_quadratic_approx: Option<f64>,
    pub r_star_mean_variance_approx: Option<f64>,
    pub theta: Option<f64>,
    /// Eventual outage probability; exactly 1 when `ρ ≤ 1`.
    pub psi_exact: f64,
    pub psi_bound: Option<f64>,
    pub psi_asymptotic: Option<f64>,
    pub required_u0: Vec<EnergyForTarget>,
    pub stationary_outage: Option<f64>,
    pub outage_duration_quantiles: Vec<DurationQuantile>,
}

pub fn run_analyze(params: &SystemParams) -> Result<AnalysisReport> {
    let verdict = analytic::utilization(params);
    let mut report = AnalysisReport {
        params: *params,
        rho: verdict.rho,
        verdict: verdict.status,
        r_star: None,
        r_star_method: None,
        r_star_residual: None,
        r_star_quadratic_approx: None,
        r_star_mean_variance_approx: None,
        theta: None,
        psi_exact: 1.0,
        psi_bound: None,
        psi_asymptotic: None,
        required_u0: Vec::new(),
        stationary_outage: None,
        outage_duration_quantiles: Vec::new(),
    };
    match verdict.status {
        Sustainability::SelfSustainablePossible => {
            let adj = analytic::solve_adjustment_coefficient(params, DEFAULT_ROOT_TOL)?;
            let approx = analytic::approx_adjustment_coefficient(params)?;
            let r = adj.r_star;
            let theta = analytic::ladder_mass_poisson(params, r)?;
            let mu = analytic::tilted_ladder_mean_poisson(params, r)?;
            report.r_star = Some(r);
            report.r_star_method = Some(adj.method);
            report.r_star_residual = Some(adj.residual);
            report.r_star_quadratic_approx = Some(approx.quadratic_fixed_point);
            report.r_star_mean_variance_approx = Some(approx.mean_variance_guess);
            report.theta = Some(theta);
            report.psi_exact = analytic::eventual_outage_poisson_exact(params, r)?;
            report.psi_bound = Some(analytic::outage_bound(r, params.u0)?);
            report.psi_asymptotic = Some(analytic::asymptotic_outage(theta, r, mu, params.u0)?);
            report.required_u0 = REPORT_EPSILONS
                .iter()
                .map(|&epsilon| {
                    Ok(EnergyForTarget {
                        epsilon,
                        u0: analytic::required_initial_energy(r, epsilon)?,
                    })
                })
                .collect::<Result<_>>()?;
        }
        Sustainability::UnsustainableCertain => {
            if verdict.rho < 1.0 {
                report.stationary_outage = Some(analytic::stationary_outage(params)?);
                report.outage_duration_quantiles = REPORT_QUANTILES
                    .iter()
                    .map(|&q| {
                        Ok(DurationQuantile {
                            q,
                            duration: analytic::outage_duration_quantile(params, q)?,
                        })
                    })
                    .collect::<Result<_>>()?;
            }
        }
    }
    Ok(report)
}

/// Grid of points for [`run_sweep`]. The arrival rate of each point is
/// `λ = ρ·p/X̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub u0_grid: Vec<f64>,
    pub rho_list: Vec<f64>,
    pub dist_list: Vec<DistributionSpec>,
    pub p: f64,
    /// Zero disables the Monte-Carlo columns.
    pub trials: u64,
    pub horizon: f64,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.u0_grid.is_empty() || self.rho_list.is_empty() || self.dist_list.is_empty() {
            return Err(Error::Value("sweep grids must be nonempty".into()));
        }
        if let Some(r) = self.rho_list.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::Value(format!("rho must be positive, got {r}")));
        }
        if let Some(u) = self.u0_grid.iter().find(|u| !(**u >= 0.0 && u.is_finite())) {
            return Err(Error::Value(format!("u0 must be nonnegative, got {u}")));
        }
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(Error::Value(format!("p must be positive, got {}", self.p)));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Value(format!("horizon must be positive, got {}", self.horizon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dist: String,
    pub rho: f64,
    pub u0: f64,
    pub r_star: Option<f64>,
    pub psi_exact: Option<f64>,
    pub psi_bound: Option<f64>,
    pub psi_mc: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub trials: u64,
    pub horizon: f64,
    pub seed: u64,
}

fn at_point(err: Error, dist: &DistributionSpec, rho: f64) -> Error {
    let ctx = |m: String| format!("{m} (dist {dist}, rho {rho})");
    match err {
        Error::Domain(m) => Error::Domain(ctx(m)),
        Error::Precondition(m) => Error::Precondition(ctx(m)),
        Error::Convergence(m) => Error::Convergence(ctx(m)),
        Error::Value(m) => Error::Value(ctx(m)),
        other => other,
    }
}

/// One row per `(dist, rho, u0)`, in that nesting order.
///
/// For `ρ ≤ 1` the eventual outage probability is 1 and `r_star` and
/// `psi_bound` are left empty.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.dist_list.len() * spec.rho_list.len() * spec.u0_grid.len());
    for dist in &spec.dist_list {
        for &rho in &spec.rho_list {
            let series = sweep_series(spec, dist, rho).map_err(|e| at_point(e, dist, rho))?;
            rows.extend(series);
        }
    }
    Ok(rows)
}

fn sweep_series(spec: &SweepSpec, dist: &DistributionSpec, rho: f64) -> Result<Vec<ResultRow>> {
    let base = SystemParams::from_rho(rho, *dist, spec.p, 0.0)?;
    let r_star = if rho > 1.0 {
        Some(analytic::solve_adjustment_coefficient(&base, DEFAULT_ROOT_TOL)?.r_star)
    } else {
        None
    };
    let mc = if spec.trials > 0 {
        Some(simulate::estimate_eventual_outage_grid(
            &base,
            &spec.u0_grid,
            spec.horizon,
            spec.trials,
            spec.seed,
        )?)
    } else {
        None
    };
    spec.u0_grid
        .iter()
        .enumerate()
        .map(|(j, &u0)| {
            let params = base.with_u0(u0)?;
            let (psi_exact, psi_bound) = match r_star {
                Some(r) => (
                    analytic::eventual_outage_poisson_exact(&params, r)?,
                    Some(analytic::outage_bound(r, u0)?),
                ),
                None => (1.0, None),
            };
            let est = mc.as_ref().map(|m| m[j]);
            Ok(ResultRow {
                dist: dist.to_string(),
                rho,
                u0,
                r_star,
                psi_exact: Some(psi_exact),
                psi_bound,
                psi_mc: est.map(|e| e.estimate),
                ci_lo: est.map(|e| e.ci95_lo),
                ci_hi: est.map(|e| e.ci95_hi),
                trials: spec.trials,
                horizon: spec.horizon,
                seed: spec.seed,
            })
        })
        .collect()
}

pub fn write_csv<W: io::Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))
            .map_err(|e| Error::Serialize(e.to_string()))?;
    }
    for row in rows {
        w.serialize(row).map_err(|e| Error::Serialize(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Serialize(e.to_string()))?;
    Ok(())
}

pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<ResultRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| Error::Serialize(e.to_string())))
        .collect()
}

/// Parses `start:step:stop` (inclusive) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let number = |s: &str, offset: usize| -> Result<f64> {
        s.trim().parse::<f64>().map_err(|_| Error::Parse {
            position: offset,
            message: format!("expected a number, found `{s}`"),
        })
    };
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, step, stop] => {
            let a = number(start, 0)?;
            let h = number(step, start.len() + 1)?;
            let b = number(stop, start.len() + step.len() + 2)?;
            if !(h > 0.0) || b < a {
                return Err(Error::Value(format!("empty or invalid range `{text}`")));
            }
            let n = ((b - a) / h + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| a + i as f64 * h).collect())
        }
        [list] => {
            let mut offset = 0;
            let mut out = Vec::new();
            for item in list.split(',') {
                out.push(number(item, offset)?);
                offset += item.len() + 1;
            }
            Ok(out)
        }
        _ => Err(Error::Parse {
            position: 0,
            message: "expected `start:step:stop` or a comma-separated list".into(),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Figure {
    /// Exponential packets over the ρ grid.
    Exponential = 2,
    /// Deterministic packets over the ρ grid.
    Deterministic = 3,
    /// Uniform packets over the ρ grid.
    Uniform = 4,
    /// All three laws at ρ = 1.1.
    Comparison = 5,
}

impl Figure {
    pub fn number(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Figure {
    type Error = Error;

    fn try_from(n: u8) -> Result<Self> {
        match n {
            2 => Ok(Figure::Exponential),
            3 => Ok(Figure::Deterministic),
            4 => Ok(Figure::Uniform),
            5 => Ok(Figure::Comparison),
            _ => Err(Error::Value(format!("figure must be 2, 3, 4 or 5, got {n}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceOptions {
    pub trials: u64,
    pub horizon: f64,
    pub seed: u64,
    pub u0_grid: Vec<f64>,
    pub rho_list: Vec<f64>,
    pub p: f64,
    pub packet_mean: f64,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        Self {
            trials: DEFAULT_TRIALS,
            horizon: DEFAULT_HORIZON,
            seed: 42,
            u0_grid: (0..=20).map(|i| 2.0 * i as f64).collect(),
            rho_list: vec![1.1, 1.2, 1.3],
            p: 1.0,
            packet_mean: 1.0,
        }
    }
}

pub const COMPARISON_RHO: f64 = 1.1;

pub fn figure_sweep(figure: Figure, opts: &ReproduceOptions) -> Result<SweepSpec> {
    let m = opts.packet_mean;
    let (dist_list, rho_list) = match figure {
        Figure::Exponential => (vec![DistributionSpec::exponential(m)?], opts.rho_list.clone()),
        Figure::Deterministic => (vec![DistributionSpec::deterministic(m)?], opts.rho_list.clone()),
        Figure::Uniform => (vec![DistributionSpec::uniform(m)?], opts.rho_list.clone()),
        Figure::Comparison => (
            vec![
                DistributionSpec::exponential(m)?,
                DistributionSpec::deterministic(m)?,
                DistributionSpec::uniform(m)?,
            ],
            vec![COMPARISON_RHO],
        ),
    };
    Ok(SweepSpec {
        u0_grid: opts.u0_grid.clone(),
        rho_list,
        dist_list,
        p: opts.p,
        trials: opts.trials,
        horizon: opts.horizon,
        seed: opts.seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestParams {
    pub p: f64,
    pub packet_mean: f64,
    pub dists: Vec<DistributionSpec>,
    pub trials: u64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestGrids {
    pub u0: Vec<f64>,
    pub rho: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub figure: u8,
    pub params: ManifestParams,
    pub grids: ManifestGrids,
    pub seed: u64,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReproduceOutput {
    pub csv: PathBuf,
    pub manifest: PathBuf,
    pub rows: Vec<ResultRow>,
}

/// Writes `figure<N>.csv` and `figure<N>.json` into `out_dir`.
pub fn run_reproduce(figure: Figure, out_dir: &Path, opts: &ReproduceOptions) -> Result<ReproduceOutput> {
    let spec = figure_sweep(figure, opts)?;
    let rows = run_sweep(&spec)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let csv_path = out_dir.join(format!("figure{}.csv", figure.number()));
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf)?;
    fs::write(&csv_path, buf).map_err(|e| Error::io(&csv_path, e))?;

    let manifest = Manifest {
        figure: figure.number(),
        params: ManifestParams {
            p: spec.p,
            packet_mean: opts.packet_mean,
            dists: spec.dist_list.clone(),
            trials: spec.trials,
            horizon: spec.horizon,
        },
        grids: ManifestGrids {
            u0: spec.u0_grid.clone(),
            rho: spec.rho_list.clone(),
        },
        seed: spec.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let manifest_path = out_dir.join(format!("figure{}.json", figure.number()));
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Serialize(e.to_string()))?;
    fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;

    Ok(ReproduceOutput {
        csv: csv_path,
        manifest: manifest_path,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp1() -> DistributionSpec {
        DistributionSpec::exponential(1.0).unwrap()
    }

    #[test]
    fn analyze_sustainable_point() {
        let params = SystemParams::new(1.1, exp1(), 1.0, 10.0).unwrap();
        let r = run_analyze(&params).unwrap();
        assert_eq!(r.verdict, Sustainability::SelfSustainablePossible);
        assert!((r.r_star.unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(r.r_star_method, Some(SolveMethod::ClosedForm));
        assert!((r.psi_exact - 0.334436).abs() < 1e-6);
        assert!((r.psi_bound.unwrap() - 0.367879).abs() < 1e-6);
        assert!((r.psi_asymptotic.unwrap() - r.psi_exact).abs() < 1e-12);
        assert_eq!(r.required_u0.len(), 3);
        assert!((r.required_u0[1].u0 - 46.0517).abs() < 1e-4);
        assert!(r.stationary_outage.is_none());
    }

    #[test]
    fn analyze_unsustainable_points() {
        let r = run_analyze(&SystemParams::new(0.9, exp1(), 1.0, 0.0).unwrap()).unwrap();
        assert_eq!(r.verdict, Sustainability::UnsustainableCertain);
        assert!((r.stationary_outage.unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(r.psi_exact, 1.0);
        assert_eq!(r.outage_duration_quantiles.len(), 3);

        let r = run_analyze(&SystemParams::new(1.0, exp1(), 1.0, 5.0).unwrap()).unwrap();
        assert_eq!(r.verdict, Sustainability::UnsustainableCertain);
        assert_eq!(r.psi_exact, 1.0);
        assert!(r.stationary_outage.is_none());
        assert!(r.r_star.is_none());
    }

    #[test]
    fn sweep_without_monte_carlo() {
        let spec = SweepSpec {
            u0_grid: vec![0.0, 5.0, 10.0],
            rho_list: vec![1.1],
            dist_list: vec![exp1()],
            p: 1.0,
            trials: 0,
            horizon: 1000.0,
            seed: 1,
        };
        let rows = run_sweep(&spec).unwrap();
        let psi: Vec<f64> = rows.iter().map(|r| r.psi_exact.unwrap()).collect();
        for (got, u0) in psi.iter().zip([0.0, 5.0, 10.0]) {
            let want = (-0.1f64 * u0).exp() / 1.1;
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
        assert!((psi[0] - 0.909091).abs() < 1e-6);
        assert!((psi[1] - 0.551392).abs() < 1e-6);
        assert!((psi[2] - 0.334436).abs() < 1e-6);
        assert!(rows.iter().all(|r| r.psi_mc.is_none()));

        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(&format!("{CSV_HEADER}\n")));
        assert!(!text.contains('\r'));
        let second = text.lines().nth(1).unwrap();
        assert!(second.ends_with(",,,,0,1000.0,1"), "{second}");
    }

    #[test]
    fn single_point_sweep_matches_analyze() {
        let spec = SweepSpec {
            u0_grid: vec![7.0],
            rho_list: vec![1.2],
            dist_list: vec!["det:mean=1".parse().unwrap()],
            p: 1.0,
            trials: 0,
            horizon: 1000.0,
            seed: 1,
        };
        let row = &run_sweep(&spec).unwrap()[0];
        let params = SystemParams::from_rho(1.2, spec.dist_list[0], 1.0, 7.0).unwrap();
        let report = run_analyze(&params).unwrap();
        assert_eq!(row.r_star, report.r_star);
        assert_eq!(row.psi_exact, Some(report.psi_exact));
        assert_eq!(row.psi_bound, report.psi_bound);
    }

    #[test]
    fn sweep_rows_with_unit_load() {
        let spec = SweepSpec {
            u0_grid: vec![1.0],
            rho_list: vec![0.8, 1.0],
            dist_list: vec![exp1()],
            p: 1.0,
            trials: 0,
            horizon: 10.0,
            seed: 0,
        };
        let rows = run_sweep(&spec).unwrap();
        assert!(rows.iter().all(|r| r.psi_exact == Some(1.0) && r.r_star.is_none()));
    }

    #[test]
    fn sweep_validation() {
        let mut spec = SweepSpec {
            u0_grid: vec![],
            rho_list: vec![1.1],
            dist_list: vec![exp1()],
            p: 1.0,
            trials: 0,
            horizon: 10.0,
            seed: 0,
        };
        assert!(run_sweep(&spec).is_err());
        spec.u0_grid = vec![1.0];
        spec.rho_list = vec![-1.0];
        assert!(matches!(run_sweep(&spec), Err(Error::Value(_))));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let spec = SweepSpec {
            u0_grid: parse_grid("0:2.5:10").unwrap(),
            rho_list: vec![1.1, 1.3],
            dist_list: vec![exp1(), "unif:mean=0.7".parse().unwrap()],
            p: 0.9,
            trials: 200,
            horizon: 50.0,
            seed: 5,
        };
        let rows = run_sweep(&spec).unwrap();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0:2:6").unwrap(), vec![0.0, 2.0, 4.0, 6.0]);
        assert_eq!(parse_grid("0:2:40").unwrap().len(), 21);
        assert_eq!(parse_grid("1.1,1.2, 1.3").unwrap(), vec![1.1, 1.2, 1.3]);
        assert_eq!(parse_grid("0:0.1:0.3").unwrap().len(), 4);
        assert!(matches!(parse_grid("1,x"), Err(Error::Parse { position: 2, .. })));
        assert!(parse_grid("0:0:1").is_err());
        assert!(parse_grid("1:2:3:4").is_err());
    }

    #[test]
    fn figure_numbers() {
        for n in 2..=5u8 {
            assert_eq!(Figure::try_from(n).unwrap().number(), n);
        }
        assert!(Figure::try_from(1).is_err());
    }

    #[test]
    fn reproduce_writes_csv_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let opts = ReproduceOptions {
            trials: 100,
            horizon: 100.0,
            u0_grid: vec![0.0, 4.0],
            ..ReproduceOptions::default()
        };
        let out = run_reproduce(Figure::Comparison, dir.path(), &opts).unwrap();
        assert_eq!(out.rows.len(), 6);
        let text = fs::read_to_string(&out.csv).unwrap();
        assert_eq!(text.lines().count(), 7);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&out.manifest).unwrap()).unwrap();
        for key in ["figure", "params", "grids", "seed", "tool_version"] {
            assert!(manifest.get(key).is_some(), "missing {key}");
        }
        assert_eq!(manifest["figure"], 5);
        assert_eq!(manifest["seed"], 42);
    }
}
