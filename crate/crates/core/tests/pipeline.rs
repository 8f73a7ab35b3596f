use hsc_core::analytic::{self, DEFAULT_ROOT_TOL};
use hsc_core::simulate;
use hsc_core::sweep::{self, Figure, ReproduceOptions, SweepSpec};
use hsc_core::{DistributionSpec, SystemParams};

fn packet(text: &str) -> DistributionSpec {
    text.parse().unwrap()
}

#[test]
fn sweep_round_trips_through_csv() {
    let spec = SweepSpec {
        u0_grid: vec![0.0, 2.5, 7.0],
        rho_list: vec![0.95, 1.25],
        dist_list: vec![packet("det:mean=2"), packet("unif:mean=0.5")],
        p: 2.0,
        trials: 300,
        horizon: 200.0,
        seed: 17,
    };
    let rows = sweep::run_sweep(&spec).unwrap();
    assert_eq!(rows.len(), 12);
    let mut buf = Vec::new();
    sweep::write_csv(&rows, &mut buf).unwrap();
    assert_eq!(sweep::read_csv(buf.as_slice()).unwrap(), rows);

    for row in rows.iter().filter(|r| r.rho < 1.0) {
        assert_eq!(row.psi_exact, Some(1.0));
        assert_eq!(row.r_star, None);
    }
    for row in rows.iter().filter(|r| r.rho > 1.0) {
        assert!(row.psi_exact.unwrap() <= row.psi_bound.unwrap());
    }
}

#[test]
fn sweep_monte_carlo_matches_pointwise_estimates() {
    let spec = SweepSpec {
        u0_grid: vec![1.0, 4.0],
        rho_list: vec![1.2],
        dist_list: vec![packet("exp:mean=1")],
        p: 1.0,
        trials: 400,
        horizon: 300.0,
        seed: 8,
    };
    let rows = sweep::run_sweep(&spec).unwrap();
    for row in &rows {
        let params = SystemParams::from_rho(1.2, packet("exp:mean=1"), 1.0, row.u0).unwrap();
        let est = simulate::estimate_eventual_outage(&params, 300.0, 400, 8).unwrap();
        assert_eq!(row.psi_mc, Some(est.estimate));
    }
}

#[test]
fn scale_invariance_of_root() {
    // Doubling packet mean and drain rate rescales energy by 2: r* halves.
    let base = SystemParams::from_rho(1.3, packet("unif:mean=1"), 1.0, 0.0).unwrap();
    let scaled = SystemParams::from_rho(1.3, packet("unif:mean=2"), 2.0, 0.0).unwrap();
    let r1 = analytic::solve_adjustment_coefficient(&base, DEFAULT_ROOT_TOL).unwrap().r_star;
    let r2 = analytic::solve_adjustment_coefficient(&scaled, DEFAULT_ROOT_TOL).unwrap().r_star;
    assert!((r1 - 2.0 * r2).abs() < 1e-10);
}

#[test]
fn reproduce_manifest_records_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let opts = ReproduceOptions {
        trials: 50,
        u0_grid: vec![0.0, 1.0],
        ..ReproduceOptions::default()
    };
    let out = sweep::run_reproduce(Figure::Comparison, dir.path(), &opts).unwrap();
    assert!(out.csv.ends_with("figure5.csv"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out.manifest).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 42);
    assert_eq!(out.rows.len(), 3 * 2);
}
