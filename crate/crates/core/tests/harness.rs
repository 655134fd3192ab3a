use std::fs;

use mcid_core::gibbs::ChainConfig;
use mcid_core::gpc::GpcConfig;
use mcid_core::harness::*;
use mcid_core::quadrature::QuadratureConfig;
use mcid_core::sim::GeneratorSpec;
use mcid_core::RngStream;

fn small(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk(GeneratorSpec::population(0.7), seed);
    cfg.n = 80;
    cfg.replicates = 3;
    cfg.chain = ChainConfig::new(500, 100, 1, RngStream::default()).unwrap();
    cfg.gpc = GpcConfig {
        b: 4,
        t_max: 2,
        ..cfg.gpc
    };
    cfg
}

fn read_records(path: &std::path::Path) -> Vec<ReplicateRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap()
}

#[test]
fn experiment_files_round_trip() {
    let cfg = small(21);
    let out = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.write(dir.path()).unwrap();

    let records = read_records(&dir.path().join("replicates.csv"));
    assert_eq!(records, out.records);
    assert_eq!(records.iter().map(|r| r.rep).collect::<Vec<_>>(), vec![1, 2, 3]);
    for r in &records {
        assert!(r.ci_lo <= r.ci_hi);
        assert_eq!(r.covered, r.ci_lo <= cfg.truth() && cfg.truth() <= r.ci_hi);
        assert!((r.bias - (r.theta_mean - cfg.truth())).abs() < 1e-15);
        assert_eq!(r.wall_ms, 0);
    }

    let summary: SummaryReport =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary, summarize(&records, 0, &cfg));
    assert_eq!(summary.replicates, 3);
    assert_eq!(summary.b, 4);
    let failures = fs::read_to_string(dir.path().join("failures.csv")).unwrap();
    assert!(failures.lines().count() <= 1);
}

#[test]
fn outputs_are_byte_identical_across_worker_counts() {
    let dirs: Vec<_> = [1, 2, 3]
        .iter()
        .map(|&w| {
            let mut cfg = small(22);
            cfg.workers = w;
            let dir = tempfile::tempdir().unwrap();
            run_experiment(&cfg).unwrap().write(dir.path()).unwrap();
            dir
        })
        .collect();
    for file in ["replicates.csv", "summary.json", "failures.csv"] {
        let first = fs::read(dirs[0].path().join(file)).unwrap();
        for d in &dirs[1..] {
            assert_eq!(first, fs::read(d.path().join(file)).unwrap(), "{file}");
        }
    }
}

#[test]
fn replicates_are_keyed_by_index() {
    let mut two = small(23);
    two.replicates = 2;
    let a = run_experiment(&small(23)).unwrap();
    let b = run_experiment(&two).unwrap();
    assert_eq!(a.records[..2], b.records[..]);
    let other = run_experiment(&small(24)).unwrap();
    assert_ne!(a.records, other.records);
}

#[test]
fn config_files_are_strict() {
    let cfg = small(25);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, cfg.to_json().unwrap()).unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap(), cfg);
    let extra = cfg.to_json().unwrap().replacen('{', "{\n  \"bogus\": 1,", 1);
    assert!(ExperimentConfig::from_json(&extra).is_err());
    assert!(ExperimentConfig::load(&dir.path().join("missing.json")).is_err());
}

#[test]
fn risk_curves_are_scaled_by_their_minimum() {
    let g = GeneratorSpec::population(0.7);
    let losses = standard_losses(0.7, 0.1, 0.25).unwrap();
    let grid: Vec<f64> = (0..=80).map(|i| -4.0 + 0.1 * i as f64).collect();
    let data = g.generate(250, RngStream::new(26, 0)).unwrap();
    let rows = risk_curve(&g, &losses, &grid, Some(&data), &QuadratureConfig::default()).unwrap();
    assert_eq!(rows.len(), losses.len() * grid.len());
    for l in &losses {
        let mine: Vec<_> = rows.iter().filter(|r| r.loss == l.name).collect();
        let min = mine.iter().map(|r| r.population_scaled).fold(f64::INFINITY, f64::min);
        assert!((min - 1.0).abs() < 1e-15, "{}", l.name);
        assert!(mine.iter().all(|r| r.empirical_scaled.unwrap() >= 1.0 - 1e-15));
    }
    let hedayat = curve_argmin(&rows, "hedayat", false).unwrap();
    assert!((hedayat - -2.0 * (7.0f64 / 3.0).ln()).abs() <= 0.05 + 1e-9);
    assert!(curve_argmin(&rows, "zhou", false).unwrap().abs() < 1e-9);
    assert!(curve_argmin(&rows, "bqr", false).unwrap().abs() <= 0.05 + 1e-9);
    assert!(curve_argmin(&rows, "nope", false).is_none());

    let without = risk_curve(&g, &losses, &grid, None, &QuadratureConfig::default()).unwrap();
    assert!(without.iter().all(|r| r.empirical.is_none()));
    assert!(risk_curve(
        &GeneratorSpec::example1(),
        &losses,
        &grid,
        None,
        &QuadratureConfig::default()
    )
    .is_err());
}

#[test]
fn sweeps_share_datasets_across_eta() {
    let mut cfg = small(27);
    cfg.replicates = 6;
    let etas = [0.05, 0.5, 2.0];
    let cov = coverage_curve(&cfg, &etas).unwrap();
    assert_eq!(cov.len(), 3);
    for row in &cov {
        assert_eq!(row.replicates, 6);
        assert!((0.0..=1.0).contains(&row.coverage));
        assert!((row.se - (row.coverage * (1.0 - row.coverage) / 6.0).sqrt()).abs() < 1e-15);
    }
    assert!(cov[0].mean_length < cov[2].mean_length);
    let centers = center_sweep(&cfg, &etas).unwrap();
    assert_eq!(centers.len(), 3);
    for row in &centers {
        assert!((row.bias - (row.mean - cfg.truth())).abs() < 1e-15);
        assert!(row.sd > 0.0);
    }
    let mut two = cfg.clone();
    two.workers = 2;
    assert_eq!(centers, center_sweep(&two, &etas).unwrap());
    assert!(coverage_curve(&cfg, &[0.0]).is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("coverage_curve.csv");
    write_csv(&path, &cov).unwrap();
    let header = fs::read_to_string(&path).unwrap();
    assert!(header.starts_with("eta,coverage,se,mean_length,R\n"));
}

#[test]
fn comparison_lists_the_matching_reference_rows() {
    let cfg = small(28);
    let out = run_experiment(&cfg).unwrap();
    let ex1 = comparison(&out.summary, &GeneratorSpec::example1());
    assert_eq!(ex1.len(), 3);
    assert_eq!(ex1[0].method, "this_run");
    assert_eq!(ex1[2].eta, Some(0.02));
    assert_eq!(comparison(&out.summary, &GeneratorSpec::population(0.7)).len(), 1);
    assert_eq!(REFERENCE_RESULTS.iter().filter(|r| r.method == "bqr_gpc").count(), 4);
}
