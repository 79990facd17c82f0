use std::path::Path;

use jointpo::data::{ColumnBindings, Dataset, StratumSpec};
use jointpo::estimator::EstimatorKind;
use jointpo::fixtures::{clustered, two_stratum, write_dataset_csv};
use jointpo::inference::{BootstrapPlan, IntervalMethod, ResampleMode};
use jointpo::nuisance::{OutcomeKind, PropensitySpec};
use jointpo::pipeline::{emit_report, parse_report, run, ReportFormat, RunConfig, VsSource};

fn write_csv(dir: &Path, name: &str, data: &Dataset) -> std::path::PathBuf {
    let path = dir.join(name);
    write_dataset_csv(data, std::fs::File::create(&path).unwrap()).unwrap();
    path
}

fn by_column(path: &Path, column: &str) -> RunConfig {
    RunConfig::new(path, StratumSpec::ExistingColumn { column: column.into() })
}

/// Cells given as (stratum, arm, ones, n).
fn from_cells(cells: &[(f64, u8, usize, usize)]) -> Dataset {
    let (mut a, mut y, mut s) = (Vec::new(), Vec::new(), Vec::new());
    for &(stratum, arm, ones, n) in cells {
        for k in 0..n {
            a.push(arm);
            y.push((k < ones) as u8);
            s.push(stratum);
        }
    }
    Dataset::from_columns(a, y, vec!["s".into()], vec![s]).unwrap()
}

#[test]
fn two_stratum_fixture_recovers_theta_and_null_sweep_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_csv(dir.path(), "two.csv", &two_stratum());
    let grid = dir.path().join("grid.csv");
    std::fs::write(&grid, "scenario,stratum,gamma0,gamma1\nnull,1,0,0\nshift,1,0.05,0\n").unwrap();
    let mut cfg = by_column(&input, "s");
    cfg.gamma_grid = Some(grid);

    let report = run(&cfg).unwrap();
    assert!((report.theta.theta1 - 0.3).abs() < 1e-12);
    assert!((report.theta.theta2 - 0.8).abs() < 1e-12);
    assert_eq!(report.n, 120);
    assert_eq!(report.strata[1].n_treated, 40);

    let null = &report.sensitivity[0];
    assert_eq!(null.scenario, "null");
    assert_eq!(null.theta1.to_bits(), report.theta.theta1.to_bits());
    assert_eq!(null.theta2.to_bits(), report.theta.theta2.to_bits());
    // 0.5 θ1 + 0.5 θ2 = 0.55 − 0.05·0.5 and 0.75 θ1 + 0.25 θ2 = 0.425
    let shift = &report.sensitivity[1];
    assert!((shift.theta1 - 0.325).abs() < 1e-12);
    assert!((shift.theta2 - 0.725).abs() < 1e-12);

    let cells = report.joint.cells;
    assert!((cells.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let mu1 = report.mu.mu1;
    assert!((cells[3] - 0.8 * mu1).abs() < 1e-12);
}

#[test]
fn json_report_roundtrips_with_every_section_populated() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_csv(dir.path(), "clustered.csv", &clustered(150, 4));
    let grid = dir.path().join("grid.csv");
    std::fs::write(&grid, "scenario,stratum,gamma0,gamma1\nnull,1,0,0\n").unwrap();
    let mut cfg = RunConfig::new(
        &input,
        StratumSpec::FactorCross {
            columns: vec!["sex".into(), "age_group".into()],
        },
    );
    cfg.bindings = ColumnBindings {
        cluster: Some("cluster".into()),
        ..ColumnBindings::default()
    };
    cfg.gamma_grid = Some(grid);
    cfg.bootstrap = Some(BootstrapPlan {
        reps: 40,
        mode: ResampleMode::Cluster,
        seed: 9,
        ..BootstrapPlan::default()
    });

    let report = run(&cfg).unwrap();
    let boot = report.bootstrap.as_ref().unwrap();
    assert_eq!(boot.used + boot.failed, 40);
    assert!(report
        .intervals
        .iter()
        .any(|iv| iv.method == IntervalMethod::BootstrapPercentile));
    assert_eq!(report.strata.len(), 4);
    assert!(!report.sensitivity.is_empty());

    let text = emit_report(&report, ReportFormat::Json);
    assert_eq!(parse_report(&text).unwrap(), report);
}

#[test]
fn bootstrap_is_reproducible_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_csv(dir.path(), "two.csv", &two_stratum());
    let mut cfg = by_column(&input, "s");
    cfg.bootstrap = Some(BootstrapPlan {
        reps: 30,
        seed: 123,
        ..BootstrapPlan::default()
    });
    let first = run(&cfg).unwrap();
    let second = run(&cfg).unwrap();
    assert_eq!(first.intervals, second.intervals);
}

#[test]
fn table_output_flags_boundary_and_reports_consistency() {
    // p0 = (0.5, 0.25), p1 = (0.3, 0.9) solve to θ = (1.5, −0.9)
    let data = from_cells(&[(1.0, 0, 10, 20), (1.0, 1, 6, 20), (2.0, 0, 10, 40), (2.0, 1, 36, 40)]);
    let dir = tempfile::tempdir().unwrap();
    let input = write_csv(dir.path(), "boundary.csv", &data);
    let report = run(&by_column(&input, "s")).unwrap();
    assert!(report.theta.boundary);
    assert!((report.theta.theta1 - 1.5).abs() < 1e-12);
    assert!((report.theta.theta2 + 0.9).abs() < 1e-12);

    let table = emit_report(&report, ReportFormat::Table);
    assert!(table.contains("WARNING: theta"), "{table}");
    assert!(table.contains("consistency: implied mu1"), "{table}");
}

#[test]
fn prognostic_vs_feeds_the_orthogonal_estimator() {
    let sim = jointpo::sim::generate(&jointpo::sim::DgpConfig {
        n: 3000,
        seed: 12,
        ..Default::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let plain = Dataset::from_columns(
        sim.data.treatment().to_vec(),
        sim.data.outcome().to_vec(),
        vec!["v_s".into(), "x_other".into()],
        vec![
            sim.data.column("v_s").unwrap().to_vec(),
            sim.data.column("x_other").unwrap().to_vec(),
        ],
    )
    .unwrap();
    let input = write_csv(dir.path(), "sim.csv", &plain);
    let mut cfg = RunConfig::new(
        &input,
        StratumSpec::QuantileBins {
            column: "x_other".into(),
            bins: 4,
        },
    );
    cfg.vs_source = Some(VsSource::Prognostic {
        predictors: vec!["v_s".into()],
    });
    cfg.estimator.kind = EstimatorKind::OrthogonalLinear;
    cfg.estimator.propensity = PropensitySpec::Known { p: 0.5 };
    let report = run(&cfg).unwrap();
    let xi = report.xi.unwrap();
    assert!(xi.converged);
    assert_eq!(xi.names.len(), 4);
    assert!(xi.names.iter().any(|n| n.contains("prognostic_score")));
}

#[test]
fn orthogonal_without_vs_is_a_config_error() {
    let mut cfg = by_column(Path::new("unused.csv"), "s");
    cfg.estimator.kind = EstimatorKind::OrthogonalLogistic;
    assert!(matches!(run(&cfg), Err(jointpo::Error::Config(_))));
}

#[test]
fn stratum_mean_outcome_models_reproduce_proportions() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_csv(dir.path(), "two.csv", &two_stratum());
    let mut cfg = by_column(&input, "s");
    cfg.estimator.kind = EstimatorKind::LsAdjusted;
    cfg.estimator.outcome.kind = OutcomeKind::StratumMeans;
    let adjusted = run(&cfg).unwrap();
    assert!((adjusted.theta.theta1 - 0.3).abs() < 1e-10);
    assert!((adjusted.theta.theta2 - 0.8).abs() < 1e-10);
}
