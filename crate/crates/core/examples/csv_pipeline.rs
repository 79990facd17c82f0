//! The full file-based workflow: CSV in, strata from quantile bins, the
//! orthogonal estimator, a γ sweep and a table report.

use jointpo::data::StratumSpec;
use jointpo::estimator::EstimatorKind;
use jointpo::fixtures::write_fixtures;
use jointpo::nuisance::PropensitySpec;
use jointpo::pipeline::{emit_report, run, ReportFormat, RunConfig, VsSource};

fn main() -> jointpo::Result<()> {
    let dir = std::env::temp_dir().join("jointpo-example");
    write_fixtures(&dir)?;

    let mut cfg = RunConfig::new(
        dir.join("randomized.csv"),
        StratumSpec::QuantileBins {
            column: "x_other".into(),
            bins: 4,
        },
    );
    cfg.vs_source = Some(VsSource::Column { column: "v_s".into() });
    cfg.estimator.kind = EstimatorKind::OrthogonalLinear;
    cfg.estimator.propensity = PropensitySpec::Known { p: 0.5 };
    cfg.gamma_grid = Some(dir.join("gamma_grid.csv"));

    let report = run(&cfg)?;
    print!("{}", emit_report(&report, ReportFormat::Table));
    Ok(())
}
