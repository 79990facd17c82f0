//! A small Monte Carlo study: bias, empirical and sandwich standard errors and
//! coverage of the orthogonal estimator on the synthetic design.

use jointpo::sim::{run_study, DgpConfig, StudyConfig};

fn main() -> jointpo::Result<()> {
    let reps = std::env::args().nth(1).and_then(|r| r.parse().ok()).unwrap_or(50);
    let study = StudyConfig {
        reps,
        dgp: DgpConfig { n: 5000, ..Default::default() },
        ..Default::default()
    };
    let report = run_study(&study)?;
    print!("{}", report.to_table());
    Ok(())
}
