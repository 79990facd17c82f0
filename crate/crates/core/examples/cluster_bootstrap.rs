//! Households share an unobserved effect on Y(0), so rows within a household
//! are correlated. Resampling whole households gives honest intervals.

use jointpo::data::{construct_stratum, validate, StratumSpec};
use jointpo::estimator::{fit, EstimatorConfig, TARGET_NAMES};
use jointpo::fixtures::clustered;
use jointpo::inference::{bootstrap, BootstrapPlan, ResampleMode};

fn main() -> jointpo::Result<()> {
    let spec = StratumSpec::FactorCross {
        columns: vec!["sex".into(), "age_group".into()],
    };
    let raw = clustered(800, 11);
    let cfg = EstimatorConfig::default();
    let estimate = |d: &jointpo::data::Dataset| -> jointpo::Result<Vec<f64>> {
        let (d, _) = construct_stratum(d.clone(), &spec)?;
        Ok(fit(&validate(d)?, &cfg)?.targets())
    };
    let point = estimate(&raw)?;
    let names: Vec<String> = TARGET_NAMES.iter().map(|s| s.to_string()).collect();

    for mode in [ResampleMode::IidRows, ResampleMode::Cluster] {
        let plan = BootstrapPlan { reps: 300, mode, seed: 5, ..Default::default() };
        let out = bootstrap(&raw, &names, &point, estimate, &plan)?;
        println!("{mode:?}: {} replicates used", out.report.replicates_used);
        for iv in out.report.intervals.iter().take(3) {
            println!("  {:<8} {:.4}  [{:.4}, {:.4}]  se {:.4}", iv.name, iv.point, iv.lower, iv.upper, iv.se);
        }
    }
    Ok(())
}
