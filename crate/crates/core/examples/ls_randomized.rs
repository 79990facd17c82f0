//! Least squares on a randomized trial: stratum proportions, θ, the joint
//! distribution and sandwich standard errors.

use jointpo::data::validate;
use jointpo::estimator::{fit, EstimatorConfig, EstimatorKind, TARGET_NAMES};
use jointpo::fixtures::two_stratum;
use jointpo::data::{construct_stratum, StratumSpec};

fn main() -> jointpo::Result<()> {
    // 120 rows, strata in column `s`: p0 = (0.5, 0.25), p1 = (0.55, 0.425)
    let (data, _) = construct_stratum(two_stratum(), &StratumSpec::ExistingColumn { column: "s".into() })?;
    let data = validate(data)?;
    let f = fit(&data, &EstimatorConfig::new(EstimatorKind::Ls))?;

    for s in 0..f.risks.levels() {
        println!("stratum {}: p0 = {:.3}, p1 = {:.3}", s + 1, f.risks.p0[s], f.risks.p1[s]);
    }
    println!("rank: sigma_min = {:.4}, condition = {:.2}", f.rank.sigma_min, f.rank.condition_number);
    for ((name, value), se) in TARGET_NAMES.iter().zip(f.targets()).zip(f.target_standard_errors()) {
        println!("{name:<14} {value:>8.4}  (se {se:.4})");
    }
    Ok(())
}
