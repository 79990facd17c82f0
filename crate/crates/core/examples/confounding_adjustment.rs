//! Treatment that depends on V_S biases stratum proportions. AIPW risks and
//! the orthogonal score with a fitted propensity remove the bias.

use jointpo::estimator::{fit, EstimatorConfig, EstimatorKind};
use jointpo::nuisance::PropensitySpec;
use jointpo::pipeline::kind_name;
use jointpo::sim::{default_study_estimator, generate, oracle_targets, population_risks, DgpConfig};

fn main() -> jointpo::Result<()> {
    let dgp = DgpConfig {
        n: 20_000,
        seed: 3,
        treatment_v_slope: 1.0,
        ..Default::default()
    };
    let data = generate(&dgp)?.validated()?;
    let ls_target = population_risks(&dgp)?.ls_theta()?;
    let structural = oracle_targets(&dgp);
    println!(
        "targets: least squares ({:.3}, {:.3}), structural ({:.3}, {:.3})",
        ls_target.theta1, ls_target.theta2, structural.theta1, structural.theta2
    );

    let adjusted = |kind| EstimatorConfig {
        kind,
        propensity: PropensitySpec::Logistic,
        ..default_study_estimator()
    };
    for cfg in [
        EstimatorConfig::new(EstimatorKind::Ls),
        adjusted(EstimatorKind::LsAdjusted),
        adjusted(EstimatorKind::OrthogonalLinear),
    ] {
        let f = fit(&data, &cfg)?;
        let se = f.theta.standard_errors().unwrap();
        println!(
            "{:<18} theta = ({:.3} ± {:.3}, {:.3} ± {:.3})",
            kind_name(cfg.kind),
            f.theta.theta1,
            1.96 * se[0],
            f.theta.theta2,
            1.96 * se[1]
        );
    }
    Ok(())
}
