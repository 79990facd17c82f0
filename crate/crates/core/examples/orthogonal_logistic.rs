//! Logistic structural model g(v) = expit(β0 + β1 v), h(v) = expit(λ0 + λ1 v),
//! solved by damped Newton from a least-squares start.

use jointpo::estimator::{fit, EstimatorConfig, EstimatorKind};
use jointpo::orthogonal::LinkKind;
use jointpo::sim::{default_study_estimator, generate, DgpConfig};

fn main() -> jointpo::Result<()> {
    let dgp = DgpConfig {
        n: 20_000,
        seed: 7,
        beta: [0.0, 0.5],
        lambda: [1.0, -0.5],
        structural_link: LinkKind::Logistic,
        ..Default::default()
    };
    let data = generate(&dgp)?.validated()?;
    let cfg = EstimatorConfig {
        kind: EstimatorKind::OrthogonalLogistic,
        ..default_study_estimator()
    };
    let f = fit(&data, &cfg)?;
    let xi = f.xi.as_ref().expect("orthogonal fit");
    let se = xi.standard_errors().unwrap_or_default();
    let truth = [dgp.beta[0], dgp.beta[1], dgp.lambda[0], dgp.lambda[1]];
    println!("converged: {} after {} iterations", xi.converged, xi.iterations);
    for (j, name) in f.xi_names.iter().enumerate() {
        println!("{name:<12} {:>8.4} ± {:.4}   truth {:+.2}", xi.xi()[j], 1.96 * se[j], truth[j]);
    }
    println!("theta = ({:.4}, {:.4})", f.theta.theta1, f.theta.theta2);
    Ok(())
}
