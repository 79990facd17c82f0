//! Orthogonal estimator with a linear structural model in V_S, cross-fitted
//! spline outcome regressions and a known assignment probability.

use jointpo::estimator::fit;
use jointpo::sim::{default_study_estimator, generate, oracle_targets, DgpConfig};

fn main() -> jointpo::Result<()> {
    let dgp = DgpConfig { n: 10_000, seed: 42, ..Default::default() };
    let data = generate(&dgp)?.validated()?;
    let f = fit(&data, &default_study_estimator())?;
    let xi = f.xi.as_ref().expect("orthogonal fit");
    let se = xi.standard_errors().unwrap_or_default();
    let truth = oracle_targets(&dgp).as_vec();

    println!("Newton: {} iterations, |score| = {:.1e}", xi.iterations, xi.score_norm);
    for (j, name) in f.xi_names.iter().enumerate() {
        println!("{name:<12} {:>8.4}  (se {:.4}, truth {:.3})", xi.xi()[j], se[j], truth[j]);
    }
    let th = f.theta.standard_errors().unwrap();
    println!("theta1       {:>8.4}  (se {:.4}, truth {:.3})", f.theta.theta1, th[0], truth[4]);
    println!("theta2       {:>8.4}  (se {:.4}, truth {:.3})", f.theta.theta2, th[1], truth[5]);
    println!("joint cells  {:.4?}", f.joint.cells);
    Ok(())
}
