//! How θ moves when effect modification by S is allowed to leak through
//! offsets γ_sy = P(Y(1)=1 | Y(0)=y, S=s) − θ_y.

use jointpo::ls::{sensitivity_sweep, solve_theta, SensitivitySpec};
use jointpo::risk::StratumRiskTable;

fn main() -> jointpo::Result<()> {
    let risks = StratumRiskTable::from_risks(vec![0.2, 0.35, 0.5, 0.65], vec![0.38, 0.465, 0.55, 0.635])?;
    let base = solve_theta(&risks)?;
    println!("base: theta = ({:.4}, {:.4})", base.theta1, base.theta2);

    let grid: Vec<SensitivitySpec> = [-0.04, -0.02, 0.0, 0.02, 0.04]
        .iter()
        .map(|&g| SensitivitySpec {
            // offsets that grow with the stratum index, on the Y(0)=0 arm only
            gamma: (0..4).map(|s| [g * (s as f64 - 1.5), 0.0]).collect(),
        })
        .collect();
    for (spec, th) in grid.iter().zip(sensitivity_sweep(&risks, &grid)?) {
        let slope = spec.gamma[3][0] / 1.5;
        println!(
            "gamma slope {slope:+.2}: theta = ({:.4}, {:.4}){}",
            th.theta1,
            th.theta2,
            if th.boundary { "  outside [0, 1]" } else { "" }
        );
    }
    Ok(())
}
