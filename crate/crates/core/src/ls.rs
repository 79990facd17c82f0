//! Least-squares identification of θ = (P(Y(1)=1 | Y(0)=0), P(Y(1)=1 | Y(0)=1)).
//!
//! Each stratum contributes one equation `p_s^(1) = (1 − p_s^(0)) θ1 + p_s^(0) θ2`;
//! θ̂ solves the unweighted normal equations
//! `(1/|S| Σ Z_s Z_sᵀ) θ = 1/|S| Σ Z_s p_s^(1)` with `Z_s = (1 − p_s^(0), p_s^(0))`.

use nalgebra::{Matrix2, Matrix4, SMatrix, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::{MarginalY0, PseudoOutcomes, StratumRiskTable};

pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankDiagnostic {
    pub full: bool,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// σ_max / σ_min (infinite when σ_min = 0).
    pub condition_number: f64,
}

/// Singular values of the |S|×2 matrix with rows `(1 − p0(s), p0(s))`; the
/// matrix is deficient iff `σ_min ≤ tol · σ_max`.
pub fn check_rank(risks: &StratumRiskTable, tol: f64) -> RankDiagnostic {
    rank_of(&risks.p0, tol)
}

fn rank_of(p0: &[f64], tol: f64) -> RankDiagnostic {
    // singular values from the 2×2 Gram matrix, computed in closed form
    let mut g = Matrix2::zeros();
    for &p in p0 {
        let z = Vector2::new(1.0 - p, p);
        g += z * z.transpose();
    }
    let (a, b, d) = (g[(0, 0)], g[(0, 1)], g[(1, 1)]);
    let half_tr = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let l_max = half_tr + disc;
    // det / l_max avoids cancellation in half_tr - disc
    let l_min = if l_max > 0.0 { ((a * d - b * b) / l_max).max(0.0) } else { 0.0 };
    let (sigma_max, sigma_min) = (l_max.max(0.0).sqrt(), l_min.sqrt());
    RankDiagnostic {
        full: p0.len() >= 2 && sigma_min > tol * sigma_max,
        sigma_min,
        sigma_max,
        condition_number: if sigma_min > 0.0 { sigma_max / sigma_min } else { f64::INFINITY },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub theta1: f64,
    pub theta2: f64,
    /// Covariance of (θ̂1, θ̂2) when computed.
    pub covariance: Option<[[f64; 2]; 2]>,
    /// Some component lies outside [0, 1].
    pub boundary: bool,
}

impl ThetaEstimate {
    pub fn new(theta1: f64, theta2: f64) -> Self {
        Self {
            theta1,
            theta2,
            covariance: None,
            boundary: outside_unit(theta1) || outside_unit(theta2),
        }
    }

    pub fn with_covariance(mut self, cov: Matrix2<f64>) -> Self {
        self.covariance = Some([[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]]);
        self
    }

    pub fn standard_errors(&self) -> Option<[f64; 2]> {
        self.covariance.map(|c| [c[0][0].max(0.0).sqrt(), c[1][1].max(0.0).sqrt()])
    }

    /// Point estimate projected onto [0, 1]² for display; the boundary flag is kept.
    pub fn clamped(&self) -> Self {
        Self {
            theta1: self.theta1.clamp(0.0, 1.0),
            theta2: self.theta2.clamp(0.0, 1.0),
            ..*self
        }
    }
}

fn outside_unit(x: f64) -> bool {
    !(0.0..=1.0).contains(&x)
}

fn normal_matrix(p0: &[f64]) -> Matrix2<f64> {
    let k = p0.len() as f64;
    let mut m = Matrix2::zeros();
    for &p in p0 {
        let z = Vector2::new(1.0 - p, p);
        m += z * z.transpose();
    }
    m / k
}

fn solve_normal(p0: &[f64], response: &[f64], tol: f64) -> Result<ThetaEstimate> {
    let k = p0.len() as f64;
    let rank = rank_of(p0, tol);
    if !rank.full {
        return Err(Error::RankDeficient {
            ratio: rank.sigma_min / rank.sigma_max,
        });
    }
    let m = normal_matrix(p0);
    let mut rhs = Vector2::zeros();
    for (&p, &r) in p0.iter().zip(response) {
        rhs += Vector2::new(1.0 - p, p) * r;
    }
    rhs /= k;
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let t1 = (m[(1, 1)] * rhs[0] - m[(0, 1)] * rhs[1]) / det;
    let t2 = (m[(0, 0)] * rhs[1] - m[(1, 0)] * rhs[0]) / det;
    Ok(ThetaEstimate::new(t1, t2))
}

/// Point estimate θ̂ (default rank tolerance).
pub fn solve_theta(risks: &StratumRiskTable) -> Result<ThetaEstimate> {
    solve_theta_with_tol(risks, DEFAULT_RANK_TOL)
}

pub fn solve_theta_with_tol(risks: &StratumRiskTable, tol: f64) -> Result<ThetaEstimate> {
    solve_normal(&risks.p0, &risks.p1, tol)
}

/// Per-row influence contributions of θ̂, built from the pseudo-outcomes.
///
/// Row i in stratum s contributes
/// `M⁻¹ w_s [Z_s{U1 − p_s^(1) − (θ2 − θ1)(U0 − p_s^(0))} + (−1, 1)ᵀ e_s (U0 − p_s^(0))]`
/// where `M = 1/|S| Σ Z Zᵀ`, `w_s = 1/(|S| π_s)` and `e_s = p_s^(1) − Z_sᵀθ` is the
/// stratum residual (zero when the system is exactly identified).
pub fn theta_influence(
    risks: &StratumRiskTable,
    pseudo: &PseudoOutcomes,
    theta: &ThetaEstimate,
) -> Result<Vec<Vector2<f64>>> {
    let k = risks.levels() as f64;
    let m = normal_matrix(&risks.p0);
    let m_inv = m.try_inverse().ok_or(Error::RankDeficient { ratio: 0.0 })?;
    let dtheta = theta.theta2 - theta.theta1;
    let per_stratum: Vec<(Vector2<f64>, f64, f64)> = risks
        .p0
        .iter()
        .zip(&risks.p1)
        .zip(&risks.share)
        .map(|((&p0, &p1), &share)| {
            let z = Vector2::new(1.0 - p0, p0);
            let resid = p1 - z.dot(&Vector2::new(theta.theta1, theta.theta2));
            (z, resid, 1.0 / (k * share))
        })
        .collect();
    let dz = Vector2::new(-1.0, 1.0);
    Ok(pseudo
        .strata
        .iter()
        .zip(pseudo.u0.iter().zip(&pseudo.u1))
        .map(|(&s, (&u0, &u1))| {
            let (z, resid, w) = per_stratum[s - 1];
            let d0 = u0 - risks.p0[s - 1];
            let d1 = u1 - risks.p1[s - 1];
            m_inv * ((z * (d1 - dtheta * d0) + dz * (resid * d0)) * w)
        })
        .collect())
}

/// Sandwich covariance of θ̂: `(1/n²) Σ IF_i IF_iᵀ`.
pub fn theta_variance(
    risks: &StratumRiskTable,
    pseudo: &PseudoOutcomes,
    theta: &ThetaEstimate,
) -> Result<Matrix2<f64>> {
    let inf = theta_influence(risks, pseudo, theta)?;
    Ok(outer_mean(&inf) / inf.len() as f64)
}

fn outer_mean<const D: usize>(rows: &[SMatrix<f64, D, 1>]) -> SMatrix<f64, D, D> {
    let n = rows.len() as f64;
    let mean = rows.iter().fold(SMatrix::<f64, D, 1>::zeros(), |acc, r| acc + r) / n;
    rows.iter()
        .fold(SMatrix::<f64, D, D>::zeros(), |acc, r| {
            let d = r - mean;
            acc + d * d.transpose()
        })
        / n
}

/// Covariance Ω of (θ̂1, θ̂2, μ̂0, μ̂1) from per-row influence vectors.
pub fn joint_covariance(rows: &[Vector4<f64>]) -> Matrix4<f64> {
    outer_mean(rows) / rows.len() as f64
}

/// Stacks θ and μ influence rows; μ̂1 = mean of U0 over all rows.
pub fn ls_joint_influence(
    risks: &StratumRiskTable,
    pseudo: &PseudoOutcomes,
    theta: &ThetaEstimate,
    mu: &MarginalY0,
) -> Result<Vec<Vector4<f64>>> {
    let th = theta_influence(risks, pseudo, theta)?;
    Ok(th
        .iter()
        .zip(&pseudo.u0)
        .map(|(t, &u0)| Vector4::new(t[0], t[1], -(u0 - mu.mu1), u0 - mu.mu1))
        .collect())
}

/// The four cells P(Y(0)=i, Y(1)=j), ordered 00, 01, 10, 11.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPODistribution {
    pub cells: [f64; 4],
    pub covariance: Option<[[f64; 4]; 4]>,
    pub boundary: bool,
}

impl JointPODistribution {
    pub fn standard_errors(&self) -> Option<[f64; 4]> {
        self.covariance.map(|c| std::array::from_fn(|j| c[j][j].max(0.0).sqrt()))
    }
}

pub const CELL_NAMES: [&str; 4] = ["P(Y0=0,Y1=0)", "P(Y0=0,Y1=1)", "P(Y0=1,Y1=0)", "P(Y0=1,Y1=1)"];

/// Cell values T_j(η) at η = (θ1, θ2, μ0, μ1).
pub fn joint_cells(eta: &[f64; 4]) -> [f64; 4] {
    let [t1, t2, m0, m1] = *eta;
    [(1.0 - t1) * m0, t1 * m0, (1.0 - t2) * m1, t2 * m1]
}

/// Analytic gradients ∇T_j(η), one row per cell.
pub fn joint_gradients(eta: &[f64; 4]) -> [[f64; 4]; 4] {
    let [t1, t2, m0, m1] = *eta;
    [
        [-m0, 0.0, 1.0 - t1, 0.0],
        [m0, 0.0, t1, 0.0],
        [0.0, -m1, 0.0, 1.0 - t2],
        [0.0, m1, 0.0, t2],
    ]
}

/// Joint distribution with delta-method covariance `G Ω Gᵀ` when Ω is given.
pub fn joint_distribution(theta: &ThetaEstimate, mu: &MarginalY0, omega: Option<&Matrix4<f64>>) -> JointPODistribution {
    let eta = [theta.theta1, theta.theta2, mu.mu0, mu.mu1];
    let cells = joint_cells(&eta);
    let covariance = omega.map(|om| {
        let g = Matrix4::from_fn(|i, j| joint_gradients(&eta)[i][j]);
        let c = g * om * g.transpose();
        std::array::from_fn(|i| std::array::from_fn(|j| c[(i, j)]))
    });
    JointPODistribution {
        cells,
        covariance,
        boundary: theta.boundary,
    }
}

/// Offsets γ_sy = P(Y(1)=1 | Y(0)=y, S=s) − P(Y(1)=1 | Y(0)=y), one `[γ_s0, γ_s1]` per stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySpec {
    pub gamma: Vec<[f64; 2]>,
}

impl SensitivitySpec {
    pub fn zero(levels: usize) -> Self {
        Self {
            gamma: vec![[0.0; 2]; levels],
        }
    }
}

/// θ̂ when stratum s obeys `p_s^(1) = (θ1 + γ_s0)(1 − p_s^(0)) + (θ2 + γ_s1) p_s^(0)`.
pub fn solve_theta_sensitivity(risks: &StratumRiskTable, spec: &SensitivitySpec) -> Result<ThetaEstimate> {
    if spec.gamma.len() != risks.levels() {
        return Err(Error::DimensionMismatch {
            expected: risks.levels(),
            found: spec.gamma.len(),
        });
    }
    let response: Vec<f64> = risks
        .p0
        .iter()
        .zip(&risks.p1)
        .zip(&spec.gamma)
        .map(|((&p0, &p1), g)| p1 - (g[0] * (1.0 - p0) + g[1] * p0))
        .collect();
    solve_normal(&risks.p0, &response, DEFAULT_RANK_TOL)
}

pub fn sensitivity_sweep(risks: &StratumRiskTable, grid: &[SensitivitySpec]) -> Result<Vec<ThetaEstimate>> {
    grid.iter().map(|g| solve_theta_sensitivity(risks, g)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCheck {
    /// μ1 implied by P(Y(1)=1) = θ1 μ0 + θ2 μ1.
    pub implied_mu1: f64,
    pub direct_mu1: f64,
    pub discrepancy: f64,
}

pub fn consistency_check(theta: &ThetaEstimate, mu: &MarginalY0, p1_marginal: f64) -> Result<ConsistencyCheck> {
    let denom = theta.theta2 - theta.theta1;
    if denom == 0.0 {
        return Err(Error::DegenerateTheta);
    }
    let implied = (p1_marginal - theta.theta1) / denom;
    Ok(ConsistencyCheck {
        implied_mu1: implied,
        direct_mu1: mu.mu1,
        discrepancy: implied - mu.mu1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(p0: &[f64], p1: &[f64]) -> StratumRiskTable {
        StratumRiskTable::from_risks(p0.to_vec(), p1.to_vec()).unwrap()
    }

    #[test]
    fn rank_examples() {
        assert!(check_rank(&table(&[0.2, 0.6], &[0.0, 0.0]), DEFAULT_RANK_TOL).full);
        assert!(!check_rank(&table(&[0.3, 0.3], &[0.0, 0.0]), DEFAULT_RANK_TOL).full);
        assert!(!check_rank(&table(&[0.3, 0.3 + 1e-12], &[0.0, 0.0]), 1e-8).full);
    }

    #[test]
    fn two_by_two_solve() {
        let t = solve_theta(&table(&[0.2, 0.6], &[0.4, 0.6])).unwrap();
        assert!((t.theta1 - 0.3).abs() < 1e-14);
        assert!((t.theta2 - 0.8).abs() < 1e-14);
        assert!(!t.boundary);
    }

    #[test]
    fn null_effect_and_constant_solutions() {
        let t = solve_theta(&table(&[0.2, 0.7], &[0.2, 0.7])).unwrap();
        assert!(t.theta1.abs() < 1e-14 && (t.theta2 - 1.0).abs() < 1e-14);
        let t = solve_theta(&table(&[0.1, 0.4, 0.8], &[0.35; 3])).unwrap();
        assert!((t.theta1 - 0.35).abs() < 1e-14 && (t.theta2 - 0.35).abs() < 1e-14);
    }

    #[test]
    fn rank_deficient_errors() {
        assert!(matches!(
            solve_theta(&table(&[0.3, 0.3], &[0.4, 0.5])),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn boundary_flag_raised_not_projected() {
        let t = solve_theta(&table(&[0.2, 0.6], &[0.3, 0.75])).unwrap();
        assert!(t.theta2 > 1.0);
        assert!(t.boundary);
        let c = t.clamped();
        assert_eq!(c.theta2, 1.0);
        assert!(c.boundary);
    }

    #[test]
    fn joint_cells_and_gradient() {
        let theta = ThetaEstimate::new(0.3, 0.8);
        let mu = MarginalY0 { mu0: 0.5, mu1: 0.5 };
        let j = joint_distribution(&theta, &mu, None);
        for (c, e) in j.cells.iter().zip([0.35, 0.15, 0.10, 0.40]) {
            assert!((c - e).abs() < 1e-15);
        }
        assert_eq!(joint_gradients(&[0.3, 0.8, 0.5, 0.5])[1], [0.5, 0.0, 0.3, 0.0]);
    }

    #[test]
    fn zero_influence_gives_zero_covariance() {
        let t = table(&[0.2, 0.6], &[0.4, 0.6]);
        let pseudo = PseudoOutcomes {
            strata: vec![1, 1, 2, 2],
            u0: vec![0.2, 0.2, 0.6, 0.6],
            u1: vec![0.4, 0.4, 0.6, 0.6],
        };
        let theta = solve_theta(&t).unwrap();
        let cov = theta_variance(&t, &pseudo, &theta).unwrap();
        assert_eq!(cov, Matrix2::zeros());
    }

    #[test]
    fn sensitivity_examples() {
        let t = table(&[0.2, 0.6], &[0.4, 0.6]);
        let base = solve_theta(&t).unwrap();
        let zero = solve_theta_sensitivity(&t, &SensitivitySpec::zero(2)).unwrap();
        assert_eq!(base, zero);
        let shifted = solve_theta_sensitivity(
            &t,
            &SensitivitySpec {
                gamma: vec![[0.05, 0.0]; 2],
            },
        )
        .unwrap();
        assert!((shifted.theta1 - 0.25).abs() < 1e-10);
        assert!((shifted.theta2 - 0.8).abs() < 1e-10);
    }

    #[test]
    fn sweep_is_monotone_in_each_gamma() {
        let t = table(&[0.2, 0.6], &[0.4, 0.6]);
        for s in 0..2 {
            for y in 0..2 {
                let grid: Vec<SensitivitySpec> = (-4..=4)
                    .map(|i| {
                        let mut g = SensitivitySpec::zero(2);
                        g.gamma[s][y] = 0.01 * i as f64;
                        g
                    })
                    .collect();
                let out = sensitivity_sweep(&t, &grid).unwrap();
                let d1: Vec<f64> = out.windows(2).map(|w| w[1].theta1 - w[0].theta1).collect();
                let d2: Vec<f64> = out.windows(2).map(|w| w[1].theta2 - w[0].theta2).collect();
                assert!(d1.iter().all(|d| *d <= 1e-15) || d1.iter().all(|d| *d >= -1e-15));
                assert!(d2.iter().all(|d| *d <= 1e-15) || d2.iter().all(|d| *d >= -1e-15));
            }
        }
    }

    #[test]
    fn consistency_examples() {
        let c = consistency_check(&ThetaEstimate::new(0.3, 0.8), &MarginalY0 { mu0: 0.5, mu1: 0.5 }, 0.55).unwrap();
        assert!((c.implied_mu1 - 0.5).abs() < 1e-14);
        assert!(c.discrepancy.abs() < 1e-14);
        assert!(matches!(
            consistency_check(&ThetaEstimate::new(0.4, 0.4), &MarginalY0 { mu0: 0.5, mu1: 0.5 }, 0.4),
            Err(Error::DegenerateTheta)
        ));
    }

    proptest! {
        #[test]
        fn permutation_and_duplication_invariance(
            p0 in proptest::collection::vec(0.05f64..0.95, 2..6),
            noise in proptest::collection::vec(-0.05f64..0.05, 6),
            th in (0.0f64..1.0, 0.0f64..1.0),
        ) {
            let p1: Vec<f64> = p0.iter().zip(&noise).map(|(&p, e)| (1.0 - p) * th.0 + p * th.1 + e).collect();
            let t = table(&p0, &p1);
            prop_assume!(check_rank(&t, 1e-4).full);
            let base = solve_theta(&t).unwrap();
            let k = p0.len();
            let perm: Vec<usize> = (0..k).rev().collect();
            let rev = solve_theta(&t.permuted(&perm)).unwrap();
            prop_assert!((base.theta1 - rev.theta1).abs() < 1e-9);
            prop_assert!((base.theta2 - rev.theta2).abs() < 1e-9);
            let mut p0d = p0.clone();
            let mut p1d = p1.clone();
            p0d.extend_from_slice(&p0);
            p1d.extend_from_slice(&p1);
            let dup = solve_theta(&table(&p0d, &p1d)).unwrap();
            prop_assert!((base.theta1 - dup.theta1).abs() < 1e-9);
            prop_assert!((base.theta2 - dup.theta2).abs() < 1e-9);
        }

        #[test]
        fn cells_sum_to_one(t1 in -0.5f64..1.5, t2 in -0.5f64..1.5, m in 0.0f64..1.0) {
            let c = joint_cells(&[t1, t2, 1.0 - m, m]);
            prop_assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
