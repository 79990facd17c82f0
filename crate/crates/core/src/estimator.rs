//! One entry point for the four estimators, shared by the CLI pipeline, the
//! bootstrap and the simulation harness.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::data::ValidatedDataset;
use crate::error::{Error, Result};
use crate::ls::{
    self, check_rank, consistency_check, joint_covariance, joint_distribution, ConsistencyCheck,
    JointPODistribution, RankDiagnostic, ThetaEstimate,
};
use crate::nuisance::{fit_nuisances, FoldSpec, NuisanceSet, OutcomeModelSpec, PropensitySpec, DEFAULT_CLIP};
use crate::orthogonal::{
    ls_initializer, solve_xi, theta_with_influence, xi_variance, BasisSpec, LinkKind, LinkSpec, RiskGrid,
    ScoreInputs, XiEstimate,
};
use crate::risk::{estimate_mu, marginal_y1, risks_by_aipw, risks_by_proportion, MarginalY0, StratumRiskTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// Stratum sample proportions, then least squares.
    #[default]
    Ls,
    /// AIPW stratum risks from outcome and propensity models, then least squares.
    LsAdjusted,
    OrthogonalLinear,
    OrthogonalLogistic,
}

impl EstimatorKind {
    pub fn is_orthogonal(self) -> bool {
        matches!(self, EstimatorKind::OrthogonalLinear | EstimatorKind::OrthogonalLogistic)
    }

    pub fn link(self) -> Option<LinkKind> {
        match self {
            EstimatorKind::OrthogonalLinear => Some(LinkKind::Linear),
            EstimatorKind::OrthogonalLogistic => Some(LinkKind::Logistic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    /// Column holding V_S; overrides `outcome.vs_column`.
    pub vs_column: Option<String>,
    pub outcome: OutcomeModelSpec,
    pub propensity: PropensitySpec,
    pub folds: FoldSpec,
    pub clip: f64,
    /// Basis for the structural model; defaults to (1, V_S).
    pub basis: Option<BasisSpec>,
    pub rank_tol: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::Ls,
            vs_column: None,
            outcome: OutcomeModelSpec::default(),
            propensity: PropensitySpec::StratumShare,
            folds: FoldSpec::default(),
            clip: DEFAULT_CLIP,
            basis: None,
            rank_tol: ls::DEFAULT_RANK_TOL,
        }
    }
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn with_vs(mut self, column: &str) -> Self {
        self.vs_column = Some(column.into());
        self
    }

    /// Checks that the estimator has what it needs, without touching data.
    pub fn validate(&self) -> Result<()> {
        if self.kind.is_orthogonal() && self.vs_column.is_none() && self.basis.is_none() {
            return Err(Error::Config(format!("{:?} estimator requires a V_S source", self.kind)));
        }
        if !(0.0..0.5).contains(&self.clip) {
            return Err(Error::Config(format!("clip must lie in [0, 0.5), got {}", self.clip)));
        }
        if let PropensitySpec::Known { p } = self.propensity {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Config(format!("known treatment probability must lie in (0, 1), got {p}")));
            }
        }
        Ok(())
    }

    fn outcome_spec(&self) -> OutcomeModelSpec {
        let mut spec = self.outcome.clone();
        if self.vs_column.is_some() {
            spec.vs_column = self.vs_column.clone();
        }
        spec
    }

    fn link_spec(&self) -> Option<LinkSpec> {
        let kind = self.kind.link()?;
        let basis = self.basis.clone().or_else(|| {
            self.vs_column
                .as_ref()
                .map(|c| BasisSpec::Linear { column: c.clone() })
        })?;
        Some(LinkSpec { kind, basis })
    }
}

/// Everything an estimator produces on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub kind: EstimatorKind,
    pub risks: StratumRiskTable,
    pub rank: RankDiagnostic,
    pub theta: ThetaEstimate,
    pub mu: MarginalY0,
    pub joint: JointPODistribution,
    /// Sandwich covariance of (θ1, θ2, μ0, μ1).
    pub omega: [[f64; 4]; 4],
    pub xi: Option<XiEstimate>,
    pub xi_names: Vec<String>,
    /// Direct estimate of P(Y(1) = 1).
    pub p1_marginal: f64,
    pub consistency: Option<ConsistencyCheck>,
    pub nuisance_converged: bool,
}

/// Names of the targets returned by [`Fit::targets`].
pub const TARGET_NAMES: [&str; 7] = [
    "theta1",
    "theta2",
    "mu1",
    "P(Y0=0,Y1=0)",
    "P(Y0=0,Y1=1)",
    "P(Y0=1,Y1=0)",
    "P(Y0=1,Y1=1)",
];

impl Fit {
    /// (θ1, θ2, μ1, four joint cells), the vector the bootstrap resamples.
    pub fn targets(&self) -> Vec<f64> {
        let mut v = vec![self.theta.theta1, self.theta.theta2, self.mu.mu1];
        v.extend_from_slice(&self.joint.cells);
        v
    }

    /// Sandwich standard errors aligned with [`Fit::targets`].
    pub fn target_standard_errors(&self) -> Vec<f64> {
        let th = self.theta.standard_errors().unwrap_or([f64::NAN; 2]);
        let mut v = vec![th[0], th[1], self.omega[3][3].max(0.0).sqrt()];
        v.extend_from_slice(&self.joint.standard_errors().unwrap_or([f64::NAN; 4]));
        v
    }

    /// Errors if the orthogonal Newton solve stopped short of tolerance.
    pub fn require_converged(&self) -> Result<()> {
        match &self.xi {
            Some(x) if !x.converged => Err(Error::NonConvergence {
                iterations: x.iterations,
                score_norm: x.score_norm,
            }),
            _ => Ok(()),
        }
    }
}

fn matrix4_array(m: &Matrix4<f64>) -> [[f64; 4]; 4] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

/// Cross-fitted nuisances under the config's outcome and propensity specs.
pub fn fit_nuisance_set(data: &ValidatedDataset, cfg: &EstimatorConfig) -> Result<NuisanceSet> {
    fit_nuisances(data, &cfg.outcome_spec(), &cfg.propensity, &cfg.folds, cfg.clip)
}

/// Fits the configured estimator.
pub fn fit(data: &ValidatedDataset, cfg: &EstimatorConfig) -> Result<Fit> {
    cfg.validate()?;
    match cfg.kind {
        EstimatorKind::Ls => fit_ls(risks_by_proportion(data)?, cfg, true),
        EstimatorKind::LsAdjusted => {
            let nuis = fit_nuisance_set(data, cfg)?;
            fit_ls(risks_by_aipw(data, &nuis)?, cfg, nuis.all_converged)
        }
        EstimatorKind::OrthogonalLinear | EstimatorKind::OrthogonalLogistic => {
            let nuis = fit_nuisance_set(data, cfg)?;
            fit_orthogonal_with(data, cfg, &nuis)
        }
    }
}

/// Least squares on a risk table that carries pseudo-outcomes.
pub fn fit_ls(risks: StratumRiskTable, cfg: &EstimatorConfig, nuisance_converged: bool) -> Result<Fit> {
    let rank = check_rank(&risks, cfg.rank_tol);
    let theta = ls::solve_theta_with_tol(&risks, cfg.rank_tol)?;
    let mu = estimate_mu(&risks);
    let pseudo = risks.pseudo.as_ref().ok_or(Error::MissingNuisance(0))?;
    let rows = ls::ls_joint_influence(&risks, pseudo, &theta, &mu)?;
    let omega = joint_covariance(&rows);
    let theta = theta.with_covariance(omega.fixed_view::<2, 2>(0, 0).into_owned());
    let joint = joint_distribution(&theta, &mu, Some(&omega));
    let p1_marginal = marginal_y1(&risks);
    Ok(Fit {
        kind: cfg.kind,
        rank,
        consistency: consistency_check(&theta, &mu, p1_marginal).ok(),
        theta,
        mu,
        joint,
        omega: matrix4_array(&omega),
        xi: None,
        xi_names: Vec::new(),
        p1_marginal,
        nuisance_converged,
        risks,
    })
}

/// Orthogonal estimator with caller-supplied nuisances (e.g. oracle values).
pub fn fit_orthogonal_with(data: &ValidatedDataset, cfg: &EstimatorConfig, nuis: &NuisanceSet) -> Result<Fit> {
    let link = cfg
        .link_spec()
        .ok_or_else(|| Error::Config(format!("{:?} is not an orthogonal estimator", cfg.kind)))?;
    let risks = risks_by_aipw(data, nuis)?;
    let inputs = ScoreInputs::new(data, nuis, &link)?;
    let xi0 = ls_initializer(&RiskGrid::from_inputs(&inputs), link.kind)?;
    let mut xi = solve_xi(&inputs, &xi0)?;
    let sandwich = xi_variance(&inputs, &xi.xi())?;
    xi.covariance = Some(
        (0..sandwich.covariance.nrows())
            .map(|i| sandwich.covariance.row(i).iter().copied().collect())
            .collect(),
    );
    let (theta, theta_rows) = theta_with_influence(&inputs.basis, &xi.xi(), link.kind, &sandwich.influence);
    let mu = estimate_mu(&risks);
    let pseudo = risks.pseudo.as_ref().expect("aipw table has pseudo-outcomes");
    let rows: Vec<Vector4<f64>> = theta_rows
        .iter()
        .zip(&pseudo.u0)
        .map(|(t, &u0)| Vector4::new(t[0], t[1], -(u0 - mu.mu1), u0 - mu.mu1))
        .collect();
    let omega = joint_covariance(&rows);
    let theta = theta.with_covariance(omega.fixed_view::<2, 2>(0, 0).into_owned());
    let joint = joint_distribution(&theta, &mu, Some(&omega));
    let p1_marginal = marginal_y1(&risks);
    let names = link.basis.names(data)?;
    let xi_names = ["beta", "lambda"]
        .iter()
        .flat_map(|blk| names.iter().map(move |b| format!("{blk}[{b}]")))
        .collect();
    Ok(Fit {
        kind: cfg.kind,
        rank: check_rank(&risks, cfg.rank_tol),
        consistency: consistency_check(&theta, &mu, p1_marginal).ok(),
        theta,
        mu,
        joint,
        omega: matrix4_array(&omega),
        xi: Some(xi),
        xi_names,
        p1_marginal,
        nuisance_converged: nuis.all_converged,
        risks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{validate_dataset, Observation};

    fn two_stratum() -> ValidatedDataset {
        // p_1^(0) = 0.5, p_1^(1) = 0.55; p_2^(0) = 0.25, p_2^(1) = 0.425 ⇒ θ = (0.3, 0.8)
        let mut rows = Vec::new();
        let mut push = |s: usize, a: u8, ones: usize, n: usize| {
            for k in 0..n {
                rows.push(Observation::new(a, (k < ones) as u8, vec![], s));
            }
        };
        push(1, 0, 10, 20);
        push(1, 1, 11, 20);
        push(2, 0, 10, 40);
        push(2, 1, 17, 40);
        validate_dataset(vec![], &rows).unwrap()
    }

    #[test]
    fn ls_on_two_strata() {
        let f = fit(&two_stratum(), &EstimatorConfig::default()).unwrap();
        assert!((f.theta.theta1 - 0.3).abs() < 1e-12);
        assert!((f.theta.theta2 - 0.8).abs() < 1e-12);
        assert!(f.theta.covariance.is_some());
        assert_eq!(f.targets().len(), TARGET_NAMES.len());
        let cells: f64 = f.joint.cells.iter().sum();
        assert!((cells - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_requires_vs_source() {
        let cfg = EstimatorConfig::new(EstimatorKind::OrthogonalLogistic);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(cfg.with_vs("v").validate().is_ok());
    }
}
