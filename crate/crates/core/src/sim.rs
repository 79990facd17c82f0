//! Synthetic data with known ground truth and a Monte Carlo study runner.
//!
//! The default configuration draws
//!
//! ```text
//! V_S     ~ Normal(0, 1) truncated to [−2, 2]   (rejection sampling)
//! X_other = 0.25 V_S + Normal(0, 1);  S = sample quartile of X_other
//! A       ~ Bernoulli(0.5)
//! logit P(Y(0)=1 | S, V_S) = −0.5 + 0.3 (S − 2) + 0.2 V_S
//! P(Y(1)=1 | Y(0)=0, V_S) = 0.3 + 0.1 V_S
//! P(Y(1)=1 | Y(0)=1, V_S) = 0.7 − 0.05 V_S
//! ```
//!
//! so θ = (0.3, 0.7). A nonzero `treatment_v_slope` makes treatment depend on
//! V_S, which confounds the within-stratum arm comparison.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::data::{construct_stratum, validate, Dataset, StratumSpec, ValidatedDataset};
use crate::error::{Error, Result};
use crate::estimator::{self, EstimatorConfig, EstimatorKind, Fit};
use crate::inference::{bootstrap, normal_critical, BootstrapPlan};
use crate::ls::{self, ThetaEstimate};
use crate::nuisance::{expit, logit, FoldSpec, NuisanceSet, OutcomeModelSpec, PropensitySpec};
use crate::orthogonal::{orthogonality_probe, BasisSpec, LinkKind, LinkSpec, ProbeDirection, ProbeResult, ScoreInputs};
use crate::risk::StratumRiskTable;
use crate::rng;

pub const VS_COLUMN: &str = "v_s";
pub const X_OTHER_COLUMN: &str = "x_other";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    pub n: usize,
    pub seed: u64,
    /// Structural model for P(Y(1)=1 | Y(0)=0, v): link(β0 + β1 v).
    pub beta: [f64; 2],
    /// Structural model for P(Y(1)=1 | Y(0)=1, v): link(λ0 + λ1 v).
    pub lambda: [f64; 2],
    pub structural_link: LinkKind,
    pub y0_intercept: f64,
    pub y0_stratum_slope: f64,
    /// S is centred at this value in the Y(0) model.
    pub y0_stratum_center: f64,
    pub y0_v_slope: f64,
    pub x_other_slope: f64,
    pub truncation: [f64; 2],
    pub strata: usize,
    pub treatment_prob: f64,
    /// Slope on V_S in logit P(A=1 | V_S); 0 gives a randomized trial.
    pub treatment_v_slope: f64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            seed: 0,
            beta: [0.3, 0.1],
            lambda: [0.7, -0.05],
            structural_link: LinkKind::Linear,
            y0_intercept: -0.5,
            y0_stratum_slope: 0.3,
            y0_stratum_center: 2.0,
            y0_v_slope: 0.2,
            x_other_slope: 0.25,
            truncation: [-2.0, 2.0],
            strata: 4,
            treatment_prob: 0.5,
            treatment_v_slope: 0.0,
        }
    }
}

impl DgpConfig {
    pub fn g(&self, v: f64) -> f64 {
        self.structural_link.value(self.beta[0] + self.beta[1] * v)
    }

    pub fn h(&self, v: f64) -> f64 {
        self.structural_link.value(self.lambda[0] + self.lambda[1] * v)
    }

    /// P(Y(0)=1 | S=s, V_S=v).
    pub fn p0(&self, s: usize, v: f64) -> f64 {
        expit(self.y0_intercept + self.y0_stratum_slope * (s as f64 - self.y0_stratum_center) + self.y0_v_slope * v)
    }

    /// P(Y(1)=1 | S=s, V_S=v).
    pub fn p1(&self, s: usize, v: f64) -> f64 {
        let q = self.p0(s, v);
        (1.0 - q) * self.g(v) + q * self.h(v)
    }

    /// P(A=1 | V_S=v).
    pub fn pi1(&self, v: f64) -> f64 {
        if self.treatment_v_slope == 0.0 {
            self.treatment_prob
        } else {
            expit(logit(self.treatment_prob) + self.treatment_v_slope * v)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.truncation;
        if !(lo < hi) {
            return Err(Error::Config(format!("truncation bounds must satisfy lo < hi, got [{lo}, {hi}]")));
        }
        if self.strata < 2 {
            return Err(Error::Config(format!("need at least 2 strata, got {}", self.strata)));
        }
        if !(self.treatment_prob > 0.0 && self.treatment_prob < 1.0) {
            return Err(Error::Config(format!("treatment_prob must lie in (0, 1), got {}", self.treatment_prob)));
        }
        // linear or monotone links attain their extremes at the endpoints
        for v in [lo, hi] {
            for value in [self.g(v), self.h(v)] {
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::StructuralProbabilityOutOfRange { value, v });
                }
            }
        }
        Ok(())
    }
}

/// One simulated dataset with its latent outcomes and true nuisances per row.
#[derive(Debug, Clone)]
pub struct SimData {
    pub data: Dataset,
    pub y0: Vec<u8>,
    pub y1: Vec<u8>,
    pub p0_true: Vec<f64>,
    pub p1_true: Vec<f64>,
    pub pi1_true: Vec<f64>,
}

impl SimData {
    pub fn validated(&self) -> Result<ValidatedDataset> {
        validate(self.data.clone())
    }

    /// The true nuisance functions evaluated at every row.
    pub fn oracle_nuisance(&self, clip: f64) -> Result<NuisanceSet> {
        NuisanceSet::from_values(self.p0_true.clone(), self.p1_true.clone(), self.pi1_true.clone(), clip)
    }
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Draws a dataset from `cfg`, using stream 0 of `cfg.seed`.
pub fn generate(cfg: &DgpConfig) -> Result<SimData> {
    cfg.validate()?;
    let n = cfg.n;
    let normal = standard_normal();
    let mut rng = rng::stream(cfg.seed, 0);
    let [lo, hi] = cfg.truncation;
    let mut v = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    for _ in 0..n {
        let vi = loop {
            let z: f64 = rng.sample(normal);
            if (lo..=hi).contains(&z) {
                break z;
            }
        };
        v.push(vi);
        x.push(cfg.x_other_slope * vi + rng.sample::<f64, _>(normal));
    }
    let base = Dataset::from_columns(
        vec![0; n],
        vec![0; n],
        vec![VS_COLUMN.into(), X_OTHER_COLUMN.into()],
        vec![v.clone(), x],
    )?;
    let (base, _) = construct_stratum(
        base,
        &StratumSpec::QuantileBins {
            column: X_OTHER_COLUMN.into(),
            bins: cfg.strata,
        },
    )?;
    let s = base.strata().expect("strata just assigned").to_vec();

    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    let mut p0_true = Vec::with_capacity(n);
    let mut p1_true = Vec::with_capacity(n);
    let mut pi1_true = Vec::with_capacity(n);
    for i in 0..n {
        let pi = cfg.pi1(v[i]);
        let ai = (rng.gen::<f64>() < pi) as u8;
        let q = cfg.p0(s[i], v[i]);
        let y0i = (rng.gen::<f64>() < q) as u8;
        let structural = if y0i == 0 { cfg.g(v[i]) } else { cfg.h(v[i]) };
        let y1i = (rng.gen::<f64>() < structural) as u8;
        a.push(ai);
        y0.push(y0i);
        y1.push(y1i);
        y.push(if ai == 1 { y1i } else { y0i });
        p0_true.push(q);
        p1_true.push(cfg.p1(s[i], v[i]));
        pi1_true.push(pi);
    }
    let levels = base.stratum_levels().to_vec();
    let data = Dataset::from_columns(
        a,
        y,
        base.covariate_names().to_vec(),
        vec![v, base.column(X_OTHER_COLUMN)?.to_vec()],
    )?
    .with_strata(s, levels)?;
    Ok(SimData {
        data,
        y0,
        y1,
        p0_true,
        p1_true,
        pi1_true,
    })
}

const QUAD_INTERVALS: usize = 4000;

/// Composite Simpson rule over [lo, hi] with `QUAD_INTERVALS` panels.
fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    let m = QUAD_INTERVALS;
    let h = (hi - lo) / m as f64;
    let mut sum = f(lo) + f(hi);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(lo + k as f64 * h);
    }
    sum * h / 3.0
}

/// Expectation of `f(V_S)` under the truncated normal, by quadrature.
pub fn truncated_expectation<F: Fn(f64) -> f64>(cfg: &DgpConfig, f: F) -> f64 {
    let normal = standard_normal();
    let [lo, hi] = cfg.truncation;
    let mass = simpson(|v| normal.pdf(v), lo, hi);
    simpson(|v| f(v) * normal.pdf(v), lo, hi) / mass
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTargets {
    pub beta: [f64; 2],
    pub lambda: [f64; 2],
    pub theta1: f64,
    pub theta2: f64,
    pub mean_vs: f64,
}

impl OracleTargets {
    /// (β0, β1, λ0, λ1, θ1, θ2).
    pub fn as_vec(&self) -> Vec<f64> {
        vec![self.beta[0], self.beta[1], self.lambda[0], self.lambda[1], self.theta1, self.theta2]
    }
}

/// True (β, λ, θ1, θ2); θ by integrating the structural model over V_S.
pub fn oracle_targets(cfg: &DgpConfig) -> OracleTargets {
    OracleTargets {
        beta: cfg.beta,
        lambda: cfg.lambda,
        theta1: truncated_expectation(cfg, |v| cfg.g(v)),
        theta2: truncated_expectation(cfg, |v| cfg.h(v)),
        mean_vs: truncated_expectation(cfg, |v| v),
    }
}

/// Population stratum-level quantities, with S defined by population quantiles of X_other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationRisks {
    pub edges: Vec<f64>,
    /// P(Y(0)=1 | S=s).
    pub p0: Vec<f64>,
    /// P(Y(1)=1 | S=s).
    pub p1: Vec<f64>,
    /// P(Y=1 | A=0, S=s): what unadjusted proportions estimate.
    pub p0_observed: Vec<f64>,
    pub p1_observed: Vec<f64>,
    /// P(Y(0)=1)
    pub mu1: f64,
    /// P(Y(1)=1)
    pub p1_marginal: f64,
}

impl PopulationRisks {
    pub fn table(&self) -> Result<StratumRiskTable> {
        StratumRiskTable::from_risks(self.p0.clone(), self.p1.clone())
    }

    pub fn observed_table(&self) -> Result<StratumRiskTable> {
        StratumRiskTable::from_risks(self.p0_observed.clone(), self.p1_observed.clone())
    }

    /// The least-squares functional at the population risks.
    pub fn ls_theta(&self) -> Result<ThetaEstimate> {
        ls::solve_theta(&self.table()?)
    }
}

/// Stratum risks by numerical integration over V_S (strata have equal mass).
pub fn population_risks(cfg: &DgpConfig) -> Result<PopulationRisks> {
    cfg.validate()?;
    let normal = standard_normal();
    let c = cfg.x_other_slope;
    let cdf_x = |x: f64| truncated_expectation(cfg, |v| normal.cdf(x - c * v));
    let k = cfg.strata;
    let mut edges = Vec::with_capacity(k - 1);
    for j in 1..k {
        let target = j as f64 / k as f64;
        let (mut a, mut b) = (-10.0, 10.0);
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if cdf_x(m) < target {
                a = m;
            } else {
                b = m;
            }
        }
        edges.push(0.5 * (a + b));
    }
    let bounds = |s: usize| {
        let lo = if s == 1 { f64::NEG_INFINITY } else { edges[s - 2] };
        let hi = if s == k { f64::INFINITY } else { edges[s - 1] };
        (lo, hi)
    };
    let in_stratum = |s: usize, v: f64| {
        let (lo, hi) = bounds(s);
        normal.cdf(hi - c * v) - normal.cdf(lo - c * v)
    };
    let mut out = PopulationRisks {
        edges: edges.clone(),
        p0: Vec::new(),
        p1: Vec::new(),
        p0_observed: Vec::new(),
        p1_observed: Vec::new(),
        mu1: 0.0,
        p1_marginal: 0.0,
    };
    for s in 1..=k {
        let w = |v: f64| in_stratum(s, v);
        let mass = truncated_expectation(cfg, w);
        out.p0.push(truncated_expectation(cfg, |v| w(v) * cfg.p0(s, v)) / mass);
        out.p1.push(truncated_expectation(cfg, |v| w(v) * cfg.p1(s, v)) / mass);
        let treated = truncated_expectation(cfg, |v| w(v) * cfg.pi1(v));
        let control = mass - treated;
        out.p0_observed
            .push(truncated_expectation(cfg, |v| w(v) * (1.0 - cfg.pi1(v)) * cfg.p0(s, v)) / control);
        out.p1_observed
            .push(truncated_expectation(cfg, |v| w(v) * cfg.pi1(v) * cfg.p1(s, v)) / treated);
    }
    out.mu1 = out.p0.iter().sum::<f64>() / k as f64;
    out.p1_marginal = out.p1.iter().sum::<f64>() / k as f64;
    Ok(out)
}

/// Monte Carlo study settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub dgp: DgpConfig,
    pub reps: usize,
    pub estimator: EstimatorConfig,
    /// Bootstrap inside each replicate; `None` reports sandwich intervals only.
    pub bootstrap: Option<BootstrapPlan>,
    pub level: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            dgp: DgpConfig::default(),
            reps: 200,
            estimator: default_study_estimator(),
            bootstrap: None,
            level: 0.95,
        }
    }
}

/// Orthogonal linear estimator with logistic outcome models in S × cubic spline of V_S
/// and the known treatment probability.
pub fn default_study_estimator() -> EstimatorConfig {
    EstimatorConfig {
        kind: EstimatorKind::OrthogonalLinear,
        vs_column: Some(VS_COLUMN.into()),
        // The simulated Y(0) logit is additive in S and V_S; the interacted
        // model overfits the sparse arm under confounded assignment.
        outcome: OutcomeModelSpec {
            interaction: false,
            ..OutcomeModelSpec::default()
        },
        propensity: PropensitySpec::Known { p: 0.5 },
        folds: FoldSpec::Stratified { k: 5, seed: 0 },
        ..EstimatorConfig::default()
    }
}

/// Estimates from one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateEstimate {
    pub values: Vec<f64>,
    pub sandwich_se: Vec<f64>,
    /// Percentile interval per parameter when a bootstrap ran.
    pub bootstrap: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub rep: usize,
    pub seed: u64,
    pub estimate: Option<ReplicateEstimate>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    /// Standard deviation of the estimates across replicates.
    pub empirical_se: f64,
    pub mean_sandwich_se: f64,
    pub coverage_sandwich: f64,
    pub mean_bootstrap_se: Option<f64>,
    /// Coverage of the interval type named in the bootstrap plan.
    pub coverage_bootstrap: Option<f64>,
    /// Coverage of estimate ± z · bootstrap SE, whatever the plan's type.
    pub coverage_bootstrap_normal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub parameters: Vec<ParameterSummary>,
    pub reps: usize,
    pub failures: usize,
    pub level: f64,
    pub records: Vec<ReplicateRecord>,
}

impl McReport {
    pub fn get(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<10} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
            "parameter", "truth", "mean", "bias", "emp_se", "sand_se", "cov_sand", "cov_boot", "cov_bnorm"
        );
        let cell = |c: Option<f64>| c.map_or("-".to_string(), |c| format!("{c:.3}"));
        for p in &self.parameters {
            out.push_str(&format!(
                "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.3} {:>9} {:>9}\n",
                p.name,
                p.truth,
                p.mean,
                p.bias,
                p.empirical_se,
                p.mean_sandwich_se,
                p.coverage_sandwich,
                cell(p.coverage_bootstrap),
                cell(p.coverage_bootstrap_normal)
            ));
        }
        out.push_str(&format!(
            "replicates: {} ({} failed), nominal level {}\n",
            self.reps, self.failures, self.level
        ));
        out
    }

    /// Summary rows as CSV.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "parameter",
            "truth",
            "mean",
            "bias",
            "empirical_se",
            "mean_sandwich_se",
            "coverage_sandwich",
            "mean_bootstrap_se",
            "coverage_bootstrap",
            "coverage_bootstrap_normal",
        ])?;
        for p in &self.parameters {
            let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
            wtr.write_record([
                p.name.clone(),
                p.truth.to_string(),
                p.mean.to_string(),
                p.bias.to_string(),
                p.empirical_se.to_string(),
                p.mean_sandwich_se.to_string(),
                p.coverage_sandwich.to_string(),
                opt(p.mean_bootstrap_se),
                opt(p.coverage_bootstrap),
                opt(p.coverage_bootstrap_normal),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// One row per replicate with every estimate (for histograms).
    pub fn write_estimates_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["rep".to_string(), "seed".to_string()];
        for p in &self.parameters {
            header.push(p.name.clone());
            header.push(format!("{}_se", p.name));
        }
        header.push("error".into());
        wtr.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.rep.to_string(), r.seed.to_string()];
            match &r.estimate {
                Some(e) => {
                    for (v, s) in e.values.iter().zip(&e.sandwich_se) {
                        row.push(v.to_string());
                        row.push(s.to_string());
                    }
                }
                None => row.extend(std::iter::repeat_n(String::new(), 2 * self.parameters.len())),
            }
            row.push(r.error.clone().unwrap_or_default());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Parameter names and true values reported for an estimator.
pub fn study_targets(cfg: &DgpConfig, kind: EstimatorKind) -> Result<(Vec<String>, Vec<f64>)> {
    let pop = population_risks(cfg)?;
    if kind.is_orthogonal() {
        let o = oracle_targets(cfg);
        let names = ["beta0", "beta1", "lambda0", "lambda1", "theta1", "theta2", "mu1"];
        let mut truth = o.as_vec();
        truth.push(pop.mu1);
        Ok((names.iter().map(|s| s.to_string()).collect(), truth))
    } else {
        // least squares is consistent for its own population functional
        let t = pop.ls_theta()?;
        Ok((
            ["theta1", "theta2", "mu1"].iter().map(|s| s.to_string()).collect(),
            vec![t.theta1, t.theta2, pop.mu1],
        ))
    }
}

/// Values and sandwich SEs in the order of [`study_targets`].
pub fn fit_values(fit: &Fit) -> ReplicateEstimate {
    let th_se = fit.theta.standard_errors().unwrap_or([f64::NAN; 2]);
    let mu_se = fit.omega[3][3].max(0.0).sqrt();
    let (mut values, mut se) = (Vec::new(), Vec::new());
    if let Some(xi) = &fit.xi {
        values.extend(xi.beta.iter().chain(&xi.lambda));
        se.extend(xi.standard_errors().unwrap_or_else(|| vec![f64::NAN; values.len()]));
    }
    values.extend([fit.theta.theta1, fit.theta.theta2, fit.mu.mu1]);
    se.extend([th_se[0], th_se[1], mu_se]);
    ReplicateEstimate {
        values,
        sandwich_se: se,
        bootstrap: None,
    }
}

fn is_fatal(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_) | Error::Io(_) | Error::Csv(_) | Error::StructuralProbabilityOutOfRange { .. }
    )
}

/// Runs `estimate` on `reps` independent datasets and aggregates against `truth`.
///
/// Replicate `r` uses the dataset seed `child_seed(cfg.seed, r)`.
pub fn run_replicates<F>(
    cfg: &DgpConfig,
    reps: usize,
    names: &[String],
    truth: &[f64],
    level: f64,
    estimate: F,
) -> Result<McReport>
where
    F: Fn(&SimData, u64) -> Result<ReplicateEstimate> + Sync,
{
    if reps == 0 {
        return Err(Error::Config("a study needs at least one replicate".into()));
    }
    cfg.validate()?;
    let records: Vec<Result<ReplicateRecord>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = rng::child_seed(cfg.seed, r as u64);
            let dgp = DgpConfig { seed, ..cfg.clone() };
            let out = generate(&dgp).and_then(|sim| estimate(&sim, seed));
            match out {
                Ok(e) if e.values.len() != names.len() => Err(Error::DimensionMismatch {
                    expected: names.len(),
                    found: e.values.len(),
                }),
                Ok(e) => Ok(ReplicateRecord {
                    rep: r,
                    seed,
                    estimate: Some(e),
                    error: None,
                }),
                Err(e) if is_fatal(&e) => Err(e),
                Err(e) => Ok(ReplicateRecord {
                    rep: r,
                    seed,
                    estimate: None,
                    error: Some(e.to_string()),
                }),
            }
        })
        .collect();
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(summarize(names, truth, level, records))
}

fn summarize(names: &[String], truth: &[f64], level: f64, records: Vec<ReplicateRecord>) -> McReport {
    let ok: Vec<&ReplicateEstimate> = records.iter().filter_map(|r| r.estimate.as_ref()).collect();
    let m = ok.len() as f64;
    let z = normal_critical(level);
    let parameters = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let vals: Vec<f64> = ok.iter().map(|e| e.values[j]).collect();
            let mean = vals.iter().sum::<f64>() / m;
            let empirical_se = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
            } else {
                0.0
            };
            let covered = ok
                .iter()
                .filter(|e| (e.values[j] - truth[j]).abs() <= z * e.sandwich_se[j])
                .count();
            let boot: Vec<(f64, [f64; 3])> = ok
                .iter()
                .filter_map(|e| e.bootstrap.as_ref().map(|b| (e.values[j], b[j])))
                .collect();
            let (mean_bootstrap_se, coverage_bootstrap, coverage_bootstrap_normal) = if boot.is_empty() {
                (None, None, None)
            } else {
                let b = boot.len() as f64;
                let percentile = boot.iter().filter(|(_, x)| x[1] <= truth[j] && truth[j] <= x[2]).count();
                let normal = boot.iter().filter(|(v, x)| (v - truth[j]).abs() <= z * x[0]).count();
                (
                    Some(boot.iter().map(|x| x.1[0]).sum::<f64>() / b),
                    Some(percentile as f64 / b),
                    Some(normal as f64 / b),
                )
            };
            ParameterSummary {
                name: name.clone(),
                truth: truth[j],
                mean,
                bias: mean - truth[j],
                empirical_se,
                mean_sandwich_se: ok.iter().map(|e| e.sandwich_se[j]).sum::<f64>() / m,
                coverage_sandwich: covered as f64 / m,
                mean_bootstrap_se,
                coverage_bootstrap,
                coverage_bootstrap_normal,
            }
        })
        .collect();
    McReport {
        parameters,
        reps: records.len(),
        failures: records.iter().filter(|r| r.estimate.is_none()).count(),
        level,
        records,
    }
}

fn with_fold_seed(est: &EstimatorConfig, seed: u64) -> EstimatorConfig {
    let mut est = est.clone();
    if let FoldSpec::Stratified { k, .. } = est.folds {
        est.folds = FoldSpec::Stratified {
            k,
            seed: rng::child_seed(seed, 1),
        };
    }
    est
}

/// Generate, fit and (optionally) bootstrap in every replicate.
pub fn run_study(study: &StudyConfig) -> Result<McReport> {
    study.estimator.validate()?;
    let (names, truth) = study_targets(&study.dgp, study.estimator.kind)?;
    let level = study.level;
    run_replicates(&study.dgp, study.reps, &names, &truth, level, |sim, seed| {
        let data = sim.validated()?;
        let cfg = with_fold_seed(&study.estimator, seed);
        let fit = estimator::fit(&data, &cfg)?;
        fit.require_converged()?;
        let mut out = fit_values(&fit);
        if let Some(plan) = &study.bootstrap {
            let plan = BootstrapPlan {
                seed: rng::child_seed(seed, 2),
                level,
                ..plan.clone()
            };
            let boot = bootstrap(
                &data,
                &names,
                &out.values,
                |d| {
                    let f = estimator::fit(&validate(d.clone())?, &cfg)?;
                    f.require_converged()?;
                    Ok(fit_values(&f).values)
                },
                &plan,
            )?;
            out.bootstrap = Some(
                boot.report
                    .intervals
                    .iter()
                    .map(|iv| [iv.se, iv.lower, iv.upper])
                    .collect(),
            );
        }
        Ok(out)
    })
}

/// Score mean and Gateaux derivatives at the truth on one large draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub n: usize,
    pub link: LinkKind,
    pub xi: Vec<f64>,
    /// P_n ψ(ξ*, η*) per coordinate.
    pub score_mean: Vec<f64>,
    pub score_se: Vec<f64>,
    pub results: Vec<ProbeResult>,
}

/// Perturbation directions: `0.05 sin(v)` for p0 and p1, a constant 0.05 for
/// π1 (clipped) and the first coordinate of ξ as the positive control.
pub fn probe_directions(v: &[f64], dim: usize) -> Vec<ProbeDirection> {
    let wave: Vec<f64> = v.iter().map(|x| 0.05 * x.sin()).collect();
    let mut unit = vec![0.0; dim];
    unit[0] = 1.0;
    vec![
        ProbeDirection::OutcomeControl(wave.clone()),
        ProbeDirection::OutcomeTreated(wave),
        ProbeDirection::Propensity(vec![0.05; v.len()]),
        ProbeDirection::Parameter(unit),
    ]
}

/// Evaluates the score of the structural model at the true (ξ, η) and probes
/// its sensitivity along each direction of [`probe_directions`].
pub fn probe_dgp(cfg: &DgpConfig, t_grid: &[f64], clip: f64) -> Result<ProbeReport> {
    let sim = generate(cfg)?;
    let nuis = sim.oracle_nuisance(clip)?;
    let link = LinkSpec {
        kind: cfg.structural_link,
        basis: BasisSpec::Linear {
            column: VS_COLUMN.into(),
        },
    };
    let inputs = ScoreInputs::new(&sim.data, &nuis, &link)?;
    let xi = vec![cfg.beta[0], cfg.beta[1], cfg.lambda[0], cfg.lambda[1]];
    let psi = inputs.psi_rows(&xi);
    let n = psi.len() as f64;
    let (mut score_mean, mut score_se) = (Vec::new(), Vec::new());
    for j in 0..xi.len() {
        let m = psi.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = psi.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / (n - 1.0);
        score_mean.push(m);
        score_se.push((var / n).sqrt());
    }
    let mut results = Vec::new();
    for dir in probe_directions(sim.data.column(VS_COLUMN)?, xi.len()) {
        results.extend(orthogonality_probe(&inputs, &xi, &dir, t_grid, clip));
    }
    Ok(ProbeReport {
        n: cfg.n,
        link: cfg.structural_link,
        xi,
        score_mean,
        score_se,
        results,
    })
}
