//! End-to-end analysis of a CSV file: ingest, stratum construction, optional
//! prognostic score, estimation, inference and reporting.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{build_stratum_map, validate, ColumnBindings, Dataset, StratumSpec, ValidatedDataset};
use crate::error::{Error, Result};
use crate::estimator::{self, EstimatorConfig, EstimatorKind, Fit, TARGET_NAMES};
use crate::inference::{bootstrap, normal_interval, BootstrapPlan, Interval, IntervalMethod, ResampleMode};
use crate::ls::{sensitivity_sweep, ConsistencyCheck, JointPODistribution, RankDiagnostic, SensitivitySpec, ThetaEstimate};
use crate::nuisance::prognostic_score;
use crate::risk::MarginalY0;

pub const SCHEMA_VERSION: u32 = 1;
pub const PROGNOSTIC_COLUMN: &str = "prognostic_score";

/// Where V_S comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VsSource {
    Column { column: String },
    /// Control-arm logistic prediction from these predictors.
    Prognostic { predictors: Vec<String> },
}

impl VsSource {
    fn column_name(&self) -> &str {
        match self {
            VsSource::Column { column } => column,
            VsSource::Prognostic { .. } => PROGNOSTIC_COLUMN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    #[serde(default)]
    pub bindings: ColumnBindings,
    pub stratum: StratumSpec,
    #[serde(default)]
    pub vs_source: Option<VsSource>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub bootstrap: Option<BootstrapPlan>,
    #[serde(default)]
    pub gamma_grid: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_level() -> f64 {
    0.95
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, stratum: StratumSpec) -> Self {
        Self {
            input: input.into(),
            bindings: ColumnBindings::default(),
            stratum,
            vs_source: None,
            estimator: EstimatorConfig::default(),
            bootstrap: None,
            gamma_grid: None,
            output: None,
            level: default_level(),
        }
    }

    /// Reads a TOML run configuration.
    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Estimator settings with V_S wired in.
    pub fn estimator_config(&self) -> EstimatorConfig {
        let mut est = self.estimator.clone();
        if let Some(src) = &self.vs_source {
            est.vs_column = Some(src.column_name().to_owned());
        }
        est
    }

    /// Checks that can run before any data is read.
    pub fn validate(&self) -> Result<()> {
        if self.estimator.kind.is_orthogonal() && self.vs_source.is_none() && self.estimator.basis.is_none() {
            return Err(Error::Config(format!(
                "estimator {} requires a V_S source (--vs-column or --vs-prognostic)",
                kind_name(self.estimator.kind)
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("level must lie in (0, 1), got {}", self.level)));
        }
        if let Some(plan) = &self.bootstrap {
            if plan.reps < 2 {
                return Err(Error::Config(format!("bootstrap needs at least 2 replicates, got {}", plan.reps)));
            }
            if plan.mode == ResampleMode::Cluster && self.bindings.cluster.is_none() {
                return Err(Error::Config("cluster bootstrap requires a cluster column".into()));
            }
        }
        self.estimator_config().validate()
    }
}

pub fn kind_name(kind: EstimatorKind) -> &'static str {
    match kind {
        EstimatorKind::Ls => "ls",
        EstimatorKind::LsAdjusted => "ls-adjusted",
        EstimatorKind::OrthogonalLinear => "orthogonal-linear",
        EstimatorKind::OrthogonalLogistic => "orthogonal-logistic",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub label: String,
    pub n: usize,
    pub n_control: usize,
    pub n_treated: usize,
    pub p0: f64,
    pub p1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiReport {
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub score_norm: f64,
    pub min_design_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub scenario: String,
    pub gamma: Vec<[f64; 2]>,
    pub theta1: f64,
    pub theta2: f64,
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub reps: usize,
    pub used: usize,
    pub failed: usize,
    pub seed: u64,
    pub mode: ResampleMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub rows_read: usize,
    /// Running with this configuration on the same input reproduces the report.
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub estimator: EstimatorKind,
    pub n: usize,
    pub strata: Vec<StratumSummary>,
    pub theta: ThetaEstimate,
    pub mu: MarginalY0,
    pub joint: JointPODistribution,
    pub intervals: Vec<Interval>,
    pub xi: Option<XiReport>,
    pub rank: RankDiagnostic,
    pub consistency: Option<ConsistencyCheck>,
    pub sensitivity: Vec<SensitivityRow>,
    pub bootstrap: Option<BootstrapSummary>,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

/// Stratum construction, optional prognostic score and validation.
pub fn prepare(data: Dataset, cfg: &RunConfig) -> Result<ValidatedDataset> {
    let map = build_stratum_map(&data, &cfg.stratum)?;
    let mut data = map.apply(data)?;
    if let Some(VsSource::Prognostic { predictors }) = &cfg.vs_source {
        let score = prognostic_score(&data, predictors, cfg.estimator.outcome.ridge)?;
        data = data.with_column(PROGNOSTIC_COLUMN, score.scores)?;
    }
    validate(data)
}

/// Everything after ingest, for one dataset; the bootstrap reruns this per replicate.
pub fn analyze(data: Dataset, cfg: &RunConfig) -> Result<(ValidatedDataset, Fit)> {
    let data = prepare(data, cfg)?;
    let fit = estimator::fit(&data, &cfg.estimator_config())?;
    Ok((data, fit))
}

/// Reads a γ grid in long format: `scenario,stratum,gamma0,gamma1`; unlisted strata get γ = 0.
pub fn read_gamma_grid(path: &Path, levels: usize) -> Result<Vec<(String, SensitivitySpec)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut order: Vec<String> = Vec::new();
    let mut grid: BTreeMap<String, SensitivitySpec> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(Error::Parse(format!("gamma grid row {}: expected 4 fields, got {}", i + 1, rec.len())));
        }
        let num = |j: usize| -> Result<f64> {
            rec[j]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("gamma grid row {}: `{}` is not a number", i + 1, &rec[j])))
        };
        let scenario = rec[0].trim().to_owned();
        let stratum = num(1)? as usize;
        if stratum < 1 || stratum > levels {
            return Err(Error::Parse(format!("gamma grid row {}: stratum {stratum} outside 1..={levels}", i + 1)));
        }
        let entry = grid.entry(scenario.clone()).or_insert_with(|| {
            order.push(scenario.clone());
            SensitivitySpec::zero(levels)
        });
        entry.gamma[stratum - 1] = [num(2)?, num(3)?];
    }
    Ok(order.into_iter().map(|s| {
        let spec = grid.remove(&s).expect("scenario recorded");
        (s, spec)
    }).collect())
}

fn xi_report(fit: &Fit) -> Option<XiReport> {
    let xi = fit.xi.as_ref()?;
    Some(XiReport {
        names: fit.xi_names.clone(),
        estimates: xi.xi(),
        standard_errors: xi.standard_errors().unwrap_or_default(),
        iterations: xi.iterations,
        converged: xi.converged,
        score_norm: xi.score_norm,
        min_design_eigenvalue: xi.min_design_eigenvalue,
    })
}

fn warnings_for(data: &ValidatedDataset, fit: &Fit) -> Vec<String> {
    let mut w = Vec::new();
    for ((s, a), c) in data.counts() {
        if c < 5 {
            w.push(format!("stratum {s} arm A={a} has only {c} observations"));
        }
    }
    if fit.theta.boundary {
        w.push(format!(
            "theta = ({:.4}, {:.4}) lies outside [0, 1]; normal intervals are unreliable near the boundary",
            fit.theta.theta1, fit.theta.theta2
        ));
    }
    if !fit.nuisance_converged {
        w.push("a nuisance regression did not converge".into());
    }
    if let Some(xi) = &fit.xi {
        if !xi.converged {
            w.push(format!(
                "Newton solver stopped after {} iterations with score norm {:e}",
                xi.iterations, xi.score_norm
            ));
        }
        w.extend(xi.warnings.iter().cloned());
    }
    w
}

/// Runs the configured analysis.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let raw = Dataset::from_csv_path(&cfg.input, &cfg.bindings)?;
    let rows_read = raw.len();
    let (data, fit) = analyze(raw.clone(), cfg)?;

    let targets = fit.targets();
    let ses = fit.target_standard_errors();
    let mut intervals: Vec<Interval> = TARGET_NAMES
        .iter()
        .zip(targets.iter().zip(&ses))
        .map(|(name, (&p, &se))| normal_interval(name, p, se, cfg.level, IntervalMethod::SandwichNormal))
        .collect();
    let xi = xi_report(&fit);
    if let Some(x) = &xi {
        for ((name, &p), &se) in x.names.iter().zip(&x.estimates).zip(&x.standard_errors) {
            let mut iv = normal_interval(name, p, se, cfg.level, IntervalMethod::SandwichNormal);
            iv.boundary = false;
            intervals.push(iv);
        }
    }

    let mut boot_summary = None;
    if let Some(plan) = &cfg.bootstrap {
        let names: Vec<String> = TARGET_NAMES.iter().map(|s| s.to_string()).collect();
        let plan = BootstrapPlan { level: cfg.level, ..plan.clone() };
        let boot = bootstrap(
            &raw,
            &names,
            &targets,
            |d| {
                let (_, f) = analyze(d.clone(), cfg)?;
                f.require_converged()?;
                Ok(f.targets())
            },
            &plan,
        )?;
        boot_summary = Some(BootstrapSummary {
            reps: plan.reps,
            used: boot.report.replicates_used,
            failed: boot.report.replicates_failed,
            seed: plan.seed,
            mode: plan.mode,
        });
        intervals.extend(boot.report.intervals);
    }

    let mut warnings = warnings_for(&data, &fit);
    let mut sensitivity = Vec::new();
    if let Some(path) = &cfg.gamma_grid {
        if fit.kind.is_orthogonal() {
            let base = crate::ls::solve_theta_with_tol(&fit.risks, cfg.estimator.rank_tol)?;
            warnings.push(format!(
                "the sensitivity sweep applies least squares to the AIPW stratum risks; its gamma = 0 row is ({:.4}, {:.4}), not the orthogonal theta",
                base.theta1, base.theta2
            ));
        }
        let grid = read_gamma_grid(path, data.levels())?;
        let specs: Vec<SensitivitySpec> = grid.iter().map(|(_, s)| s.clone()).collect();
        let thetas = sensitivity_sweep(&fit.risks, &specs)?;
        for ((name, spec), th) in grid.into_iter().zip(thetas) {
            sensitivity.push(SensitivityRow {
                scenario: name,
                gamma: spec.gamma,
                theta1: th.theta1,
                theta2: th.theta2,
                boundary: th.boundary,
            });
        }
    }

    let strata = (1..=data.levels())
        .map(|s| StratumSummary {
            label: data.stratum_levels()[s - 1].clone(),
            n: data.stratum_count(s),
            n_control: data.cell_count(s, 0),
            n_treated: data.cell_count(s, 1),
            p0: fit.risks.p0[s - 1],
            p1: fit.risks.p1[s - 1],
        })
        .collect();

    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        estimator: fit.kind,
        n: data.len(),
        strata,
        warnings,
        theta: fit.theta,
        mu: fit.mu,
        joint: fit.joint.clone(),
        intervals,
        xi,
        rank: fit.rank,
        consistency: fit.consistency,
        sensitivity,
        bootstrap: boot_summary,
        provenance: Provenance {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            rows_read,
            config: cfg.clone(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    #[default]
    Table,
    Json,
}

fn method_tag(m: IntervalMethod) -> &'static str {
    match m {
        IntervalMethod::BootstrapPercentile => "bootstrap-percentile",
        IntervalMethod::BootstrapNormal => "bootstrap-normal",
        IntervalMethod::SandwichNormal => "sandwich-normal",
    }
}

/// Renders a report as a human-readable table or as JSON.
pub fn emit_report(report: &RunReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes"),
        ReportFormat::Table => render_table(report),
    }
}

/// Parses the JSON form back into a report.
pub fn parse_report(text: &str) -> Result<RunReport> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("report: {e}")))
}

fn render_table(r: &RunReport) -> String {
    let mut out = String::new();
    let line = |out: &mut String, s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    line(
        &mut out,
        format!("estimator {}   n = {}   strata = {}", kind_name(r.estimator), r.n, r.strata.len()),
    );
    line(&mut out, String::new());
    line(
        &mut out,
        format!("{:<40} {:>6} {:>6} {:>6} {:>8} {:>8}", "stratum", "n", "A=0", "A=1", "p0", "p1"),
    );
    for s in &r.strata {
        line(
            &mut out,
            format!(
                "{:<40} {:>6} {:>6} {:>6} {:>8.4} {:>8.4}",
                s.label, s.n, s.n_control, s.n_treated, s.p0, s.p1
            ),
        );
    }
    line(&mut out, String::new());
    line(
        &mut out,
        format!(
            "{:<22} {:>9} {:>9} {:>9} {:>9}  {}",
            "target", "estimate", "se", "lower", "upper", "method"
        ),
    );
    for iv in &r.intervals {
        line(
            &mut out,
            format!(
                "{:<22} {:>9.4} {:>9.4} {:>9.4} {:>9.4}  {}",
                iv.name,
                iv.point,
                iv.se,
                iv.lower,
                iv.upper,
                method_tag(iv.method)
            ),
        );
    }
    if r.theta.boundary {
        line(
            &mut out,
            format!(
                "WARNING: theta estimate ({:.4}, {:.4}) lies outside [0, 1]",
                r.theta.theta1, r.theta.theta2
            ),
        );
    }
    line(&mut out, String::new());
    if let Some(c) = &r.consistency {
        line(
            &mut out,
            format!(
                "consistency: implied mu1 = {:.4}, direct mu1 = {:.4}, difference = {:+.4}",
                c.implied_mu1, c.direct_mu1, c.discrepancy
            ),
        );
    }
    line(
        &mut out,
        format!(
            "identification: sigma_min = {:.4e}, sigma_max = {:.4e}, condition number = {:.2}",
            r.rank.sigma_min, r.rank.sigma_max, r.rank.condition_number
        ),
    );
    if let Some(x) = &r.xi {
        line(
            &mut out,
            format!(
                "newton: {} iteration(s), converged = {}, score norm = {:.2e}, min eig(P_n Z Z') = {:.4e}",
                x.iterations, x.converged, x.score_norm, x.min_design_eigenvalue
            ),
        );
    }
    if let Some(b) = &r.bootstrap {
        line(
            &mut out,
            format!(
                "bootstrap: {} replicates ({} used, {} failed), seed {}, {:?}",
                b.reps, b.used, b.failed, b.seed, b.mode
            ),
        );
    }
    if !r.sensitivity.is_empty() {
        line(&mut out, String::new());
        line(&mut out, format!("{:<20} {:>9} {:>9}", "sensitivity", "theta1", "theta2"));
        for s in &r.sensitivity {
            let flag = if s.boundary { "  (outside [0, 1])" } else { "" };
            line(
                &mut out,
                format!("{:<20} {:>9.4} {:>9.4}{flag}", s.scenario, s.theta1, s.theta2),
            );
        }
    }
    for w in &r.warnings {
        line(&mut out, format!("warning: {w}"));
    }
    out
}
