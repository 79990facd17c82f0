//! Nonparametric bootstrap (rows or whole clusters), the delta method and
//! interval construction.
//!
//! Replicate `r` draws its resample from `rng::stream(seed, r + 1)`, so the
//! index sequence depends only on the seed and `r`, never on thread scheduling.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ResampleMode {
    #[default]
    IidRows,
    Cluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CiType {
    #[default]
    Percentile,
    Normal,
}

/// How an interval was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalMethod {
    BootstrapPercentile,
    BootstrapNormal,
    SandwichNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapPlan {
    pub reps: usize,
    pub mode: ResampleMode,
    pub seed: u64,
    pub ci: CiType,
    pub level: f64,
}

impl Default for BootstrapPlan {
    fn default() -> Self {
        Self {
            reps: 500,
            mode: ResampleMode::IidRows,
            seed: 0,
            ci: CiType::Percentile,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub name: String,
    pub point: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: IntervalMethod,
    /// Point estimate falls outside [0, 1].
    pub boundary: bool,
}

impl Interval {
    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub intervals: Vec<Interval>,
    pub replicates_used: usize,
    pub replicates_failed: usize,
}

impl IntervalReport {
    pub fn get(&self, name: &str) -> Option<&Interval> {
        self.intervals.iter().find(|i| i.name == name)
    }
}

/// Full bootstrap output: the report plus every successful replicate, in replicate order.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub report: IntervalReport,
    pub replicates: Vec<Vec<f64>>,
}

/// Row indices of one resample: `groups.len()` groups drawn with replacement.
pub fn resample_indices<R: Rng>(groups: &[Vec<usize>], rng: &mut R) -> Vec<usize> {
    let g = groups.len();
    let mut rows = Vec::new();
    for _ in 0..g {
        rows.extend_from_slice(&groups[rng.gen_range(0..g)]);
    }
    rows
}

fn resample_groups(data: &Dataset, mode: ResampleMode) -> Result<Vec<Vec<usize>>> {
    match mode {
        ResampleMode::IidRows => Ok((0..data.len()).map(|i| vec![i]).collect()),
        ResampleMode::Cluster => {
            if data.clusters().is_none() {
                return Err(Error::MissingClusters);
            }
            Ok(data.cluster_groups())
        }
    }
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Two-sided standard normal critical value for `level`.
pub fn normal_critical(level: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + level / 2.0)
}

pub fn normal_interval(name: &str, point: f64, se: f64, level: f64, method: IntervalMethod) -> Interval {
    let z = normal_critical(level);
    Interval {
        name: name.into(),
        point,
        se,
        lower: point - z * se,
        upper: point + z * se,
        level,
        method,
        boundary: !(0.0..=1.0).contains(&point),
    }
}

/// Resamples `data` `plan.reps` times and re-runs `estimator` on each resample.
///
/// Replicates whose error is a replicate-level failure (rank deficiency,
/// non-convergence, an empty cell) are dropped and counted; more than 10%
/// dropped is an error. Any other error aborts.
pub fn bootstrap<F>(data: &Dataset, names: &[String], point: &[f64], estimator: F, plan: &BootstrapPlan) -> Result<BootstrapResult>
where
    F: Fn(&Dataset) -> Result<Vec<f64>> + Sync,
{
    if plan.reps < 2 {
        return Err(Error::Config(format!("bootstrap needs at least 2 replicates, got {}", plan.reps)));
    }
    if names.len() != point.len() {
        return Err(Error::DimensionMismatch {
            expected: names.len(),
            found: point.len(),
        });
    }
    let groups = resample_groups(data, plan.mode)?;
    let outcomes: Vec<Result<Vec<f64>>> = (0..plan.reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(plan.seed, r as u64 + 1);
            let rows = resample_indices(&groups, &mut rng);
            estimator(&data.select_rows(&rows))
        })
        .collect();
    let mut replicates = Vec::with_capacity(plan.reps);
    let mut failed = 0;
    for out in outcomes {
        match out {
            Ok(v) => {
                if v.len() != point.len() {
                    return Err(Error::DimensionMismatch {
                        expected: point.len(),
                        found: v.len(),
                    });
                }
                replicates.push(v);
            }
            Err(e) if e.is_replicate_failure() => failed += 1,
            Err(e) => return Err(e),
        }
    }
    if failed * 10 > plan.reps || replicates.len() < 2 {
        return Err(Error::TooManyFailedReplicates {
            failed,
            total: plan.reps,
        });
    }
    let alpha = 1.0 - plan.level;
    let intervals = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mut vals: Vec<f64> = replicates.iter().map(|r| r[j]).collect();
            let m = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / m;
            let se = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
            match plan.ci {
                CiType::Normal => normal_interval(name, point[j], se, plan.level, IntervalMethod::BootstrapNormal),
                CiType::Percentile => {
                    vals.sort_by(f64::total_cmp);
                    Interval {
                        name: name.clone(),
                        point: point[j],
                        se,
                        lower: quantile_type7(&vals, alpha / 2.0),
                        upper: quantile_type7(&vals, 1.0 - alpha / 2.0),
                        level: plan.level,
                        method: IntervalMethod::BootstrapPercentile,
                        boundary: !(0.0..=1.0).contains(&point[j]),
                    }
                }
            }
        })
        .collect();
    Ok(BootstrapResult {
        report: IntervalReport {
            intervals,
            replicates_used: replicates.len(),
            replicates_failed: failed,
        },
        replicates,
    })
}

/// Normal intervals for `T(point)` with variance `∇Tᵀ Ω ∇T`.
///
/// `transform` returns the transformed values and one gradient per value.
pub fn delta_method<F>(names: &[String], point: &[f64], omega: &DMatrix<f64>, transform: F, level: f64) -> Result<IntervalReport>
where
    F: Fn(&[f64]) -> (Vec<f64>, Vec<Vec<f64>>),
{
    let d = point.len();
    if omega.nrows() != d || omega.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: omega.nrows(),
        });
    }
    let (values, grads) = transform(point);
    if values.len() != names.len() || grads.len() != names.len() {
        return Err(Error::DimensionMismatch {
            expected: names.len(),
            found: values.len().min(grads.len()),
        });
    }
    let mut intervals = Vec::with_capacity(values.len());
    for ((name, &v), g) in names.iter().zip(&values).zip(&grads) {
        if g.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: g.len() });
        }
        let g = nalgebra::DVector::from_column_slice(g);
        let var = (g.transpose() * omega * &g)[(0, 0)];
        intervals.push(normal_interval(name, v, var.max(0.0).sqrt(), level, IntervalMethod::SandwichNormal));
    }
    Ok(IntervalReport {
        intervals,
        replicates_used: 0,
        replicates_failed: 0,
    })
}
