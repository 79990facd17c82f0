//! Outcome and propensity regressions used as nuisance functions.
//!
//! Outcome models are logistic regressions of Y on a design in (S, V_S), fitted
//! separately per arm. The default design is the one used for the simulation
//! study: one cubic B-spline block in V_S per stratum (full S × spline
//! interaction). Predictions are cross-fitted: the prediction for a row always
//! comes from models that never saw that row.

mod logistic;
mod prognostic;
mod spline;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use logistic::{expit, fit_logistic, logit, LogisticModel};
pub use prognostic::{prognostic_score, PrognosticScore};
pub use spline::{spline_basis, BSplineBasis, BasisRow};

use crate::data::ValidatedDataset;
use crate::error::{Error, Result};
use crate::rng;

/// Outcome regression family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeKind {
    #[default]
    Logistic,
    /// Closed-form (stratum, arm) cell means; ignores V_S.
    StratumMeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutcomeModelSpec {
    pub kind: OutcomeKind,
    /// Column used as V_S; `None` gives a model saturated in S only.
    pub vs_column: Option<String>,
    pub degree: usize,
    /// Interior knots at these quantiles of V_S.
    pub knot_quantiles: Vec<f64>,
    /// Full S × spline interaction; otherwise additive S + spline.
    pub interaction: bool,
    pub ridge: f64,
}

impl Default for OutcomeModelSpec {
    fn default() -> Self {
        Self {
            kind: OutcomeKind::Logistic,
            vs_column: None,
            degree: 3,
            knot_quantiles: vec![0.25, 0.5, 0.75],
            interaction: true,
            ridge: 1e-6,
        }
    }
}

/// How P(A = 1 | S, V) is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PropensitySpec {
    /// Known assignment probability (randomized trials).
    Known { p: f64 },
    /// Treated share of the training rows.
    ArmShare,
    /// Treated share within each stratum of the training rows.
    StratumShare,
    /// Logistic regression of A on the outcome-model design.
    Logistic,
}

/// Fold assignment for cross-fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FoldSpec {
    /// `k` folds stratified by (s, a); `k = 1` fits and predicts on all rows.
    Stratified { k: usize, seed: u64 },
    /// Caller-supplied fold index per row, `0..k`.
    Explicit { folds: Vec<usize> },
}

impl Default for FoldSpec {
    fn default() -> Self {
        FoldSpec::Stratified { k: 5, seed: 0 }
    }
}

/// Default propensity clipping bound.
pub const DEFAULT_CLIP: f64 = 0.01;

/// Builds design rows for (s, v) under a fixed spline basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignBuilder {
    levels: usize,
    basis: Option<BSplineBasis>,
    interaction: bool,
}

impl DesignBuilder {
    pub fn new(data: &ValidatedDataset, spec: &OutcomeModelSpec) -> Result<Self> {
        let basis = match &spec.vs_column {
            Some(col) => Some(BSplineBasis::from_quantiles(
                data.column(col)?,
                spec.degree,
                &spec.knot_quantiles,
            )?),
            None => None,
        };
        Ok(Self {
            levels: data.levels(),
            basis,
            interaction: spec.interaction,
        })
    }

    pub fn width(&self) -> usize {
        match &self.basis {
            None => self.levels,
            Some(b) if self.interaction => self.levels * b.len(),
            Some(b) => self.levels + b.len() - 1,
        }
    }

    /// Design row for stratum `s` (1-based) and V_S value `v`.
    pub fn row(&self, s: usize, v: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.width()];
        match &self.basis {
            None => out[s - 1] = 1.0,
            Some(b) => {
                let bv = b.eval(v).values;
                if self.interaction {
                    let off = (s - 1) * bv.len();
                    out[off..off + bv.len()].copy_from_slice(&bv);
                } else {
                    out[s - 1] = 1.0;
                    // first basis column dropped: the basis sums to one
                    out[self.levels..].copy_from_slice(&bv[1..]);
                }
            }
        }
        out
    }

    pub fn matrix(&self, strata: &[usize], v: Option<&[f64]>, rows: &[usize]) -> DMatrix<f64> {
        let w = self.width();
        let mut m = DMatrix::zeros(rows.len(), w);
        for (r, &i) in rows.iter().enumerate() {
            let vi = v.map_or(0.0, |v| v[i]);
            let row = self.row(strata[i], vi);
            for (j, x) in row.into_iter().enumerate() {
                m[(r, j)] = x;
            }
        }
        m
    }
}

/// Per-arm outcome model fitted on one training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ArmModel {
    Logistic(LogisticModel),
    /// Cell means indexed by stratum - 1.
    Means(Vec<f64>),
}

impl ArmModel {
    fn predict(&self, design_row: &[f64], s: usize) -> f64 {
        match self {
            ArmModel::Logistic(m) => m.predict_row(design_row),
            ArmModel::Means(m) => m[s - 1],
        }
    }

    pub fn converged(&self) -> bool {
        match self {
            ArmModel::Logistic(m) => m.converged,
            ArmModel::Means(_) => true,
        }
    }
}

/// Cross-fitted nuisance predictions for every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSet {
    /// p̂_0(s_i, v_i) = P̂(Y = 1 | A = 0, S, V_S).
    pub p0: Vec<f64>,
    /// p̂_1(s_i, v_i).
    pub p1: Vec<f64>,
    /// π̂_1(s_i, v_i), clipped into [clip, 1 − clip].
    pub pi1: Vec<f64>,
    pub folds: Vec<usize>,
    pub clip: f64,
    pub design: DesignBuilder,
    /// Outcome models per fold: `[arm 0, arm 1]`.
    pub models: Vec<[ArmModel; 2]>,
    /// Every logistic fit converged.
    pub all_converged: bool,
}

impl NuisanceSet {
    /// π̂_a for row `i`.
    pub fn pi(&self, i: usize, a: u8) -> f64 {
        if a == 1 {
            self.pi1[i]
        } else {
            1.0 - self.pi1[i]
        }
    }

    /// p̂_a for row `i`.
    pub fn p(&self, i: usize, a: u8) -> f64 {
        if a == 1 {
            self.p1[i]
        } else {
            self.p0[i]
        }
    }

    pub fn len(&self) -> usize {
        self.p0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p0.is_empty()
    }

    /// Fold-averaged prediction at an arbitrary (s, v).
    pub fn predict(&self, a: u8, s: usize, v: f64) -> f64 {
        let row = self.design.row(s, v);
        let total: f64 = self.models.iter().map(|m| m[a as usize].predict(&row, s)).sum();
        total / self.models.len() as f64
    }

    /// Nuisances from supplied values (oracle nuisances, external learners).
    pub fn from_values(p0: Vec<f64>, p1: Vec<f64>, pi1: Vec<f64>, clip: f64) -> Result<Self> {
        let n = p0.len();
        for len in [p1.len(), pi1.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, found: len });
            }
        }
        Ok(Self {
            p0,
            p1,
            pi1: pi1.into_iter().map(|p| p.clamp(clip, 1.0 - clip)).collect(),
            folds: vec![0; n],
            clip,
            design: DesignBuilder {
                levels: 0,
                basis: None,
                interaction: false,
            },
            models: Vec::new(),
            all_converged: true,
        })
    }
}

/// Assigns folds stratified by (stratum, arm): each cell is shuffled with the
/// seeded stream and dealt round-robin.
pub fn stratified_folds(data: &ValidatedDataset, k: usize, seed: u64) -> Vec<usize> {
    let n = data.len();
    let mut folds = vec![0; n];
    if k <= 1 {
        return folds;
    }
    let mut rng = rng::stream(seed, 0);
    let s = data.stratum();
    let a = data.treatment();
    let mut offset = 0;
    for stratum in 1..=data.levels() {
        for arm in 0..2u8 {
            let mut cell: Vec<usize> = (0..n).filter(|&i| s[i] == stratum && a[i] == arm).collect();
            cell.shuffle(&mut rng);
            for (j, i) in cell.into_iter().enumerate() {
                folds[i] = (j + offset) % k;
            }
            // continue the deal where the previous cell stopped so fold sizes stay balanced
            offset += data.cell_count(stratum, arm) % k;
        }
    }
    folds
}

/// Fits cross-fitted outcome models per arm and the propensity.
pub fn fit_nuisances(
    data: &ValidatedDataset,
    outcome: &OutcomeModelSpec,
    propensity: &PropensitySpec,
    folds: &FoldSpec,
    clip: f64,
) -> Result<NuisanceSet> {
    let n = data.len();
    let fold_of = match folds {
        FoldSpec::Stratified { k, seed } => stratified_folds(data, *k, *seed),
        FoldSpec::Explicit { folds } => {
            if folds.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: folds.len() });
            }
            folds.clone()
        }
    };
    let k = fold_of.iter().copied().max().unwrap_or(0) + 1;
    let design = DesignBuilder::new(data, outcome)?;
    let s = data.stratum();
    let a = data.treatment();
    let y: Vec<f64> = data.outcome().iter().map(|&v| v as f64).collect();
    let v = outcome.vs_column.as_deref().map(|c| data.column(c)).transpose()?;
    let all_rows: Vec<usize> = (0..n).collect();
    let full = design.matrix(s, v, &all_rows);

    let mut p0 = vec![f64::NAN; n];
    let mut p1 = vec![f64::NAN; n];
    let mut pi1 = vec![f64::NAN; n];
    let mut models = Vec::with_capacity(k);
    let mut all_converged = true;

    for fold in 0..k {
        // k = 1 is the no-split mode: train and predict on everything
        let train: Vec<usize> = (0..n).filter(|&i| k == 1 || fold_of[i] != fold).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
        let mut arm_models: Vec<ArmModel> = Vec::with_capacity(2);
        for arm in 0..2u8 {
            let rows: Vec<usize> = train.iter().copied().filter(|&i| a[i] == arm).collect();
            if rows.is_empty() {
                return Err(Error::FoldArmEmpty { fold, arm });
            }
            let model = match outcome.kind {
                OutcomeKind::StratumMeans => {
                    let mut sum = vec![0.0; data.levels()];
                    let mut cnt = vec![0.0; data.levels()];
                    for &i in &rows {
                        sum[s[i] - 1] += y[i];
                        cnt[s[i] - 1] += 1.0;
                    }
                    if let Some(st) = cnt.iter().position(|&c| c == 0.0) {
                        return Err(Error::EmptyStratumArm { stratum: st + 1, arm });
                    }
                    ArmModel::Means(sum.iter().zip(&cnt).map(|(s, c)| s / c).collect())
                }
                OutcomeKind::Logistic => {
                    let x = select_rows(&full, &rows);
                    let yy: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
                    let m = fit_logistic(&x, &yy, outcome.ridge)?;
                    all_converged &= m.converged;
                    ArmModel::Logistic(m)
                }
            };
            arm_models.push(model);
        }
        for &i in &test {
            let row: Vec<f64> = full.row(i).iter().copied().collect();
            p0[i] = arm_models[0].predict(&row, s[i]);
            p1[i] = arm_models[1].predict(&row, s[i]);
        }

        let treated_share = |rows: &[usize]| {
            rows.iter().filter(|&&i| a[i] == 1).count() as f64 / rows.len() as f64
        };
        match propensity {
            PropensitySpec::Known { p } => {
                for &i in &test {
                    pi1[i] = *p;
                }
            }
            PropensitySpec::ArmShare => {
                let share = treated_share(&train);
                for &i in &test {
                    pi1[i] = share;
                }
            }
            PropensitySpec::StratumShare => {
                for st in 1..=data.levels() {
                    let rows: Vec<usize> = train.iter().copied().filter(|&i| s[i] == st).collect();
                    let share = if rows.is_empty() { 0.5 } else { treated_share(&rows) };
                    for &i in test.iter().filter(|&&i| s[i] == st) {
                        pi1[i] = share;
                    }
                }
            }
            PropensitySpec::Logistic => {
                let x = select_rows(&full, &train);
                let aa: Vec<f64> = train.iter().map(|&i| a[i] as f64).collect();
                let m = fit_logistic(&x, &aa, outcome.ridge)?;
                all_converged &= m.converged;
                for &i in &test {
                    let row: Vec<f64> = full.row(i).iter().copied().collect();
                    pi1[i] = m.predict_row(&row);
                }
            }
        }
        let [m0, m1]: [ArmModel; 2] = arm_models.try_into().expect("two arms");
        models.push([m0, m1]);
    }

    for p in pi1.iter_mut() {
        *p = p.clamp(clip, 1.0 - clip);
    }
    Ok(NuisanceSet {
        p0,
        p1,
        pi1,
        folds: fold_of,
        clip,
        design,
        models,
        all_converged,
    })
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |r, j| m[(rows[r], j)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{validate, Dataset};

    fn toy(n: usize) -> ValidatedDataset {
        let a: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let y: Vec<u8> = (0..n).map(|i| ((i * 7 + i / 3) % 5 < 2) as u8).collect();
        let v: Vec<f64> = (0..n).map(|i| ((i * 37) % 101) as f64 / 50.0 - 1.0).collect();
        let s: Vec<usize> = (0..n).map(|i| 1 + (i / 2) % 3).collect();
        let d = Dataset::from_columns(a, y, vec!["v".into()], vec![v])
            .unwrap()
            .with_strata(s, vec![])
            .unwrap();
        validate(d).unwrap()
    }

    #[test]
    fn known_propensity_is_constant() {
        let d = toy(120);
        let spec = OutcomeModelSpec::default();
        let nu = fit_nuisances(&d, &spec, &PropensitySpec::Known { p: 0.5 }, &FoldSpec::default(), DEFAULT_CLIP)
            .unwrap();
        assert!(nu.pi1.iter().all(|&p| p == 0.5));
        assert!(nu.p0.iter().chain(&nu.p1).all(|p| p.is_finite() && *p > 0.0 && *p < 1.0));
    }

    #[test]
    fn duplicated_halves_give_matching_predictions() {
        let half = toy(60).into_inner();
        let rows: Vec<usize> = (0..60).chain(0..60).collect();
        let d = validate(half.select_rows(&rows)).unwrap();
        let folds: Vec<usize> = (0..120).map(|i| i / 60).collect();
        let spec = OutcomeModelSpec {
            vs_column: Some("v".into()),
            ..Default::default()
        };
        let nu = fit_nuisances(&d, &spec, &PropensitySpec::ArmShare, &FoldSpec::Explicit { folds }, DEFAULT_CLIP)
            .unwrap();
        for i in 0..60 {
            assert!((nu.p0[i] - nu.p0[i + 60]).abs() < 1e-9);
            assert!((nu.p1[i] - nu.p1[i + 60]).abs() < 1e-9);
        }
    }

    #[test]
    fn stratified_folds_cover_every_cell() {
        let d = toy(150);
        let folds = stratified_folds(&d, 5, 3);
        for f in 0..5 {
            for st in 1..=3 {
                for arm in 0..2u8 {
                    assert!((0..150).any(|i| folds[i] == f && d.stratum()[i] == st && d.treatment()[i] == arm));
                }
            }
        }
        assert_eq!(folds, stratified_folds(&d, 5, 3));
    }

    #[test]
    fn stratum_means_in_no_split_mode_are_cell_proportions() {
        let d = toy(90);
        let spec = OutcomeModelSpec {
            kind: OutcomeKind::StratumMeans,
            ..Default::default()
        };
        let nu = fit_nuisances(&d, &spec, &PropensitySpec::StratumShare, &FoldSpec::Stratified { k: 1, seed: 0 }, 0.0)
            .unwrap();
        for i in 0..90 {
            let (s, a) = (d.stratum()[i], d.treatment()[i]);
            let cell: Vec<f64> = (0..90)
                .filter(|&j| d.stratum()[j] == s && d.treatment()[j] == a)
                .map(|j| d.outcome()[j] as f64)
                .collect();
            let mean = cell.iter().sum::<f64>() / cell.len() as f64;
            assert!((nu.p(i, a) - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_fit_prediction_ignores_own_outcome() {
        let d = toy(120);
        let spec = OutcomeModelSpec {
            vs_column: Some("v".into()),
            interaction: false,
            ..Default::default()
        };
        let folds = FoldSpec::Stratified { k: 3, seed: 11 };
        let base = fit_nuisances(&d, &spec, &PropensitySpec::Logistic, &folds, DEFAULT_CLIP).unwrap();
        for i in [0usize, 17, 64, 119] {
            let mut y = d.outcome().to_vec();
            y[i] = 1 - y[i];
            let raw = d.dataset();
            let flipped = Dataset::from_columns(
                raw.treatment().to_vec(),
                y,
                raw.covariate_names().to_vec(),
                vec![raw.column("v").unwrap().to_vec()],
            )
            .unwrap()
            .with_strata(d.stratum().to_vec(), vec![])
            .unwrap();
            let other = fit_nuisances(&validate(flipped).unwrap(), &spec, &PropensitySpec::Logistic, &folds, DEFAULT_CLIP)
                .unwrap();
            assert_eq!(base.p0[i], other.p0[i]);
            assert_eq!(base.p1[i], other.p1[i]);
            assert_eq!(base.pi1[i], other.pi1[i]);
        }
    }

    #[test]
    fn clipping_applies() {
        let d = toy(60);
        let nu = fit_nuisances(
            &d,
            &OutcomeModelSpec::default(),
            &PropensitySpec::Known { p: 0.999 },
            &FoldSpec::Stratified { k: 2, seed: 1 },
            0.01,
        )
        .unwrap();
        assert!(nu.pi1.iter().all(|&p| (p - 0.99).abs() < 1e-15));
    }
}
