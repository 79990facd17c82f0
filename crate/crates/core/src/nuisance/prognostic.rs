use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::logistic::{fit_logistic, LogisticModel};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Control-arm logistic model of Y on the given predictors, plus its
/// prediction for every row of the dataset it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrognosticScore {
    pub predictors: Vec<String>,
    pub model: LogisticModel,
    pub scores: Vec<f64>,
}

impl PrognosticScore {
    /// Scores rows of another dataset with the same predictor columns.
    pub fn score(&self, data: &Dataset) -> Result<Vec<f64>> {
        let x = design(data, &self.predictors)?;
        Ok(self.model.predict(&x))
    }
}

fn design(data: &Dataset, predictors: &[String]) -> Result<DMatrix<f64>> {
    let cols = predictors
        .iter()
        .map(|c| data.column(c))
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(data.len(), predictors.len() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            cols[j - 1][i]
        }
    }))
}

/// Fits P(Y = 1 | predictors) on the A = 0 rows only (intercept added) and
/// scores every row.
pub fn prognostic_score(data: &Dataset, predictors: &[String], ridge: f64) -> Result<PrognosticScore> {
    let x = design(data, predictors)?;
    let control: Vec<usize> = (0..data.len()).filter(|&i| data.treatment()[i] == 0).collect();
    if control.is_empty() {
        return Err(Error::NoControls);
    }
    let xc = DMatrix::from_fn(control.len(), x.ncols(), |r, j| x[(control[r], j)]);
    let yc: Vec<f64> = control.iter().map(|&i| data.outcome()[i] as f64).collect();
    let model = fit_logistic(&xc, &yc, ridge)?;
    let scores = model.predict(&x);
    Ok(PrognosticScore {
        predictors: predictors.to_vec(),
        model,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_controls_score_one_half() {
        let d = Dataset::from_columns(
            vec![0, 0, 0, 0, 1, 1],
            vec![1, 0, 1, 0, 1, 1],
            vec![],
            vec![],
        )
        .unwrap();
        let ps = prognostic_score(&d, &[], 0.0).unwrap();
        assert!(ps.scores.iter().all(|&s| (s - 0.5).abs() < 1e-12));
    }

    #[test]
    fn treated_outcomes_do_not_enter_the_fit() {
        let x = vec![0.0, 1.0, 2.0, 3.0, 0.5, 2.5];
        let base = Dataset::from_columns(vec![0, 0, 0, 0, 1, 1], vec![0, 1, 0, 1, 0, 0], vec!["x".into()], vec![x.clone()])
            .unwrap();
        let flipped = Dataset::from_columns(vec![0, 0, 0, 0, 1, 1], vec![0, 1, 0, 1, 1, 1], vec!["x".into()], vec![x])
            .unwrap();
        let a = prognostic_score(&base, &["x".into()], 1e-6).unwrap();
        let b = prognostic_score(&flipped, &["x".into()], 1e-6).unwrap();
        assert_eq!(a.scores, b.scores);
    }

    #[test]
    fn score_becomes_a_column() {
        let d = Dataset::from_columns(vec![0, 0, 1, 0], vec![1, 0, 1, 0], vec!["x".into()], vec![vec![1.0, 2.0, 3.0, 4.0]])
            .unwrap();
        let ps = prognostic_score(&d, &["x".into()], 1e-6).unwrap();
        let d = d.with_column("prognostic_score", ps.scores.clone()).unwrap();
        assert_eq!(d.covariate_names().len(), 2);
        assert_eq!(d.column("prognostic_score").unwrap(), ps.scores.as_slice());
    }
}
