use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-8;
const DECREMENT_TOL: f64 = 1e-14;
const SEPARATION_BOUND: f64 = 30.0;

/// Logistic regression fitted by penalized IRLS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Unpenalized fit whose coefficients ran past ±30.
    pub separation: bool,
    /// Penalized log-likelihood after each accepted step, starting at zero coefficients.
    pub loglik_trace: Vec<f64>,
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

// log(1 + e^x) without overflow
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn penalized_loglik(eta: &DVector<f64>, y: &[f64], beta: &DVector<f64>, ridge: f64) -> f64 {
    let ll: f64 = eta.iter().zip(y).map(|(&e, &yi)| yi * e - softplus(e)).sum();
    ll - 0.5 * ridge * beta.norm_squared()
}

impl LogisticModel {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        expit(self.linear_predictor(row))
    }

    pub fn predict(&self, design: &DMatrix<f64>) -> Vec<f64> {
        let beta = DVector::from_column_slice(&self.coefficients);
        (design * beta).iter().map(|&e| expit(e)).collect()
    }
}

/// Maximizes `Σ [y η − log(1+e^η)] − ridge/2 ‖β‖²` by Newton/IRLS with step halving.
///
/// Stops when the gradient norm is ≤ 1e-8 and the last step is negligible, when
/// the Newton decrement falls below 1e-14 relative to the objective, or after
/// 100 iterations. With `ridge == 0` a diverging fit (|β| > 30) stops early
/// with `separation` set instead of failing.
pub fn fit_logistic(design: &DMatrix<f64>, y: &[f64], ridge: f64) -> Result<LogisticModel> {
    let (n, p) = design.shape();
    if n != y.len() {
        return Err(Error::DesignMismatch { rows: n, outcomes: y.len() });
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let yv = DVector::from_column_slice(y);
    let mut beta = DVector::zeros(p);
    let mut eta = design * &beta;
    let mut obj = penalized_loglik(&eta, y, &beta, ridge);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut separation = false;
    let mut iterations = 0;

    while iterations < MAX_ITER {
        iterations += 1;
        let mu: DVector<f64> = eta.map(expit);
        let w: DVector<f64> = mu.map(|m| (m * (1.0 - m)).max(1e-12));
        let grad = design.tr_mul(&(&yv - &mu)) - &beta * ridge;
        let mut xw = design.clone();
        for (mut row, &wi) in xw.row_iter_mut().zip(w.iter()) {
            row *= wi;
        }
        let mut hess = xw.tr_mul(design);
        for j in 0..p {
            hess[(j, j)] += ridge;
        }
        let step = linalg::solve(&hess, &grad).ok_or(Error::SingularFit)?;
        // Newton decrement: half of it estimates the remaining objective gain
        if grad.dot(&step) <= DECREMENT_TOL * (1.0 + obj.abs()) {
            converged = true;
            break;
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand = &beta + &step * t;
            let cand_eta = design * &cand;
            let cand_obj = penalized_loglik(&cand_eta, y, &cand, ridge);
            if cand_obj >= obj {
                accepted = Some((cand, cand_eta, cand_obj));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, cand_eta, cand_obj)) = accepted else {
            // no ascent direction left at machine precision
            converged = grad.norm() <= GRAD_TOL.max(1e-10 * n as f64);
            break;
        };
        let step_size = (&cand - &beta).amax();
        beta = cand;
        eta = cand_eta;
        obj = cand_obj;
        trace.push(obj);

        if ridge == 0.0 && beta.amax() > SEPARATION_BOUND {
            separation = true;
            break;
        }
        let mu: DVector<f64> = eta.map(expit);
        let grad = design.tr_mul(&(&yv - &mu)) - &beta * ridge;
        if grad.norm() <= GRAD_TOL && step_size <= 1e-6 {
            converged = true;
            break;
        }
    }

    Ok(LogisticModel {
        coefficients: beta.iter().copied().collect(),
        converged,
        iterations,
        separation,
        loglik_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intercept(n: usize) -> DMatrix<f64> {
        DMatrix::from_element(n, 1, 1.0)
    }

    #[test]
    fn intercept_only_recovers_logit_of_mean() {
        let y = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let m = fit_logistic(&intercept(8), &y, 0.0).unwrap();
        assert!(m.converged);
        assert!((m.coefficients[0] + 3f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn constant_outcome_flags_separation() {
        let m = fit_logistic(&intercept(5), &[0.0; 5], 0.0).unwrap();
        assert!(m.separation);
        assert!(!m.converged);
    }

    #[test]
    fn balanced_symmetric_design_has_zero_intercept() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, -1.0, 1.0, -1.0, 1.0, 1.0, 1.0, 1.0]);
        let y = [1.0, 0.0, 1.0, 0.0];
        let m = fit_logistic(&x, &y, 0.0).unwrap();
        assert!(m.coefficients[0].abs() < 1e-10);
        assert!(m.converged);
    }

    #[test]
    fn loglik_is_monotone() {
        let n = 200;
        let x = DMatrix::from_fn(n, 3, |i, j| match j {
            0 => 1.0,
            1 => (i as f64 / n as f64) * 4.0 - 2.0,
            _ => ((i * 7919) % 13) as f64 / 13.0,
        });
        let y: Vec<f64> = (0..n).map(|i| ((i * 31 + 7) % 5 < 2 + (i * 3 / n)) as u8 as f64).collect();
        let m = fit_logistic(&x, &y, 1e-6).unwrap();
        assert!(m.converged);
        for w in m.loglik_trace.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn ridge_keeps_constant_outcome_finite() {
        let m = fit_logistic(&intercept(5), &[1.0; 5], 1e-2).unwrap();
        assert!(!m.separation);
        assert!(m.converged);
        assert!(m.coefficients[0].is_finite() && m.coefficients[0] > 3.0);
    }

    #[test]
    fn expit_is_stable() {
        assert_eq!(expit(800.0), 1.0);
        assert_eq!(expit(-800.0), 0.0);
        assert!((expit(0.0) - 0.5).abs() < 1e-16);
        assert!((logit(0.25) + 3f64.ln()).abs() < 1e-15);
    }
}
