use serde::{Deserialize, Serialize};

use crate::data::empirical_quantile;
use crate::error::{Error, Result};

/// Clamped B-spline basis on `[lo, hi]` with the given interior knots.
///
/// There are `degree + 1 + interior.len()` basis functions and they sum to one
/// everywhere on the support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    degree: usize,
    interior: Vec<f64>,
    lo: f64,
    hi: f64,
    knots: Vec<f64>,
}

/// Basis values at one point; `clamped` is set when the point was outside the
/// support and got evaluated at the nearest boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisRow {
    pub values: Vec<f64>,
    pub clamped: bool,
}

impl BSplineBasis {
    pub fn new(degree: usize, interior: Vec<f64>, lo: f64, hi: f64) -> Result<Self> {
        let ordered = interior.windows(2).all(|w| w[0] < w[1]);
        let inside = interior.iter().all(|&k| k > lo && k < hi);
        if !(lo < hi) || !ordered || !inside {
            return Err(Error::KnotOrder { lo, hi });
        }
        let mut knots = vec![lo; degree + 1];
        knots.extend_from_slice(&interior);
        knots.extend(std::iter::repeat_n(hi, degree + 1));
        Ok(Self {
            degree,
            interior,
            lo,
            hi,
            knots,
        })
    }

    /// Knots at the given quantiles of `x`, support `[min x, max x]`.
    /// Coincident quantiles are merged.
    pub fn from_quantiles(x: &[f64], degree: usize, probs: &[f64]) -> Result<Self> {
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        let mut interior: Vec<f64> = probs
            .iter()
            .map(|&p| empirical_quantile(&sorted, p))
            .filter(|&k| k > lo && k < hi)
            .collect();
        interior.dedup();
        Self::new(degree, interior, lo, hi)
    }

    pub fn len(&self) -> usize {
        self.degree + 1 + self.interior.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn eval(&self, x: f64) -> BasisRow {
        let clamped = !(x >= self.lo && x <= self.hi);
        let x = x.clamp(self.lo, self.hi);
        let p = self.degree;
        let nb = self.len();
        // knot span: largest i with knots[i] <= x < knots[i+1], capped at the last span
        let span = if x >= self.hi {
            nb - 1
        } else {
            let mut i = p;
            while i + 1 < nb && self.knots[i + 1] <= x {
                i += 1;
            }
            i
        };
        let mut local = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        local[0] = 1.0;
        for j in 1..=p {
            left[j] = x - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { local[r] / denom };
                local[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            local[j] = saved;
        }
        let mut values = vec![0.0; nb];
        for (r, v) in local.into_iter().enumerate() {
            values[span - p + r] = v;
        }
        BasisRow { values, clamped }
    }
}

/// Evaluates the basis at every point of `x`; row-major `x.len() × basis.len()`.
pub fn spline_basis(x: &[f64], degree: usize, interior: &[f64], lo: f64, hi: f64) -> Result<Vec<BasisRow>> {
    let basis = BSplineBasis::new(degree, interior.to_vec(), lo, hi)?;
    Ok(x.iter().map(|&v| basis.eval(v)).collect())
}
