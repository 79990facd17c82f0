//! Thin helpers over nalgebra shared by the estimators.

use nalgebra::{DMatrix, DVector};

/// Solves `a x = b` for square `a`, `None` when numerically singular.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if !all_finite(a) {
        return None;
    }
    let scale = a.amax();
    if scale == 0.0 {
        return None;
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let dmin = u.diagonal().iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
    if dmin <= 1e-13 * scale {
        return None;
    }
    lu.solve(b)
}

pub fn inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let cols: Option<Vec<DVector<f64>>> = (0..n)
        .map(|j| {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            solve(a, &e)
        })
        .collect();
    cols.map(|c| DMatrix::from_columns(&c))
}

/// Sample covariance (denominator n) of the rows of `rows`.
pub fn row_covariance(rows: &[DVector<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let p = rows.first().map_or(0, |r| r.len());
    let mut mean = DVector::zeros(p);
    for r in rows {
        mean += r;
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(p, p);
    for r in rows {
        let d = r - &mean;
        cov.ger(1.0, &d, &d, 1.0);
    }
    cov / n as f64
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn all_finite(a: &DMatrix<f64>) -> bool {
    a.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_and_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let x = solve(&a, &DVector::from_vec(vec![3.0, 5.0])).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(solve(&s, &DVector::from_vec(vec![1.0, 1.0])).is_none());
    }
}
