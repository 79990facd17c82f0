//! Covariate-conditional estimation of ξ = (β, λ) where
//! `P(Y(1)=1 | Y(0)=0, V_S=v) = g(v; β)` and `P(Y(1)=1 | Y(0)=1, V_S=v) = h(v; λ)`,
//! both of the form `link(coefᵀ b(v))`.
//!
//! The estimating function for one row is
//!
//! ```text
//! ψ = Z · [ p1 + A/π1 (Y − p1) − m(ξ) + (g − h) (1−A)/π0 (Y − p0) ]
//! m(ξ) = g (1 − p0) + h p0
//! Z   = ∂m/∂ξ = ((1 − p0) g' b, p0 h' b)
//! ```
//!
//! with p_a = P(Y=1 | A=a, S, V_S) and π_a the propensities. Under the linear
//! link `g − h = bᵀ(β − λ)` and `Zᵀξ = m`, so ψ is affine in ξ and one Newton
//! step solves `P_n ψ = 0`. The correction factor `g − h` is the derivative of
//! `m` in p0 with the sign flipped, which keeps the score first-order
//! insensitive to errors in p0 under any link.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::ls::ThetaEstimate;
use crate::nuisance::{expit, BSplineBasis, NuisanceSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkKind {
    Linear,
    Logistic,
}

impl LinkKind {
    pub fn value(self, x: f64) -> f64 {
        match self {
            LinkKind::Linear => x,
            LinkKind::Logistic => expit(x),
        }
    }

    /// First derivative in the linear predictor.
    pub fn d1(self, x: f64) -> f64 {
        match self {
            LinkKind::Linear => 1.0,
            LinkKind::Logistic => {
                let g = expit(x);
                g * (1.0 - g)
            }
        }
    }

    /// Second derivative in the linear predictor.
    pub fn d2(self, x: f64) -> f64 {
        match self {
            LinkKind::Linear => 0.0,
            LinkKind::Logistic => {
                let g = expit(x);
                g * (1.0 - g) * (1.0 - 2.0 * g)
            }
        }
    }
}

/// Basis b(v) over one covariate column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BasisSpec {
    /// b(v) = (1, v).
    Linear { column: String },
    /// B-spline columns of v (they sum to one, so they span the intercept).
    Spline {
        column: String,
        degree: usize,
        knot_quantiles: Vec<f64>,
    },
    /// b(v) = (1); no covariate dependence.
    Intercept,
}

impl BasisSpec {
    pub fn column(&self) -> Option<&str> {
        match self {
            BasisSpec::Linear { column } | BasisSpec::Spline { column, .. } => Some(column),
            BasisSpec::Intercept => None,
        }
    }

    /// Names of the basis coordinates.
    pub fn names(&self, data: &Dataset) -> Result<Vec<String>> {
        Ok(match self {
            BasisSpec::Intercept => vec!["(1)".into()],
            BasisSpec::Linear { column } => vec!["(1)".into(), column.clone()],
            BasisSpec::Spline { column, .. } => {
                let p = self.matrix(data)?.ncols();
                (1..=p).map(|j| format!("bs{j}({column})")).collect()
            }
        })
    }

    /// n × p basis matrix for the rows of `data`.
    pub fn matrix(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        let n = data.len();
        match self {
            BasisSpec::Intercept => Ok(DMatrix::from_element(n, 1, 1.0)),
            BasisSpec::Linear { column } => {
                let v = data.column(column)?;
                Ok(DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { v[i] }))
            }
            BasisSpec::Spline {
                column,
                degree,
                knot_quantiles,
            } => {
                let v = data.column(column)?;
                let basis = BSplineBasis::from_quantiles(v, *degree, knot_quantiles)?;
                let rows: Vec<Vec<f64>> = v.iter().map(|&x| basis.eval(x).values).collect();
                Ok(DMatrix::from_fn(n, basis.len(), |i, j| rows[i][j]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub kind: LinkKind,
    pub basis: BasisSpec,
}

impl LinkSpec {
    pub fn linear(column: &str) -> Self {
        Self {
            kind: LinkKind::Linear,
            basis: BasisSpec::Linear { column: column.into() },
        }
    }

    pub fn logistic(column: &str) -> Self {
        Self {
            kind: LinkKind::Logistic,
            basis: BasisSpec::Linear { column: column.into() },
        }
    }
}

/// Everything the score needs, one entry per row.
#[derive(Debug, Clone)]
pub struct ScoreInputs {
    pub basis: DMatrix<f64>,
    pub a: Vec<u8>,
    pub y: Vec<u8>,
    pub p0: Vec<f64>,
    pub p1: Vec<f64>,
    pub pi1: Vec<f64>,
    pub link: LinkKind,
}

/// Per-row pieces of the score at a given ξ.
struct RowTerms {
    z: DVector<f64>,
    bracket: f64,
    /// ∂(g − h)/∂ξ
    gdiff: DVector<f64>,
    w0: f64,
    gamma_beta: f64,
    gamma_lambda: f64,
}

impl ScoreInputs {
    pub fn new(data: &Dataset, nuisance: &NuisanceSet, link: &LinkSpec) -> Result<Self> {
        let n = data.len();
        if nuisance.len() != n {
            return Err(Error::MissingNuisance(nuisance.len().min(n)));
        }
        if let Some(i) = (0..n).find(|&i| {
            !(nuisance.p0[i].is_finite() && nuisance.p1[i].is_finite() && nuisance.pi1[i].is_finite())
        }) {
            return Err(Error::MissingNuisance(i));
        }
        Ok(Self {
            basis: link.basis.matrix(data)?,
            a: data.treatment().to_vec(),
            y: data.outcome().to_vec(),
            p0: nuisance.p0.clone(),
            p1: nuisance.p1.clone(),
            pi1: nuisance.pi1.clone(),
            link: link.kind,
        })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Basis dimension p; ξ has length 2p.
    pub fn p(&self) -> usize {
        self.basis.ncols()
    }

    fn row_terms(&self, i: usize, xi: &[f64]) -> RowTerms {
        let p = self.p();
        let b = self.basis.row(i);
        let (beta, lambda) = xi.split_at(p);
        let xb: f64 = b.iter().zip(beta).map(|(x, c)| x * c).sum();
        let xl: f64 = b.iter().zip(lambda).map(|(x, c)| x * c).sum();
        let link = self.link;
        let (g, g1, g2) = (link.value(xb), link.d1(xb), link.d2(xb));
        let (h, h1, h2) = (link.value(xl), link.d1(xl), link.d2(xl));
        let (p0, p1) = (self.p0[i], self.p1[i]);
        let yi = self.y[i] as f64;
        let (w1, w0) = if self.a[i] == 1 {
            ((yi - p1) / self.pi1[i], 0.0)
        } else {
            (0.0, (yi - p0) / (1.0 - self.pi1[i]))
        };
        let m = g * (1.0 - p0) + h * p0;
        let mut z = DVector::zeros(2 * p);
        let mut gdiff = DVector::zeros(2 * p);
        for j in 0..p {
            z[j] = (1.0 - p0) * g1 * b[j];
            z[p + j] = p0 * h1 * b[j];
            gdiff[j] = g1 * b[j];
            gdiff[p + j] = -h1 * b[j];
        }
        RowTerms {
            z,
            bracket: p1 + w1 - m + (g - h) * w0,
            gdiff,
            w0,
            gamma_beta: (1.0 - p0) * g2,
            gamma_lambda: p0 * h2,
        }
    }

    /// ψ for row `i`.
    pub fn psi(&self, i: usize, xi: &[f64]) -> DVector<f64> {
        let t = self.row_terms(i, xi);
        t.z * t.bracket
    }

    pub fn psi_rows(&self, xi: &[f64]) -> Vec<DVector<f64>> {
        (0..self.len()).map(|i| self.psi(i, xi)).collect()
    }

    /// P_n ψ(ξ).
    pub fn mean_score(&self, xi: &[f64]) -> DVector<f64> {
        let mut s = DVector::zeros(2 * self.p());
        for i in 0..self.len() {
            s += self.psi(i, xi);
        }
        s / self.len() as f64
    }

    /// Analytic Jacobian of P_n ψ in ξ: mean of `Γ·bracket − Z Zᵀ + W0 Z ∂(g−h)/∂ξᵀ`.
    pub fn jacobian(&self, xi: &[f64]) -> DMatrix<f64> {
        let p = self.p();
        let mut j = DMatrix::zeros(2 * p, 2 * p);
        for i in 0..self.len() {
            let t = self.row_terms(i, xi);
            j.ger(-1.0, &t.z, &t.z, 1.0);
            if t.w0 != 0.0 {
                j.ger(t.w0, &t.z, &t.gdiff, 1.0);
            }
            if t.gamma_beta != 0.0 || t.gamma_lambda != 0.0 {
                let b = self.basis.row(i);
                for r in 0..p {
                    for c in 0..p {
                        let bb = b[r] * b[c] * t.bracket;
                        j[(r, c)] += t.gamma_beta * bb;
                        j[(p + r, p + c)] += t.gamma_lambda * bb;
                    }
                }
            }
        }
        j / self.len() as f64
    }

    /// Mean of Z Zᵀ; its smallest eigenvalue diagnoses identification.
    pub fn design_gram(&self, xi: &[f64]) -> DMatrix<f64> {
        let p = self.p();
        let mut m = DMatrix::zeros(2 * p, 2 * p);
        for i in 0..self.len() {
            let t = self.row_terms(i, xi);
            m.ger(1.0, &t.z, &t.z, 1.0);
        }
        m / self.len() as f64
    }
}

/// ψ for a single observation.
#[allow(clippy::too_many_arguments)]
pub fn psi_score(
    b: &[f64],
    a: u8,
    y: u8,
    p0: f64,
    p1: f64,
    pi1: f64,
    xi: &[f64],
    link: LinkKind,
) -> Vec<f64> {
    let inputs = ScoreInputs {
        basis: DMatrix::from_row_slice(1, b.len(), b),
        a: vec![a],
        y: vec![y],
        p0: vec![p0],
        p1: vec![p1],
        pi1: vec![pi1],
        link,
    };
    inputs.psi(0, xi).iter().copied().collect()
}

/// Risk estimates at a set of (s, v) points with their basis rows.
#[derive(Debug, Clone)]
pub struct RiskGrid {
    pub basis: DMatrix<f64>,
    pub p0: Vec<f64>,
    pub p1: Vec<f64>,
}

impl RiskGrid {
    /// Uses every observed row as a grid point, with the nuisance predictions.
    pub fn from_inputs(inputs: &ScoreInputs) -> Self {
        Self {
            basis: inputs.basis.clone(),
            p0: inputs.p0.clone(),
            p1: inputs.p1.clone(),
        }
    }
}

fn gram_is_singular(m: &DMatrix<f64>) -> bool {
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.iter().fold(0.0f64, |a, &e| a.max(e.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, &e| a.min(e));
    !(max > 0.0) || min <= 1e-12 * max
}

/// Starting value from `argmin Σ {p1 − g(1 − p0) − h p0}²` over the grid.
/// Closed form for the linear link; Gauss-Newton (≤ 50 iterations) otherwise.
pub fn ls_initializer(grid: &RiskGrid, link: LinkKind) -> Result<Vec<f64>> {
    let (n, p) = grid.basis.shape();
    if n < 2 * p {
        return Err(Error::InsufficientGrid {
            points: n,
            params: 2 * p,
        });
    }
    let inputs = ScoreInputs {
        basis: grid.basis.clone(),
        a: vec![1; n],
        y: vec![0; n],
        p0: grid.p0.clone(),
        p1: grid.p1.clone(),
        pi1: vec![1.0; n],
        link,
    };
    // residual p1 − m(ξ) and its gradient Z; y/π terms are neutralized below
    let gn_system = |xi: &[f64]| {
        let mut gram = DMatrix::zeros(2 * p, 2 * p);
        let mut rhs = DVector::zeros(2 * p);
        let mut sse = 0.0;
        for i in 0..n {
            let t = inputs.row_terms(i, xi);
            // bracket = p1 + (0 − p1)/1 − m ⇒ add back p1 to get p1 − m
            let resid = t.bracket + inputs.p1[i];
            gram.ger(1.0, &t.z, &t.z, 1.0);
            rhs += &t.z * resid;
            sse += resid * resid;
        }
        (gram, rhs, sse)
    };
    let mut xi = vec![0.0; 2 * p];
    let (gram, rhs, mut sse) = gn_system(&xi);
    if link == LinkKind::Linear {
        if gram_is_singular(&gram) {
            return Err(Error::SingularNormalEquations);
        }
        let sol = linalg::solve(&gram, &rhs).ok_or(Error::SingularNormalEquations)?;
        return Ok(sol.iter().copied().collect());
    }
    let (mut gram, mut rhs) = (gram, rhs);
    for _ in 0..50 {
        if gram_is_singular(&gram) {
            return Err(Error::SingularNormalEquations);
        }
        let step = linalg::solve(&gram, &rhs).ok_or(Error::SingularNormalEquations)?;
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..20 {
            let cand: Vec<f64> = xi.iter().zip(step.iter()).map(|(x, d)| x + t * d).collect();
            let (g2, r2, s2) = gn_system(&cand);
            if s2 <= sse {
                moved = step.amax() * t > 1e-12;
                xi = cand;
                gram = g2;
                rhs = r2;
                sse = s2;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Ok(xi)
}

/// Solution of `P_n ψ(ξ) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiEstimate {
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub iterations: usize,
    pub converged: bool,
    /// ‖P_n ψ(ξ̂)‖∞
    pub score_norm: f64,
    /// Smallest eigenvalue of P_n Z Zᵀ at ξ̂.
    pub min_design_eigenvalue: f64,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub psi: Vec<DVector<f64>>,
}

impl XiEstimate {
    pub fn xi(&self) -> Vec<f64> {
        self.beta.iter().chain(&self.lambda).copied().collect()
    }

    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        self.covariance
            .as_ref()
            .map(|c| (0..c.len()).map(|j| c[j][j].max(0.0).sqrt()).collect())
    }
}

pub const SCORE_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 100;
const MAX_HALVINGS: usize = 20;

/// Damped Newton on the mean score, starting from `xi0`.
///
/// A step is halved (up to 20 times) while it increases ‖P_n ψ‖∞. Returns the
/// best iterate with `converged = false` if the score norm is still above
/// 1e-10 after 100 iterations.
pub fn solve_xi(inputs: &ScoreInputs, xi0: &[f64]) -> Result<XiEstimate> {
    let p = inputs.p();
    if xi0.len() != 2 * p {
        return Err(Error::DimensionMismatch {
            expected: 2 * p,
            found: xi0.len(),
        });
    }
    let mut xi = xi0.to_vec();
    let mut score = inputs.mean_score(&xi);
    let mut norm = score.amax();
    let mut iterations = 0;
    while norm > SCORE_TOL && iterations < MAX_NEWTON {
        iterations += 1;
        let jac = inputs.jacobian(&xi);
        let step = linalg::solve(&jac, &(-&score)).ok_or(Error::SingularJacobian)?;
        let mut t = 1.0;
        let mut best: Option<(Vec<f64>, DVector<f64>, f64)> = None;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = xi.iter().zip(step.iter()).map(|(x, d)| x + t * d).collect();
            let s = inputs.mean_score(&cand);
            let nrm = s.amax();
            if nrm.is_finite() && best.as_ref().is_none_or(|b| nrm < b.2) {
                best = Some((cand, s, nrm));
            }
            if nrm.is_finite() && nrm < norm {
                break;
            }
            t *= 0.5;
        }
        match best {
            Some((cand, s, nrm)) if nrm < norm => {
                xi = cand;
                score = s;
                norm = nrm;
            }
            _ => break,
        }
    }
    let gram = inputs.design_gram(&xi);
    let min_eig = gram.symmetric_eigenvalues().iter().fold(f64::INFINITY, |a, &e| a.min(e));
    let mut warnings = Vec::new();
    let near_edge = inputs.p0.iter().filter(|&&q| !(0.01..=0.99).contains(&q)).count();
    if 2 * near_edge > inputs.len() {
        warnings.push(format!(
            "{near_edge} of {} rows have p0 within 0.01 of 0 or 1; one block of xi is weakly identified",
            inputs.len()
        ));
    }
    Ok(XiEstimate {
        beta: xi[..p].to_vec(),
        lambda: xi[p..].to_vec(),
        covariance: None,
        iterations,
        converged: norm <= SCORE_TOL,
        score_norm: norm,
        min_design_eigenvalue: min_eig,
        warnings,
        psi: inputs.psi_rows(&xi),
    })
}

/// Sandwich pieces at ξ̂: Jacobian C, per-row ψ and influence rows `−C⁻¹ψ_i`.
pub struct Sandwich {
    pub jacobian: DMatrix<f64>,
    pub covariance: DMatrix<f64>,
    pub influence: Vec<DVector<f64>>,
}

/// `C⁻¹ Var̂(ψ) C⁻ᵀ / n` with C the analytic Jacobian of P_n ψ at ξ̂.
pub fn xi_variance(inputs: &ScoreInputs, xi: &[f64]) -> Result<Sandwich> {
    let c = inputs.jacobian(xi);
    let c_inv = linalg::inverse(&c).ok_or(Error::SingularJacobian)?;
    let psi = inputs.psi_rows(xi);
    let n = psi.len() as f64;
    let var = linalg::row_covariance(&psi);
    let cov = linalg::symmetrize(&(&c_inv * var * c_inv.transpose())) / n;
    let influence = psi.iter().map(|r| -(&c_inv * r)).collect();
    Ok(Sandwich {
        jacobian: c,
        covariance: cov,
        influence,
    })
}

/// θ1 = mean g(v_i; β̂), θ2 = mean h(v_i; λ̂).
pub fn standardize_theta(basis: &DMatrix<f64>, xi: &[f64], link: LinkKind) -> (f64, f64) {
    let p = basis.ncols();
    let n = basis.nrows() as f64;
    let (beta, lambda) = xi.split_at(p);
    let mut t1 = 0.0;
    let mut t2 = 0.0;
    for row in basis.row_iter() {
        let xb: f64 = row.iter().zip(beta).map(|(x, c)| x * c).sum();
        let xl: f64 = row.iter().zip(lambda).map(|(x, c)| x * c).sum();
        t1 += link.value(xb);
        t2 += link.value(xl);
    }
    (t1 / n, t2 / n)
}

/// Standardized θ with per-row influence rows combining covariate sampling and ξ̂ uncertainty.
pub fn theta_with_influence(
    basis: &DMatrix<f64>,
    xi: &[f64],
    link: LinkKind,
    xi_influence: &[DVector<f64>],
) -> (ThetaEstimate, Vec<[f64; 2]>) {
    let (p, n) = (basis.ncols(), basis.nrows());
    let (t1, t2) = standardize_theta(basis, xi, link);
    let (beta, lambda) = xi.split_at(p);
    let mut dg = DVector::zeros(2 * p);
    let mut dh = DVector::zeros(2 * p);
    let mut gi = Vec::with_capacity(n);
    for row in basis.row_iter() {
        let xb: f64 = row.iter().zip(beta).map(|(x, c)| x * c).sum();
        let xl: f64 = row.iter().zip(lambda).map(|(x, c)| x * c).sum();
        for j in 0..p {
            dg[j] += link.d1(xb) * row[j];
            dh[p + j] += link.d1(xl) * row[j];
        }
        gi.push((link.value(xb), link.value(xl)));
    }
    dg /= n as f64;
    dh /= n as f64;
    let rows: Vec<[f64; 2]> = gi
        .iter()
        .zip(xi_influence)
        .map(|(&(g, h), inf)| [g - t1 + dg.dot(inf), h - t2 + dh.dot(inf)])
        .collect();
    let mut cov = nalgebra::Matrix2::zeros();
    for r in &rows {
        let v = nalgebra::Vector2::new(r[0], r[1]);
        cov += v * v.transpose();
    }
    cov /= (n * n) as f64;
    (ThetaEstimate::new(t1, t2).with_covariance(cov), rows)
}

/// Direction of a Gateaux perturbation.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbeDirection {
    /// h added to p0 per row.
    OutcomeControl(Vec<f64>),
    /// h added to p1 per row.
    OutcomeTreated(Vec<f64>),
    /// h added to π1 per row (π0 = 1 − π1 moves by −h); result clipped.
    Propensity(Vec<f64>),
    /// Direction in ξ: the non-orthogonal positive control.
    Parameter(Vec<f64>),
}

impl ProbeDirection {
    pub fn label(&self) -> &'static str {
        match self {
            ProbeDirection::OutcomeControl(_) => "p0",
            ProbeDirection::OutcomeTreated(_) => "p1",
            ProbeDirection::Propensity(_) => "pi",
            ProbeDirection::Parameter(_) => "xi",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub direction: String,
    pub t: f64,
    /// Symmetric-difference derivative of P_n ψ per coordinate.
    pub derivative: Vec<f64>,
    /// Monte Carlo standard error of each derivative coordinate.
    pub standard_error: Vec<f64>,
}

impl ProbeResult {
    /// max_j |derivative_j| / se_j.
    pub fn max_z(&self) -> f64 {
        self.derivative
            .iter()
            .zip(&self.standard_error)
            .map(|(d, s)| if *s > 0.0 { d.abs() / s } else if *d == 0.0 { 0.0 } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}

/// Estimates `d/dt P_n ψ(ξ*, η* + t h)` at t = 0 by `(ψ(+t) − ψ(−t)) / 2t`, one
/// result per entry of `t_grid`, on the same sample (common random numbers).
pub fn orthogonality_probe(
    inputs: &ScoreInputs,
    xi: &[f64],
    direction: &ProbeDirection,
    t_grid: &[f64],
    clip: f64,
) -> Vec<ProbeResult> {
    t_grid
        .iter()
        .map(|&t| {
            let shifted = |sign: f64| -> Vec<DVector<f64>> {
                let mut inp = inputs.clone();
                let mut x = xi.to_vec();
                match direction {
                    ProbeDirection::OutcomeControl(h) => {
                        inp.p0.iter_mut().zip(h).for_each(|(p, h)| *p += sign * t * h)
                    }
                    ProbeDirection::OutcomeTreated(h) => {
                        inp.p1.iter_mut().zip(h).for_each(|(p, h)| *p += sign * t * h)
                    }
                    ProbeDirection::Propensity(h) => inp
                        .pi1
                        .iter_mut()
                        .zip(h)
                        .for_each(|(p, h)| *p = (*p + sign * t * h).clamp(clip, 1.0 - clip)),
                    ProbeDirection::Parameter(d) => x.iter_mut().zip(d).for_each(|(x, d)| *x += sign * t * d),
                }
                inp.psi_rows(&x)
            };
            let plus = shifted(1.0);
            let minus = shifted(-1.0);
            let diffs: Vec<DVector<f64>> = plus
                .iter()
                .zip(&minus)
                .map(|(a, b)| (a - b) / (2.0 * t))
                .collect();
            let n = diffs.len() as f64;
            let dim = diffs.first().map_or(0, |d| d.len());
            let mean: Vec<f64> = (0..dim).map(|j| diffs.iter().map(|d| d[j]).sum::<f64>() / n).collect();
            let se: Vec<f64> = (0..dim)
                .map(|j| {
                    let var = diffs.iter().map(|d| (d[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1.0);
                    (var / n).sqrt()
                })
                .collect();
            ProbeResult {
                direction: direction.label().into(),
                t,
                derivative: mean,
                standard_error: se,
            }
        })
        .collect()
}
