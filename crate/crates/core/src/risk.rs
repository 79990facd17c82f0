//! Stratum-specific counterfactual risks p_s^(a) = P(Y(a) = 1 | S = s).
//!
//! Both estimation routes produce per-row pseudo-outcomes
//! `U_a = μ_a + 1{A=a}/π_a (Y − μ_a)` whose within-stratum means are the risk
//! estimates; the variance code works from these rows only. For sample
//! proportions μ_a is the cell mean and π_a the within-stratum arm share, which
//! makes `U_a − p_s^(a)` exactly the influence contribution of a cell proportion.

use serde::{Deserialize, Serialize};

use crate::data::ValidatedDataset;
use crate::error::{Error, Result};
use crate::nuisance::NuisanceSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskMethod {
    Proportions,
    Aipw,
    /// Supplied directly (population values, fixtures).
    Given,
}

/// Per-row AIPW pseudo-outcomes with the row's stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoOutcomes {
    pub strata: Vec<usize>,
    pub u0: Vec<f64>,
    pub u1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRiskTable {
    pub method: RiskMethod,
    /// p̂_s^(0), indexed by stratum − 1.
    pub p0: Vec<f64>,
    pub p1: Vec<f64>,
    pub counts: Vec<usize>,
    /// π_s = n_s / n.
    pub share: Vec<f64>,
    pub pseudo: Option<PseudoOutcomes>,
}

impl StratumRiskTable {
    /// Table from known risks with equal stratum shares and no row data.
    pub fn from_risks(p0: Vec<f64>, p1: Vec<f64>) -> Result<Self> {
        if p0.len() != p1.len() {
            return Err(Error::DimensionMismatch {
                expected: p0.len(),
                found: p1.len(),
            });
        }
        let k = p0.len();
        Ok(Self {
            method: RiskMethod::Given,
            p0,
            p1,
            counts: vec![0; k],
            share: vec![1.0 / k as f64; k],
            pseudo: None,
        })
    }

    pub fn levels(&self) -> usize {
        self.p0.len()
    }

    /// Rows of the table with strata permuted: new stratum j is old `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let pick = |v: &[f64]| perm.iter().map(|&j| v[j]).collect::<Vec<_>>();
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        Self {
            method: self.method,
            p0: pick(&self.p0),
            p1: pick(&self.p1),
            counts: perm.iter().map(|&j| self.counts[j]).collect(),
            share: pick(&self.share),
            pseudo: self.pseudo.as_ref().map(|p| PseudoOutcomes {
                strata: p.strata.iter().map(|&s| inverse[s - 1] + 1).collect(),
                u0: p.u0.clone(),
                u1: p.u1.clone(),
            }),
        }
    }
}

/// Marginal law of Y(0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalY0 {
    /// P(Y(0) = 0)
    pub mu0: f64,
    /// P(Y(0) = 1)
    pub mu1: f64,
}

/// Sample proportions of Y within each (stratum, arm) cell.
pub fn risks_by_proportion(data: &ValidatedDataset) -> Result<StratumRiskTable> {
    let k = data.levels();
    let s = data.stratum();
    let a = data.treatment();
    let y = data.outcome();
    let mut sums = vec![[0.0f64; 2]; k];
    for i in 0..data.len() {
        sums[s[i] - 1][a[i] as usize] += y[i] as f64;
    }
    let mut p = vec![[0.0f64; 2]; k];
    let mut arm_share = vec![[0.0f64; 2]; k];
    for st in 0..k {
        let ns = data.stratum_count(st + 1) as f64;
        for arm in 0..2u8 {
            let c = data.cell_count(st + 1, arm);
            if c == 0 {
                return Err(Error::EmptyStratumArm { stratum: st + 1, arm });
            }
            p[st][arm as usize] = sums[st][arm as usize] / c as f64;
            arm_share[st][arm as usize] = c as f64 / ns;
        }
    }
    let n = data.len();
    let mut u0 = Vec::with_capacity(n);
    let mut u1 = Vec::with_capacity(n);
    for i in 0..n {
        let st = s[i] - 1;
        let yi = y[i] as f64;
        let pseudo = |arm: usize| {
            let mu = p[st][arm];
            if a[i] as usize == arm {
                mu + (yi - mu) / arm_share[st][arm]
            } else {
                mu
            }
        };
        u0.push(pseudo(0));
        u1.push(pseudo(1));
    }
    Ok(StratumRiskTable {
        method: RiskMethod::Proportions,
        p0: p.iter().map(|c| c[0]).collect(),
        p1: p.iter().map(|c| c[1]).collect(),
        counts: (1..=k).map(|st| data.stratum_count(st)).collect(),
        share: (1..=k).map(|st| data.stratum_count(st) as f64 / n as f64).collect(),
        pseudo: Some(PseudoOutcomes {
            strata: s.to_vec(),
            u0,
            u1,
        }),
    })
}

/// AIPW pseudo-outcomes from cross-fitted nuisances, averaged within strata.
pub fn risks_by_aipw(data: &ValidatedDataset, nuisance: &NuisanceSet) -> Result<StratumRiskTable> {
    let n = data.len();
    if nuisance.len() != n {
        return Err(Error::MissingNuisance(nuisance.len().min(n)));
    }
    let k = data.levels();
    let s = data.stratum();
    let a = data.treatment();
    let y = data.outcome();
    let mut u0 = Vec::with_capacity(n);
    let mut u1 = Vec::with_capacity(n);
    for i in 0..n {
        let (m0, m1, pi1) = (nuisance.p0[i], nuisance.p1[i], nuisance.pi1[i]);
        if !(m0.is_finite() && m1.is_finite() && pi1.is_finite()) {
            return Err(Error::MissingNuisance(i));
        }
        let yi = y[i] as f64;
        if a[i] == 1 {
            u1.push(m1 + (yi - m1) / pi1);
            u0.push(m0);
        } else {
            u1.push(m1);
            u0.push(m0 + (yi - m0) / (1.0 - pi1));
        }
    }
    let mut sum0 = vec![0.0; k];
    let mut sum1 = vec![0.0; k];
    for i in 0..n {
        sum0[s[i] - 1] += u0[i];
        sum1[s[i] - 1] += u1[i];
    }
    let counts: Vec<usize> = (1..=k).map(|st| data.stratum_count(st)).collect();
    Ok(StratumRiskTable {
        method: RiskMethod::Aipw,
        p0: sum0.iter().zip(&counts).map(|(t, &c)| t / c as f64).collect(),
        p1: sum1.iter().zip(&counts).map(|(t, &c)| t / c as f64).collect(),
        share: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        counts,
        pseudo: Some(PseudoOutcomes {
            strata: s.to_vec(),
            u0,
            u1,
        }),
    })
}

/// μ̂1 = Σ_s π_s p̂_s^(0), μ̂0 = 1 − μ̂1.
pub fn estimate_mu(table: &StratumRiskTable) -> MarginalY0 {
    let mu1: f64 = table.share.iter().zip(&table.p0).map(|(w, p)| w * p).sum();
    MarginalY0 { mu0: 1.0 - mu1, mu1 }
}

/// Per-row influence contributions of (μ̂0, μ̂1); requires pseudo-outcomes.
pub fn mu_influence(table: &StratumRiskTable, mu: &MarginalY0) -> Option<Vec<[f64; 2]>> {
    let p = table.pseudo.as_ref()?;
    Some(p.u0.iter().map(|u| [-(u - mu.mu1), u - mu.mu1]).collect())
}

/// Estimate of P(Y(1) = 1) from the same table.
pub fn marginal_y1(table: &StratumRiskTable) -> f64 {
    table.share.iter().zip(&table.p1).map(|(w, p)| w * p).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{validate_dataset, Observation};
    use crate::nuisance::{fit_nuisances, FoldSpec, OutcomeKind, OutcomeModelSpec, PropensitySpec};

    fn fixture() -> ValidatedDataset {
        // stratum 1: treated y = (1,1,0,0), control y = (1,0,0,0)
        // stratum 2: treated y = (1,0), control y = (1,1,0)
        let mut rows = Vec::new();
        for y in [1, 1, 0, 0] {
            rows.push(Observation::new(1, y, vec![0.1 * y as f64], 1));
        }
        for y in [1, 0, 0, 0] {
            rows.push(Observation::new(0, y, vec![0.2], 1));
        }
        for y in [1, 0] {
            rows.push(Observation::new(1, y, vec![0.3], 2));
        }
        for y in [1, 1, 0] {
            rows.push(Observation::new(0, y, vec![-0.4], 2));
        }
        validate_dataset(vec!["v".into()], &rows).unwrap()
    }

    #[test]
    fn proportions_are_cell_means() {
        let t = risks_by_proportion(&fixture()).unwrap();
        assert_eq!(t.p1[0], 0.5);
        assert_eq!(t.p0[0], 0.25);
        assert_eq!(t.p1[1], 0.5);
        assert!((t.p0[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn all_zero_outcomes() {
        let rows: Vec<Observation> = (0..8).map(|i| Observation::new((i % 2) as u8, 0, vec![], 1 + i / 4)).collect();
        let d = validate_dataset(vec![], &rows).unwrap();
        let t = risks_by_proportion(&d).unwrap();
        assert!(t.p0.iter().chain(&t.p1).all(|&p| p == 0.0));
    }

    #[test]
    fn pseudo_outcome_substitution() {
        // known π = 0.5, treated row with Y = 1 and μ1 = 0.4
        let d = validate_dataset(
            vec![],
            &[
                Observation::new(1, 1, vec![], 1),
                Observation::new(0, 0, vec![], 1),
                Observation::new(1, 0, vec![], 2),
                Observation::new(0, 1, vec![], 2),
            ],
        )
        .unwrap();
        let nu = NuisanceSet::from_values(vec![0.3, 0.3, 0.3, 0.3], vec![0.4; 4], vec![0.5; 4], 0.01).unwrap();
        let t = risks_by_aipw(&d, &nu).unwrap();
        let pseudo = t.pseudo.unwrap();
        assert!((pseudo.u1[0] - 1.6).abs() < 1e-15);
        assert_eq!(pseudo.u0[0], 0.3);
    }

    #[test]
    fn aipw_centering_within_strata() {
        let d = fixture();
        let nu = NuisanceSet::from_values(
            (0..d.len()).map(|i| 0.2 + 0.05 * (i % 3) as f64).collect(),
            (0..d.len()).map(|i| 0.6 - 0.04 * (i % 4) as f64).collect(),
            vec![0.45; d.len()],
            0.01,
        )
        .unwrap();
        let t = risks_by_aipw(&d, &nu).unwrap();
        let p = t.pseudo.as_ref().unwrap();
        for st in 1..=2 {
            let rows: Vec<usize> = (0..d.len()).filter(|&i| p.strata[i] == st).collect();
            let m0 = rows.iter().map(|&i| p.u0[i]).sum::<f64>() / rows.len() as f64;
            let m1 = rows.iter().map(|&i| p.u1[i]).sum::<f64>() / rows.len() as f64;
            assert!((m0 - t.p0[st - 1]).abs() < 1e-12);
            assert!((m1 - t.p1[st - 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn aipw_with_cell_means_reproduces_proportions() {
        let d = fixture();
        let spec = OutcomeModelSpec {
            kind: OutcomeKind::StratumMeans,
            ..Default::default()
        };
        for pspec in [PropensitySpec::StratumShare, PropensitySpec::ArmShare] {
            let nu = fit_nuisances(&d, &spec, &pspec, &FoldSpec::Stratified { k: 1, seed: 0 }, 0.0).unwrap();
            let a = risks_by_aipw(&d, &nu).unwrap();
            let b = risks_by_proportion(&d).unwrap();
            for st in 0..2 {
                assert!((a.p0[st] - b.p0[st]).abs() < 1e-14);
                assert!((a.p1[st] - b.p1[st]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn missing_nuisance_detected() {
        let d = fixture();
        let mut nu = NuisanceSet::from_values(vec![0.3; d.len()], vec![0.4; d.len()], vec![0.5; d.len()], 0.01).unwrap();
        nu.p1[5] = f64::NAN;
        assert!(matches!(risks_by_aipw(&d, &nu), Err(Error::MissingNuisance(5))));
    }

    #[test]
    fn mu_is_share_weighted_average() {
        let t = StratumRiskTable::from_risks(vec![0.2, 0.6], vec![0.4, 0.6]).unwrap();
        let mu = estimate_mu(&t);
        assert!((mu.mu1 - 0.4).abs() < 1e-15);
        assert!((mu.mu0 - 0.6).abs() < 1e-15);
        assert_eq!(mu.mu0 + mu.mu1, 1.0);
    }

    #[test]
    fn single_stratum_mu() {
        let t = StratumRiskTable::from_risks(vec![0.37], vec![0.5]).unwrap();
        assert_eq!(estimate_mu(&t).mu1, 0.37);
    }

    #[test]
    fn proportions_permutation_equivariant() {
        let d = fixture();
        let t = risks_by_proportion(&d).unwrap();
        let relabelled: Vec<usize> = d.stratum().iter().map(|&s| 3 - s).collect();
        let d2 = crate::data::validate(d.dataset().clone().with_strata(relabelled, vec![]).unwrap()).unwrap();
        let t2 = risks_by_proportion(&d2).unwrap();
        assert_eq!(t.permuted(&[1, 0]).p0, t2.p0);
        assert_eq!(t.permuted(&[1, 0]).p1, t2.p1);
    }
}
