//! Dataset representation, validation and stratum construction.
//!
//! A [`Dataset`] is column-oriented: treatment, outcome, named real covariates,
//! an optional stratum label per row and optional cluster ids. Estimators take a
//! [`ValidatedDataset`], which additionally guarantees binary `a`/`y`, a stratum
//! label in `1..=levels` for every row and at least one row in every
//! (stratum, arm) cell.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of raw input.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub a: f64,
    pub y: f64,
    pub v: Vec<f64>,
    pub s: Option<usize>,
    pub cluster: Option<String>,
}

impl Observation {
    pub fn new(a: u8, y: u8, v: Vec<f64>, s: usize) -> Self {
        Self {
            a: a as f64,
            y: y as f64,
            v,
            s: Some(s),
            cluster: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariate_names: Vec<String>,
    a: Vec<u8>,
    y: Vec<u8>,
    covariates: Vec<Vec<f64>>,
    strata: Option<Vec<usize>>,
    stratum_levels: Vec<String>,
    clusters: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset from rows, enforcing binary `a`/`y`, consistent covariate
    /// dimension and finite covariates. Stratum labels are kept if every row has one.
    pub fn from_observations(covariate_names: Vec<String>, rows: &[Observation]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let p = covariate_names.len();
        let mut a = Vec::with_capacity(rows.len());
        let mut y = Vec::with_capacity(rows.len());
        let mut covariates = vec![Vec::with_capacity(rows.len()); p];
        let with_strata = rows.iter().all(|r| r.s.is_some());
        let with_clusters = rows.iter().all(|r| r.cluster.is_some());
        for (i, row) in rows.iter().enumerate() {
            a.push(binary(row.a, i, "a")?);
            y.push(binary(row.y, i, "y")?);
            if row.v.len() != p {
                return Err(Error::RaggedCovariates {
                    row: i,
                    expected: p,
                    found: row.v.len(),
                });
            }
            for (j, &x) in row.v.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::MissingCovariate {
                        row: i,
                        column: covariate_names[j].clone(),
                    });
                }
                covariates[j].push(x);
            }
        }
        let strata = with_strata.then(|| rows.iter().map(|r| r.s.unwrap()).collect::<Vec<_>>());
        let stratum_levels = match &strata {
            Some(s) => default_levels(s),
            None => Vec::new(),
        };
        Ok(Self {
            covariate_names,
            a,
            y,
            covariates,
            strata,
            stratum_levels,
            clusters: with_clusters
                .then(|| rows.iter().map(|r| r.cluster.clone().unwrap()).collect()),
        })
    }

    /// Column-wise constructor used by the simulator and resampling code.
    pub fn from_columns(
        a: Vec<u8>,
        y: Vec<u8>,
        covariate_names: Vec<String>,
        covariates: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: y.len(),
            });
        }
        if covariates.len() != covariate_names.len() {
            return Err(Error::DimensionMismatch {
                expected: covariate_names.len(),
                found: covariates.len(),
            });
        }
        for (i, (&ai, &yi)) in a.iter().zip(&y).enumerate() {
            binary(ai as f64, i, "a")?;
            binary(yi as f64, i, "y")?;
        }
        for (j, col) in covariates.iter().enumerate() {
            if col.len() != n {
                return Err(Error::RaggedCovariates {
                    row: col.len().min(n),
                    expected: n,
                    found: col.len(),
                });
            }
            if let Some(i) = col.iter().position(|x| !x.is_finite()) {
                return Err(Error::MissingCovariate {
                    row: i,
                    column: covariate_names[j].clone(),
                });
            }
        }
        Ok(Self {
            covariate_names,
            a,
            y,
            covariates,
            strata: None,
            stratum_levels: Vec::new(),
            clusters: None,
        })
    }

    /// Reads a headered CSV. Treatment and outcome columns must hold 0/1; the
    /// cluster column (if named) is kept as an opaque string; every other column
    /// becomes a real covariate.
    pub fn from_csv_reader<R: Read>(reader: R, bindings: &ColumnBindings) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::UnknownColumn(name.to_owned()))
        };
        let ia = find(&bindings.treatment)?;
        let iy = find(&bindings.outcome)?;
        let ic = bindings.cluster.as_deref().map(find).transpose()?;
        let cov_idx: Vec<usize> = (0..headers.len())
            .filter(|&j| j != ia && j != iy && Some(j) != ic)
            .collect();
        let names: Vec<String> = cov_idx.iter().map(|&j| headers[j].clone()).collect();

        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |j: usize| -> Result<f64> {
                let field = rec.get(j).unwrap_or("");
                if field.is_empty() {
                    return Err(Error::MissingCovariate {
                        row: i,
                        column: headers[j].clone(),
                    });
                }
                field.parse::<f64>().map_err(|_| {
                    Error::Parse(format!("row {i}: column `{}`: `{field}` is not a number", headers[j]))
                })
            };
            let v = cov_idx.iter().map(|&j| num(j)).collect::<Result<Vec<_>>>()?;
            rows.push(Observation {
                a: num(ia)?,
                y: num(iy)?,
                v,
                s: None,
                cluster: ic.map(|j| rec.get(j).unwrap_or("").to_owned()),
            });
        }
        Self::from_observations(names, &rows)
    }

    pub fn from_csv_path(path: &Path, bindings: &ColumnBindings) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, bindings)
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn treatment(&self) -> &[u8] {
        &self.a
    }

    pub fn outcome(&self) -> &[u8] {
        &self.y
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.covariate_names
            .iter()
            .position(|c| c == name)
            .map(|j| self.covariates[j].as_slice())
            .ok_or_else(|| Error::UnknownColumn(name.to_owned()))
    }

    pub fn strata(&self) -> Option<&[usize]> {
        self.strata.as_deref()
    }

    pub fn stratum_levels(&self) -> &[String] {
        &self.stratum_levels
    }

    pub fn clusters(&self) -> Option<&[String]> {
        self.clusters.as_deref()
    }

    /// Adds (or replaces) a real covariate column.
    pub fn with_column(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: values.len(),
            });
        }
        match self.covariate_names.iter().position(|c| c == name) {
            Some(j) => self.covariates[j] = values,
            None => {
                self.covariate_names.push(name.to_owned());
                self.covariates.push(values);
            }
        }
        Ok(self)
    }

    pub fn with_strata(mut self, labels: Vec<usize>, levels: Vec<String>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: labels.len(),
            });
        }
        self.strata = Some(labels);
        self.stratum_levels = levels;
        Ok(self)
    }

    pub fn with_clusters(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: ids.len(),
            });
        }
        self.clusters = Some(ids);
        Ok(self)
    }

    /// Rows in the given order (repeats allowed), keeping every attribute.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            covariate_names: self.covariate_names.clone(),
            a: rows.iter().map(|&i| self.a[i]).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            covariates: self
                .covariates
                .iter()
                .map(|col| rows.iter().map(|&i| col[i]).collect())
                .collect(),
            strata: self
                .strata
                .as_ref()
                .map(|s| rows.iter().map(|&i| s[i]).collect()),
            stratum_levels: self.stratum_levels.clone(),
            clusters: self
                .clusters
                .as_ref()
                .map(|c| rows.iter().map(|&i| c[i].clone()).collect()),
        }
    }

    /// Cluster membership as dense indices; rows without cluster ids are their own cluster.
    pub fn cluster_groups(&self) -> Vec<Vec<usize>> {
        match &self.clusters {
            None => (0..self.len()).map(|i| vec![i]).collect(),
            Some(ids) => {
                let mut index: BTreeMap<&str, usize> = BTreeMap::new();
                let mut groups: Vec<Vec<usize>> = Vec::new();
                for (i, id) in ids.iter().enumerate() {
                    let g = *index.entry(id.as_str()).or_insert_with(|| {
                        groups.push(Vec::new());
                        groups.len() - 1
                    });
                    groups[g].push(i);
                }
                groups
            }
        }
    }
}

fn binary(x: f64, row: usize, column: &str) -> Result<u8> {
    if x == 0.0 {
        Ok(0)
    } else if x == 1.0 {
        Ok(1)
    } else {
        Err(Error::NonBinaryValue {
            row,
            column: column.to_owned(),
            value: x,
        })
    }
}

fn default_levels(labels: &[usize]) -> Vec<String> {
    let k = labels.iter().copied().max().unwrap_or(0);
    (1..=k).map(|s| s.to_string()).collect()
}

/// CSV column bindings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnBindings {
    pub treatment: String,
    pub outcome: String,
    pub cluster: Option<String>,
}

impl Default for ColumnBindings {
    fn default() -> Self {
        Self {
            treatment: "a".into(),
            outcome: "y".into(),
            cluster: None,
        }
    }
}

/// A dataset that passed validation; immutable from here on.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedDataset {
    data: Dataset,
    levels: usize,
    counts: Vec<[usize; 2]>,
}

impl Deref for ValidatedDataset {
    type Target = Dataset;

    fn deref(&self) -> &Dataset {
        &self.data
    }
}

impl ValidatedDataset {
    /// Number of strata |S|.
    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Stratum labels, 1-based.
    pub fn stratum(&self) -> &[usize] {
        self.data.strata.as_deref().expect("validated dataset has strata")
    }

    /// Rows in stratum `s` (1-based) with treatment `a`.
    pub fn cell_count(&self, s: usize, a: u8) -> usize {
        self.counts[s - 1][a as usize]
    }

    pub fn stratum_count(&self, s: usize) -> usize {
        self.counts[s - 1][0] + self.counts[s - 1][1]
    }

    /// All (stratum, arm) cell counts.
    pub fn counts(&self) -> BTreeMap<(usize, u8), usize> {
        let mut out = BTreeMap::new();
        for (i, c) in self.counts.iter().enumerate() {
            out.insert((i + 1, 0), c[0]);
            out.insert((i + 1, 1), c[1]);
        }
        out
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn into_inner(self) -> Dataset {
        self.data
    }
}

/// Checks stratum labels and positivity of every (stratum, arm) cell.
pub fn validate(data: Dataset) -> Result<ValidatedDataset> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let strata = data.strata.as_ref().ok_or(Error::StratumUnassigned)?;
    let levels = data.stratum_levels.len().max(strata.iter().copied().max().unwrap_or(0));
    if levels < 2 {
        return Err(Error::TooFewStrata(levels));
    }
    let mut counts = vec![[0usize; 2]; levels];
    for (i, (&s, &a)) in strata.iter().zip(&data.a).enumerate() {
        if s == 0 || s > levels {
            return Err(Error::InvalidStratum {
                row: i,
                label: s,
                levels,
            });
        }
        counts[s - 1][a as usize] += 1;
    }
    for (i, c) in counts.iter().enumerate() {
        for arm in 0..2u8 {
            if c[arm as usize] == 0 {
                return Err(Error::EmptyStratumArm {
                    stratum: i + 1,
                    arm,
                });
            }
        }
    }
    let mut data = data;
    if data.stratum_levels.len() < levels {
        data.stratum_levels = (1..=levels).map(|s| s.to_string()).collect();
    }
    Ok(ValidatedDataset {
        data,
        levels,
        counts,
    })
}

/// Validates raw rows (which must carry stratum labels).
pub fn validate_dataset(covariate_names: Vec<String>, rows: &[Observation]) -> Result<ValidatedDataset> {
    let data = Dataset::from_observations(covariate_names, rows)?;
    if data.strata.is_none() {
        return Err(Error::StratumUnassigned);
    }
    validate(data)
}

/// How the stratum variable S is derived from covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum StratumSpec {
    /// Distinct values of an existing column, sorted ascending, become levels 1..k.
    ExistingColumn { column: String },
    /// Empirical quantile bins of a column.
    QuantileBins { column: String, bins: usize },
    /// One level per observed combination of the listed columns.
    FactorCross { columns: Vec<String> },
}

/// Reusable mapping from covariates to stratum labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StratumMap {
    /// Interior edges; a value equal to an edge goes to the lower bin.
    QuantileEdges { column: String, edges: Vec<f64> },
    /// Level keys in label order (label = position + 1).
    Levels {
        columns: Vec<String>,
        keys: Vec<Vec<f64>>,
    },
}

impl StratumMap {
    pub fn level_count(&self) -> usize {
        match self {
            StratumMap::QuantileEdges { edges, .. } => edges.len() + 1,
            StratumMap::Levels { keys, .. } => keys.len(),
        }
    }

    pub fn level_names(&self) -> Vec<String> {
        match self {
            StratumMap::QuantileEdges { column, edges } => (0..=edges.len())
                .map(|b| {
                    // labels only; the map keeps full-precision edges
                    let lo = if b == 0 { "-inf".to_owned() } else { format!("{:.4}", edges[b - 1]) };
                    let hi = if b == edges.len() { "inf".to_owned() } else { format!("{:.4}", edges[b]) };
                    format!("{column} in ({lo}, {hi}]")
                })
                .collect(),
            StratumMap::Levels { columns, keys } => keys
                .iter()
                .map(|k| {
                    columns
                        .iter()
                        .zip(k)
                        .map(|(c, v)| format!("{c}={}", fmt_num(*v)))
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect(),
        }
    }

    /// Labels for every row of `data`.
    pub fn assign(&self, data: &Dataset) -> Result<Vec<usize>> {
        match self {
            StratumMap::QuantileEdges { column, edges } => {
                let x = data.column(column)?;
                Ok(x.iter().map(|&v| 1 + edges.iter().filter(|&&e| v > e).count()).collect())
            }
            StratumMap::Levels { columns, keys } => {
                let cols = columns
                    .iter()
                    .map(|c| data.column(c))
                    .collect::<Result<Vec<_>>>()?;
                let index: BTreeMap<Vec<u64>, usize> = keys
                    .iter()
                    .enumerate()
                    .map(|(i, k)| (key_bits(k), i + 1))
                    .collect();
                (0..data.len())
                    .map(|i| {
                        let key: Vec<f64> = cols.iter().map(|c| c[i]).collect();
                        index.get(&key_bits(&key)).copied().ok_or_else(|| {
                            Error::Parse(format!("row {i}: level {key:?} not seen when the stratum map was built"))
                        })
                    })
                    .collect()
            }
        }
    }

    /// Applies the map, returning a dataset with strata set.
    pub fn apply(&self, data: Dataset) -> Result<Dataset> {
        let labels = self.assign(&data)?;
        data.with_strata(labels, self.level_names())
    }
}

fn key_bits(k: &[f64]) -> Vec<u64> {
    // -0.0 and 0.0 must land on the same level
    k.iter().map(|x| (x + 0.0).to_bits()).collect()
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

/// Empirical quantile (inverse ECDF): the ceil(n p)-th order statistic.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let k = ((n as f64) * p).ceil() as usize;
    sorted[k.clamp(1, n) - 1]
}

/// Derives S from the dataset according to `spec`; returns the labelled dataset
/// and the map for applying the same construction to new data.
pub fn construct_stratum(data: Dataset, spec: &StratumSpec) -> Result<(Dataset, StratumMap)> {
    let map = build_stratum_map(&data, spec)?;
    let out = map.apply(data)?;
    Ok((out, map))
}

pub fn build_stratum_map(data: &Dataset, spec: &StratumSpec) -> Result<StratumMap> {
    match spec {
        StratumSpec::ExistingColumn { column } => Ok(StratumMap::Levels {
            columns: vec![column.clone()],
            keys: distinct_keys(data, std::slice::from_ref(column))?,
        }),
        StratumSpec::FactorCross { columns } => Ok(StratumMap::Levels {
            columns: columns.clone(),
            keys: distinct_keys(data, columns)?,
        }),
        StratumSpec::QuantileBins { column, bins } => {
            let x = data.column(column)?;
            let bins = *bins;
            if bins < 2 {
                return Err(Error::Config("quantile-bins needs at least 2 bins".into()));
            }
            let mut sorted = x.to_vec();
            sorted.sort_by(f64::total_cmp);
            let edges: Vec<f64> = (1..bins)
                .map(|j| empirical_quantile(&sorted, j as f64 / bins as f64))
                .collect();
            let distinct = edges.windows(2).filter(|w| w[1] > w[0]).count() + 1;
            let map = StratumMap::QuantileEdges {
                column: column.clone(),
                edges,
            };
            let degenerate = || Error::DegenerateBins {
                column: column.clone(),
                bins,
                distinct,
            };
            if distinct < bins - 1 {
                return Err(degenerate());
            }
            let labels = map.assign(data)?;
            let mut seen = vec![false; bins];
            for s in labels {
                seen[s - 1] = true;
            }
            if seen.iter().any(|&b| !b) {
                return Err(degenerate());
            }
            Ok(map)
        }
    }
}

fn distinct_keys(data: &Dataset, columns: &[String]) -> Result<Vec<Vec<f64>>> {
    let cols = columns
        .iter()
        .map(|c| data.column(c))
        .collect::<Result<Vec<_>>>()?;
    let mut keys: BTreeSet<Vec<OrdF64>> = BTreeSet::new();
    for i in 0..data.len() {
        keys.insert(cols.iter().map(|c| OrdF64(c[i] + 0.0)).collect());
    }
    Ok(keys
        .into_iter()
        .map(|k| k.into_iter().map(|x| x.0).collect())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
