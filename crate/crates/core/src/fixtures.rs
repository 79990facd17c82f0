//! Small datasets for trying the tools and for tests.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::data::Dataset;
use crate::error::Result;
use crate::nuisance::expit;
use crate::rng;
use crate::sim::{generate, DgpConfig, StudyConfig};

/// Writes `data` as CSV: `a`, `y`, every covariate, then `s` and `cluster` when present.
pub fn write_dataset_csv<W: Write>(data: &Dataset, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["a".to_string(), "y".to_string()];
    header.extend(data.covariate_names().iter().cloned());
    if data.strata().is_some() {
        header.push("s".into());
    }
    if data.clusters().is_some() {
        header.push("cluster".into());
    }
    wtr.write_record(&header)?;
    let cols = data
        .covariate_names()
        .iter()
        .map(|c| data.column(c))
        .collect::<Result<Vec<_>>>()?;
    for i in 0..data.len() {
        let mut row = vec![data.treatment()[i].to_string(), data.outcome()[i].to_string()];
        row.extend(cols.iter().map(|c| c[i].to_string()));
        if let Some(s) = data.strata() {
            row.push(s[i].to_string());
        }
        if let Some(c) = data.clusters() {
            row.push(c[i].clone());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Two strata with p^(0) = (0.5, 0.25) and p^(1) = (0.55, 0.425), so θ = (0.3, 0.8).
pub fn two_stratum() -> Dataset {
    let mut a = Vec::new();
    let mut y = Vec::new();
    let mut s = Vec::new();
    for (stratum, arm, ones, n) in [(1.0, 0u8, 10, 20), (1.0, 1, 11, 20), (2.0, 0, 10, 40), (2.0, 1, 17, 40)] {
        for k in 0..n {
            a.push(arm);
            y.push((k < ones) as u8);
            s.push(stratum);
        }
    }
    Dataset::from_columns(a, y, vec!["s".into()], vec![s]).expect("fixture is well formed")
}

/// Households of one to four members with a shared effect on Y(0); strata cross
/// `sex` with a two-level `age_group`; treatment randomized by household.
pub fn clustered(households: usize, seed: u64) -> Dataset {
    let mut rng = rng::stream(seed, 0);
    let (mut a, mut y, mut sex, mut age, mut ids) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for h in 0..households {
        let size = rng.gen_range(1..=4);
        let shared: f64 = 0.6 * (rng.gen::<f64>() - 0.5);
        let treated = rng.gen::<f64>() < 0.5;
        for _ in 0..size {
            let sx = rng.gen_range(0..2) as f64;
            let ag = rng.gen_range(0..2) as f64;
            let q = expit(-0.6 + 0.5 * sx + 0.4 * ag + shared);
            let y0 = rng.gen::<f64>() < q;
            let y1 = rng.gen::<f64>() < if y0 { 0.75 } else { 0.35 };
            a.push(treated as u8);
            y.push(if treated { y1 } else { y0 } as u8);
            sex.push(sx);
            age.push(ag);
            ids.push(format!("h{h:04}"));
        }
    }
    Dataset::from_columns(a, y, vec!["sex".into(), "age_group".into()], vec![sex, age])
        .and_then(|d| d.with_clusters(ids))
        .expect("fixture is well formed")
}

fn simulated(cfg: &DgpConfig) -> Result<Dataset> {
    let sim = generate(cfg)?;
    let s: Vec<f64> = sim.data.strata().expect("simulated strata").iter().map(|&v| v as f64).collect();
    let mut names = sim.data.covariate_names().to_vec();
    let mut cols = names
        .iter()
        .map(|c| sim.data.column(c).map(<[f64]>::to_vec))
        .collect::<Result<Vec<_>>>()?;
    names.push("quartile".into());
    cols.push(s);
    Dataset::from_columns(sim.data.treatment().to_vec(), sim.data.outcome().to_vec(), names, cols)
}

/// Writes the fixture set into `dir` and returns the paths written.
pub fn write_fixtures(dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put_csv = |name: &str, data: &Dataset| -> Result<()> {
        let path = dir.join(name);
        write_dataset_csv(data, std::fs::File::create(&path)?)?;
        written.push(path);
        Ok(())
    };
    put_csv("two_stratum.csv", &two_stratum())?;
    put_csv(
        "randomized.csv",
        &simulated(&DgpConfig {
            n: 4000,
            seed: 1,
            ..Default::default()
        })?,
    )?;
    put_csv(
        "confounded.csv",
        &simulated(&DgpConfig {
            n: 4000,
            seed: 2,
            treatment_v_slope: 1.0,
            ..Default::default()
        })?,
    )?;
    put_csv("clustered.csv", &clustered(600, 3))?;

    let grid = dir.join("gamma_grid.csv");
    std::fs::write(
        &grid,
        "scenario,stratum,gamma0,gamma1\nnull,1,0,0\nnull,2,0,0\nshift,1,0.05,0\nshift,2,0.05,0\n",
    )?;
    written.push(grid);

    let study = dir.join("study.toml");
    let cfg = StudyConfig {
        reps: 20,
        dgp: DgpConfig {
            n: 2000,
            ..Default::default()
        },
        ..Default::default()
    };
    std::fs::write(
        &study,
        toml::to_string_pretty(&cfg).map_err(|e| crate::Error::Config(e.to_string()))?,
    )?;
    written.push(study);
    Ok(written)
}
