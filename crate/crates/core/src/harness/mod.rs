//! Monte Carlo experiments, their JSON configuration and flat-file output.
//!
//! Every experiment produces one [`ResultRow`] per (trial, grid point,
//! method) plus optional side tables, all held in an [`ExperimentOutput`].
//! Randomness is drawn from per-trial substreams of the configured seed, so
//! results do not depend on how trials are spread over worker threads.

mod experiments;
mod spec;

pub use experiments::{
    paradigm_angles, run, run_paradigm, run_power_sweep, run_single, run_ula_pattern, run_ula_separation,
    run_single_spec, run_users_per_group, trial_instance, Instance, MethodReport, SingleReport,
};
pub use spec::{ExperimentKind, ExperimentSpec, Method};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::PrecodingMatrix;
use crate::model::C64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub trial: usize,
    pub seed: u64,
    pub method: Method,
    /// Independent variable: power in dBW, users per group, separation in
    /// degrees or instance index, depending on the experiment.
    pub x: f64,
    pub sum_rate: f64,
    pub min_group_sinr: f64,
    /// `;`-separated group powers `||w_k||^2`.
    pub group_powers: String,
    /// `;`-separated antenna powers `[W W^H]_nn`.
    pub antenna_powers: String,
    pub max_pac_ratio: f64,
    pub iterations: usize,
    /// Column-major `re,im` pairs separated by `;`.
    pub precoder: String,
}

impl ResultRow {
    pub fn group_power_values(&self) -> Result<Vec<f64>> {
        parse_list(&self.group_powers)
    }

    pub fn antenna_power_values(&self) -> Result<Vec<f64>> {
        parse_list(&self.antenna_powers)
    }

    pub fn precoder_matrix(&self, n_antennas: usize, n_groups: usize) -> Result<PrecodingMatrix> {
        decode_precoder(&self.precoder, n_antennas, n_groups)
    }
}

pub(crate) fn join(values: impl IntoIterator<Item = f64>) -> String {
    let mut s = String::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            s.push(';');
        }
        let _ = write!(s, "{v:?}");
    }
    s
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|v| v.parse().map_err(|_| Error::Config(format!("bad number `{v}`"))))
        .collect()
}

pub fn encode_precoder(w: &PrecodingMatrix) -> String {
    let mut s = String::new();
    for (i, z) in w.matrix().iter().enumerate() {
        if i > 0 {
            s.push(';');
        }
        let _ = write!(s, "{:?},{:?}", z.re, z.im);
    }
    s
}

pub fn decode_precoder(s: &str, n_antennas: usize, n_groups: usize) -> Result<PrecodingMatrix> {
    let entries = s
        .split(';')
        .map(|pair| {
            let (re, im) = pair
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("bad precoder entry `{pair}`")))?;
            let parse = |v: &str| v.parse::<f64>().map_err(|_| Error::Config(format!("bad number `{v}`")));
            Ok(C64::new(parse(re)?, parse(im)?))
        })
        .collect::<Result<Vec<_>>>()?;
    if entries.len() != n_antennas * n_groups {
        return Err(Error::Dimension(format!(
            "precoder has {} entries, expected {}",
            entries.len(),
            n_antennas * n_groups
        )));
    }
    PrecodingMatrix::new(DMatrix::from_vec(n_antennas, n_groups, entries))
}

/// A trial left out of the results, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub x: f64,
    pub method: Method,
    pub error: String,
}

/// Extra CSV written next to the main results.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub records: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub spec: ExperimentSpec,
    pub rows: Vec<ResultRow>,
    pub tables: Vec<Table>,
    pub failures: Vec<TrialFailure>,
    pub wall_time_s: f64,
}

impl ExperimentOutput {
    /// Rows for one method at one grid point.
    pub fn select(&self, method: Method, x: f64) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| r.method == method && r.x == x)
    }

    pub fn mean_sum_rate(&self, method: Method, x: f64) -> Option<f64> {
        let v: Vec<f64> = self.select(method, x).map(|r| r.sum_rate).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Main results as CSV bytes.
    pub fn results_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    /// Writes `<name>.csv`, every side table and `<name>.meta.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let name = &self.spec.name;
        let mut written = Vec::new();
        let main = dir.join(format!("{name}.csv"));
        fs::write(&main, self.results_csv()?)?;
        written.push(main);
        for t in &self.tables {
            let path = dir.join(format!("{name}_{}.csv", t.name));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(&t.header)?;
            for r in &t.records {
                w.write_record(r)?;
            }
            w.flush()?;
            written.push(path);
        }
        let meta = Metadata {
            spec: &self.spec,
            crate_version: env!("CARGO_PKG_VERSION"),
            git_hash: git_hash(),
            seed: self.spec.config.seed,
            trials: self.spec.trials,
            rows: self.rows.len(),
            failures: &self.failures,
            wall_time_s: self.wall_time_s,
        };
        let path = dir.join(format!("{name}.meta.json"));
        fs::write(&path, serde_json::to_string_pretty(&meta)?)?;
        written.push(path);
        Ok(written)
    }
}

#[derive(Serialize)]
struct Metadata<'a> {
    spec: &'a ExperimentSpec,
    crate_version: &'a str,
    git_hash: String,
    seed: u64,
    trials: usize,
    rows: usize,
    failures: &'a [TrialFailure],
    wall_time_s: f64,
}

fn git_hash() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}
