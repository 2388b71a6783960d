//! One CSV row per (cell, replication) of an agent-based sweep.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use discovery_core::abm::AbmMetrics;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Bumped whenever the column set changes.
pub const SCHEMA_VERSION: u32 = 1;

/// Identifies a design cell.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub true_model: String,
    /// Noise fraction, kept textual so keys compare exactly.
    pub sigma: String,
    pub population: String,
    pub statistic: String,
    pub mode: String,
}

impl CellKey {
    /// Stable text used to derive the cell's random streams.
    pub fn id(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}",
            self.true_model, self.sigma, self.population, self.statistic, self.mode
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub true_model: String,
    pub sigma: String,
    pub population: String,
    pub statistic: String,
    pub mode: String,
    pub replication: u64,
    pub seed: u64,
    pub time_at_true: Option<f64>,
    pub first_passage: Option<u64>,
    pub censored: Option<bool>,
    pub stickiness: Option<f64>,
    pub repro_overall: Option<f64>,
    pub repro_at_true: Option<f64>,
    pub repro_not_true: Option<f64>,
    pub v: Option<u64>,
    pub v_t: Option<u64>,
    pub v_n: Option<u64>,
    pub regenerations: Option<u64>,
    pub error: Option<String>,
}

impl ResultRow {
    pub fn new(cell: &CellKey, replication: u64, seed: u64) -> ResultRow {
        ResultRow {
            true_model: cell.true_model.clone(),
            sigma: cell.sigma.clone(),
            population: cell.population.clone(),
            statistic: cell.statistic.clone(),
            mode: cell.mode.clone(),
            replication,
            seed,
            time_at_true: None,
            first_passage: None,
            censored: None,
            stickiness: None,
            repro_overall: None,
            repro_at_true: None,
            repro_not_true: None,
            v: None,
            v_t: None,
            v_n: None,
            regenerations: None,
            error: None,
        }
    }

    pub fn with_metrics(mut self, m: &AbmMetrics, regenerations: u64) -> ResultRow {
        self.time_at_true = m.time_at_true;
        self.first_passage = Some(m.first_passage as u64);
        self.censored = Some(m.censored);
        self.stickiness = m.stickiness;
        self.repro_overall = m.repro_overall;
        self.repro_at_true = m.repro_at_true;
        self.repro_not_true = m.repro_not_true;
        self.v = Some(m.v as u64);
        self.v_t = Some(m.v_t as u64);
        self.v_n = Some(m.v_n as u64);
        self.regenerations = Some(regenerations);
        self
    }

    pub fn with_error(mut self, error: String) -> ResultRow {
        self.error = Some(error);
        self
    }

    pub fn cell(&self) -> CellKey {
        CellKey {
            true_model: self.true_model.clone(),
            sigma: self.sigma.clone(),
            population: self.population.clone(),
            statistic: self.statistic.clone(),
            mode: self.mode.clone(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    /// Canonical row order: cell, then replication.
    pub fn canonical_cmp(&self, other: &ResultRow) -> Ordering {
        self.cell()
            .cmp(&other.cell())
            .then(self.replication.cmp(&other.replication))
    }

    /// Numeric value of a metric column by name, if present.
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "time_at_true" => self.time_at_true,
            "first_passage" => self.first_passage.map(|v| v as f64),
            "stickiness" => self.stickiness,
            "repro_overall" => self.repro_overall,
            "repro_at_true" => self.repro_at_true,
            "repro_not_true" => self.repro_not_true,
            "v" => self.v.map(|v| v as f64),
            "v_t" => self.v_t.map(|v| v as f64),
            "v_n" => self.v_n.map(|v| v as f64),
            "regenerations" => self.regenerations.map(|v| v as f64),
            _ => None,
        }
    }

    /// Value of a grouping column by name.
    pub fn label(&self, name: &str) -> Option<&str> {
        match name {
            "true_model" => Some(&self.true_model),
            "sigma" => Some(&self.sigma),
            "population" => Some(&self.population),
            "statistic" => Some(&self.statistic),
            "mode" => Some(&self.mode),
            _ => None,
        }
    }
}

pub const METRICS: [&str; 7] = [
    "time_at_true",
    "first_passage",
    "stickiness",
    "repro_overall",
    "repro_at_true",
    "repro_not_true",
    "v",
];

pub const GROUP_COLUMNS: [&str; 5] = ["true_model", "sigma", "population", "statistic", "mode"];

pub fn write_rows<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(header())?;
    }
    w.flush()?;
    Ok(())
}

fn header() -> Vec<&'static str> {
    vec![
        "true_model",
        "sigma",
        "population",
        "statistic",
        "mode",
        "replication",
        "seed",
        "time_at_true",
        "first_passage",
        "censored",
        "stickiness",
        "repro_overall",
        "repro_at_true",
        "repro_not_true",
        "v",
        "v_t",
        "v_n",
        "regenerations",
        "error",
    ]
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

pub fn write_file(path: &Path, rows: &[ResultRow]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    // write then rename so an interrupted write never truncates results
    let tmp = path.with_extension("csv.tmp");
    write_rows(File::create(&tmp)?, rows)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<ResultRow>> {
    read_rows(File::open(path)?)
}
