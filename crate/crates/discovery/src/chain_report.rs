//! Exact analysis of replicator-free populations over a design grid, with
//! on-disk caching of win matrices.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use discovery_core::chain::{build_transition_matrix, ChainSummary, TransitionMatrix};
use discovery_core::data_gen::TruthSpec;
use discovery_core::rng::fnv1a;
use discovery_core::selection::{check_win_inputs, tally_range, Statistic, WinMatrix, WinTally};
use discovery_core::strategies::{ProposalTable, StrategyKind};
use discovery_core::{ModelSpace, ModelSpec};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{signal_name, PopulationSpec, RunConfig};
use crate::error::{HarnessError, Result};

/// Replicates per parallel work unit. Fixed so results do not depend on
/// the number of workers.
const CHUNK: u64 = 500;

pub const STATIONARY_TOL: f64 = 1e-10;

/// Win matrices for several statistics from the same replicate datasets,
/// computed in parallel.
pub fn estimate_win_matrices(
    truth: &TruthSpec,
    space: &ModelSpace,
    statistics: &[Statistic],
    samples: usize,
    ndec: u32,
    seed: u64,
) -> Result<Vec<WinMatrix>> {
    check_win_inputs(truth, space, samples)?;
    let total = samples as u64;
    let chunks: Vec<u64> = (0..total.div_ceil(CHUNK)).collect();
    let parts: Vec<Vec<WinTally>> = chunks
        .par_iter()
        .map(|&c| tally_range(truth, space, statistics, ndec, seed, c * CHUNK..((c + 1) * CHUNK).min(total)))
        .collect();
    let mut acc: Vec<WinTally> = statistics.iter().map(|_| WinTally::new(space.len())).collect();
    for part in &parts {
        for (a, p) in acc.iter_mut().zip(part) {
            a.merge(p);
        }
    }
    acc.iter().map(|t| t.finish().map_err(Into::into)).collect()
}

/// Content key of a cached win matrix.
pub fn cache_key(truth: &TruthSpec, statistic: Statistic, samples: usize, ndec: u32, seed: u64) -> u64 {
    let text = format!(
        "{}|k={}|n={}|sigma={}|corr={}|signal={}|{}|V={}|ndec={}|seed={}",
        truth.true_model,
        truth.k,
        truth.n,
        truth.sigma_level,
        truth.correlation,
        signal_name(truth.signal),
        statistic,
        samples,
        ndec,
        seed
    );
    fnv1a(text.as_bytes())
}

/// Writes a win matrix with canonical model strings as row and column
/// labels (rows proposed, columns incumbent).
pub fn write_win_matrix<W: Write>(out: W, space: &ModelSpace, win: &WinMatrix) -> Result<()> {
    let labels: Vec<String> = space.models().iter().map(ToString::to_string).collect();
    let rows: Vec<Vec<f64>> = win.rows().map(<[f64]>::to_vec).collect();
    write_labeled_matrix(out, "proposed", &labels, &labels, &rows)
}

pub fn read_win_matrix(path: &Path, space: &ModelSpace, samples: usize) -> Result<WinMatrix> {
    let (cols, rows) = read_labeled_matrix(path)?;
    let labels: Vec<String> = space.models().iter().map(ToString::to_string).collect();
    if cols != labels || rows.iter().map(|(l, _)| l).ne(labels.iter()) {
        return Err(HarnessError::runtime(format!("{}: labels do not match the model space", path.display())));
    }
    let w: Vec<f64> = rows.into_iter().flat_map(|(_, v)| v).collect();
    Ok(WinMatrix::from_rows(space.len(), w, samples)?)
}

/// Win-matrix store, optionally backed by a directory.
#[derive(Clone, Debug, Default)]
pub struct WinCache {
    dir: Option<PathBuf>,
}

impl WinCache {
    pub fn new(dir: Option<PathBuf>) -> WinCache {
        WinCache { dir }
    }

    fn path(&self, key: u64) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("winmatrix-{key:016x}.csv")))
    }

    /// Win matrices for `statistics`, loaded when cached and estimated
    /// (then stored) otherwise.
    pub fn get(
        &self,
        truth: &TruthSpec,
        space: &ModelSpace,
        statistics: &[Statistic],
        samples: usize,
        ndec: u32,
        seed: u64,
    ) -> Result<Vec<WinMatrix>> {
        let paths: Vec<Option<PathBuf>> = statistics
            .iter()
            .map(|&s| self.path(cache_key(truth, s, samples, ndec, seed)))
            .collect();
        if paths.iter().all(|p| p.as_ref().is_some_and(|p| p.exists())) {
            return paths
                .iter()
                .map(|p| read_win_matrix(p.as_ref().unwrap(), space, samples))
                .collect();
        }
        let wins = estimate_win_matrices(truth, space, statistics, samples, ndec, seed)?;
        if let Some(dir) = &self.dir {
            std::fs::create_dir_all(dir)?;
            for (path, win) in paths.iter().zip(&wins) {
                let path = path.as_ref().unwrap();
                let tmp = path.with_extension("tmp");
                write_win_matrix(File::create(&tmp)?, space, win)?;
                std::fs::rename(&tmp, path)?;
            }
        }
        Ok(wins)
    }
}

/// Chain analysis of one (true model, sigma, population, statistic) cell.
#[derive(Clone, Debug)]
pub struct ChainCell {
    pub true_model: ModelSpec,
    pub sigma: f64,
    pub population: String,
    pub statistic: Statistic,
    pub transition: TransitionMatrix,
    pub summary: ChainSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainRow {
    pub true_model: String,
    pub sigma: f64,
    pub population: String,
    pub statistic: String,
    pub true_stickiness: f64,
    pub time_at_true: f64,
    pub mean_mfpt: f64,
}

impl ChainCell {
    pub fn row(&self) -> ChainRow {
        ChainRow {
            true_model: self.true_model.to_string(),
            sigma: self.sigma,
            population: self.population.clone(),
            statistic: self.statistic.to_string(),
            true_stickiness: self.summary.true_stickiness(),
            time_at_true: self.summary.time_at_true(),
            mean_mfpt: self.summary.mean_mfpt(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ChainReport {
    pub space: ModelSpace,
    pub cells: Vec<ChainCell>,
}

fn check_populations(pops: &[PopulationSpec]) -> Result<()> {
    for p in pops {
        if p.weights[StrategyKind::Rey.index()] > 0.0 {
            return Err(HarnessError::validation(format!(
                "population `{}` includes replicators; exact chain analysis covers replicator-free \
                 populations only, use the abm command instead",
                p.label
            )));
        }
    }
    Ok(())
}

/// Chain summaries for every true model x sigma x population x statistic.
pub fn analyze_chain(cfg: &RunConfig, cache: &WinCache) -> Result<ChainReport> {
    cfg.validate()?;
    let space = cfg.space()?;
    let pops = cfg.chain_populations()?;
    check_populations(&pops)?;
    let table = ProposalTable::new(&space, cfg.mode, cfg.hard_residual)?;
    let mut cells = Vec::new();
    for &true_model in &cfg.true_models {
        let true_index = space
            .index_of(true_model)
            .ok_or_else(|| HarnessError::validation(format!("`{true_model}` is not in the space")))?;
        for &sigma in &cfg.sigma {
            let mut truth = TruthSpec::new(true_model, cfg.k, cfg.sample_size, sigma, cfg.correlation);
            truth.signal = cfg.signal;
            let wins = cache.get(&truth, &space, &cfg.statistics, cfg.win_samples, cfg.ndec, cfg.seed)?;
            for pop in &pops {
                let population = pop.population(cfg.mode)?;
                for (&statistic, win) in cfg.statistics.iter().zip(&wins) {
                    let transition = build_transition_matrix(win, &population, &table)?;
                    let summary = ChainSummary::new(&transition, true_index, STATIONARY_TOL)?;
                    cells.push(ChainCell {
                        true_model,
                        sigma,
                        population: pop.label.clone(),
                        statistic,
                        transition,
                        summary,
                    });
                }
            }
        }
    }
    Ok(ChainReport { space, cells })
}

fn write_labeled_matrix<W: Write>(
    out: W,
    corner: &str,
    cols: &[String],
    row_labels: &[String],
    rows: &[Vec<f64>],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![corner.to_string()];
    header.extend(cols.iter().cloned());
    w.write_record(&header)?;
    for (label, values) in row_labels.iter().zip(rows) {
        let mut rec = vec![label.clone()];
        rec.extend(values.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

type LabeledRows = Vec<(String, Vec<f64>)>;

pub fn read_labeled_matrix(path: &Path) -> Result<(Vec<String>, LabeledRows)> {
    let mut r = csv::Reader::from_path(path)?;
    let cols: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let label = rec.get(0).unwrap_or_default().to_string();
        let values = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map_err(|_| HarnessError::runtime(format!("bad number `{v}`"))))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != cols.len() {
            return Err(HarnessError::runtime(format!("{}: ragged row", path.display())));
        }
        rows.push((label, values));
    }
    Ok((cols, rows))
}

fn file_tag(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

/// Writes the long summary table plus stickiness, first-passage and
/// occupancy matrices. Returns the files written.
pub fn write_report(dir: &Path, report: &ChainReport) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let labels: Vec<String> = report.space.models().iter().map(ToString::to_string).collect();

    let path = dir.join("chain_summary.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for c in &report.cells {
        w.serialize(c.row())?;
    }
    w.flush()?;
    written.push(path);

    // (statistic, sigma) -> population -> cells
    let mut grouped: BTreeMap<(String, String), BTreeMap<String, Vec<&ChainCell>>> = BTreeMap::new();
    let mut pop_order: Vec<String> = Vec::new();
    for c in &report.cells {
        if !pop_order.contains(&c.population) {
            pop_order.push(c.population.clone());
        }
        grouped
            .entry((c.statistic.to_string(), c.sigma.to_string()))
            .or_default()
            .entry(c.population.clone())
            .or_default()
            .push(c);
    }

    for ((stat, sigma), by_pop) in &grouped {
        let tag = format!("{}_sigma{}", file_tag(stat), file_tag(sigma));
        let true_models: Vec<ModelSpec> = by_pop.values().next().map(|v| v.iter().map(|c| c.true_model).collect()).unwrap_or_default();
        let tm_labels: Vec<String> = true_models.iter().map(ToString::to_string).collect();
        let pops: Vec<&String> = pop_order.iter().filter(|p| by_pop.contains_key(*p)).collect();

        // true-model stickiness: rows true model, columns population
        let rows: Vec<Vec<f64>> = true_models
            .iter()
            .enumerate()
            .map(|(i, _)| pops.iter().map(|p| by_pop[*p][i].summary.true_stickiness()).collect())
            .collect();
        let path = dir.join(format!("stickiness_{tag}.csv"));
        let cols: Vec<String> = pops.iter().map(|p| p.to_string()).collect();
        write_labeled_matrix(File::create(&path)?, "true_model", &cols, &tm_labels, &rows)?;
        written.push(path);

        for p in &pops {
            let cells = &by_pop[*p];
            // first passage: rows initial model, columns true model
            let rows: Vec<Vec<f64>> = (0..labels.len())
                .map(|init| cells.iter().map(|c| c.summary.mfpt[init]).collect())
                .collect();
            let path = dir.join(format!("mfpt_{tag}_{}.csv", file_tag(p)));
            write_labeled_matrix(File::create(&path)?, "initial_model", &tm_labels, &labels, &rows)?;
            written.push(path);

            // long-run occupancy: rows true model, columns visited model
            let rows: Vec<Vec<f64>> = cells.iter().map(|c| c.summary.stationary.clone()).collect();
            let path = dir.join(format!("occupancy_{tag}_{}.csv", file_tag(p)));
            write_labeled_matrix(File::create(&path)?, "true_model", &labels, &tm_labels, &rows)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Mean over cells of a per-cell quantity, grouped by population.
pub fn population_means<F: Fn(&ChainCell) -> f64>(
    cells: &[&ChainCell],
    f: F,
) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for c in cells {
        let e = acc.entry(c.population.clone()).or_default();
        e.0 += f(c);
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// Human-readable one-line description of a chain cell.
pub fn describe(c: &ChainCell) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{} sigma={} {} {}: stickiness {:.3}, occupancy {:.3}, mean first passage {:.2}",
        c.true_model,
        c.sigma,
        c.population,
        c.statistic,
        c.summary.true_stickiness(),
        c.summary.time_at_true(),
        c.summary.mean_mfpt()
    );
    s
}
