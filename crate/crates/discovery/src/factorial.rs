//! Completely randomized factorial sweep of the agent-based process.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use discovery_core::abm::{self, AbmConfig};
use discovery_core::data_gen::TruthSpec;
use discovery_core::rng::{fnv1a, mix, stream_rng};
use discovery_core::selection::Statistic;
use discovery_core::strategies::Population;
use discovery_core::ModelSpace;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::Result;
use crate::results::{self, CellKey, ResultRow};

/// One design cell: everything but the replication index.
#[derive(Clone, Debug)]
pub struct Cell {
    pub key: CellKey,
    pub abm: AbmConfig,
}

impl Cell {
    /// Root of the cell's random streams; replication `r` uses stream `r`.
    pub fn seed(&self, root: u64) -> u64 {
        mix(root, fnv1a(self.key.id().as_bytes()))
    }
}

/// Cells in canonical order.
pub fn cells(cfg: &RunConfig) -> Result<Vec<Cell>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for &true_model in &cfg.true_models {
        for &sigma in &cfg.sigma {
            for pop in cfg.abm_populations()? {
                for &statistic in &cfg.statistics {
                    let mut truth = TruthSpec::new(true_model, cfg.k, cfg.sample_size, sigma, cfg.correlation);
                    truth.signal = cfg.signal;
                    let key = CellKey {
                        true_model: true_model.to_string(),
                        sigma: sigma.to_string(),
                        population: pop.label.clone(),
                        statistic: statistic.to_string(),
                        mode: cfg.mode.to_string(),
                    };
                    let abm = AbmConfig {
                        truth,
                        population: pop.population(cfg.mode)?,
                        statistic,
                        ndec: cfg.ndec,
                        t_max: cfg.timesteps,
                        burn_in: cfg.burn_in,
                        hard_residual: cfg.hard_residual,
                        beta_policy: cfg.beta_policy,
                    };
                    out.push(Cell { key, abm });
                }
            }
        }
    }
    out.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(out)
}

/// Runs one replication; failures become an error row.
pub fn run_one(space: &ModelSpace, cell: &Cell, root: u64, replication: u64) -> ResultRow {
    let seed = cell.seed(root);
    let row = ResultRow::new(&cell.key, replication, seed);
    let mut rng = stream_rng(seed, replication);
    match abm::run(space, &cell.abm, &mut rng, false) {
        Ok(out) => row.with_metrics(&out.metrics, out.regenerations),
        Err(e) => row.with_error(e.to_string()),
    }
}

/// Runs every cell x replication not already present without error in
/// `existing`; returns all rows in canonical order.
pub fn run_factorial(cfg: &RunConfig, existing: Vec<ResultRow>) -> Result<Vec<ResultRow>> {
    let space = cfg.space()?;
    let cells = cells(cfg)?;
    let done: BTreeSet<(CellKey, u64)> = existing
        .iter()
        .filter(|r| r.is_ok())
        .map(|r| (r.cell(), r.replication))
        .collect();
    let jobs: Vec<(&Cell, u64)> = cells
        .iter()
        .flat_map(|c| (0..cfg.replications as u64).map(move |r| (c, r)))
        .filter(|(c, r)| !done.contains(&(c.key.clone(), *r)))
        .collect();
    let fresh: Vec<ResultRow> = jobs
        .par_iter()
        .map(|(cell, r)| run_one(&space, cell, cfg.seed, *r))
        .collect();
    let mut rows: Vec<ResultRow> = existing.into_iter().filter(ResultRow::is_ok).collect();
    rows.extend(fresh);
    rows.sort_by(ResultRow::canonical_cmp);
    Ok(rows)
}

pub fn results_path(output: &Path) -> PathBuf {
    output.join("results.csv")
}

/// Sweep writing to `<output>/results.csv`, resuming from its content.
/// Returns the rows and how many were computed now.
pub fn run_factorial_to_dir(cfg: &RunConfig) -> Result<(Vec<ResultRow>, usize)> {
    let path = results_path(&cfg.output);
    let existing = if path.exists() {
        results::read_file(&path)?
    } else {
        Vec::new()
    };
    let kept = existing.iter().filter(|r| r.is_ok()).count();
    let rows = run_factorial(cfg, existing)?;
    results::write_file(&path, &rows)?;
    let computed = rows.len() - kept;
    Ok((rows, computed))
}

/// Number of cells the design expands to.
pub fn cell_count(cfg: &RunConfig) -> Result<usize> {
    Ok(cfg.true_models.len() * cfg.sigma.len() * cfg.abm_populations()?.len() * cfg.statistics.len())
}

/// Config for a single cell, handy in tests.
pub fn single_cell(
    true_model: &str,
    sigma: f64,
    population: Population,
    statistic: Statistic,
) -> Result<AbmConfig> {
    let cfg = RunConfig::default();
    Ok(AbmConfig {
        truth: TruthSpec::new(true_model.parse()?, cfg.k, cfg.sample_size, sigma, cfg.correlation),
        population,
        statistic,
        ndec: cfg.ndec,
        t_max: cfg.timesteps,
        burn_in: cfg.burn_in,
        hard_residual: cfg.hard_residual,
        beta_policy: cfg.beta_policy,
    })
}
