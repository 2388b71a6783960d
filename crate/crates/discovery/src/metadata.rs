//! JSON sidecar describing how an output directory was produced.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::results::SCHEMA_VERSION;
use crate::summary::QUANTILE_RULE;

pub const STREAM_SCHEME: &str = "ChaCha8 stream per (cell, replication): key = mix(seed, fnv1a(cell id)), stream = replication; \
win matrices: key = mix(seed, truth fingerprint), stream = replicate index";

/// Settings that may change between resumed sweeps without invalidating
/// earlier rows.
pub const RESUMABLE_KEYS: [&str; 3] = ["replications", "output", "cacheDir"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub stream_scheme: String,
    pub quantile_rule: String,
    pub threads: usize,
    pub elapsed_seconds: f64,
    pub rows: usize,
    pub outputs: Vec<String>,
}

impl Metadata {
    pub fn new(command: &str, cfg: &RunConfig) -> Metadata {
        Metadata {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: cfg.to_pairs().into_iter().collect(),
            seed: cfg.seed,
            stream_scheme: STREAM_SCHEME.to_string(),
            quantile_rule: QUANTILE_RULE.to_string(),
            threads: rayon::current_num_threads(),
            elapsed_seconds: 0.0,
            rows: 0,
            outputs: Vec::new(),
        }
    }

    pub fn path(dir: &Path, command: &str) -> PathBuf {
        dir.join(format!("{command}.json"))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = Metadata::path(dir, &self.command);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Metadata> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Fails when `cfg` would produce rows incompatible with the ones this
    /// sidecar describes.
    pub fn check_resumable(&self, cfg: &RunConfig) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::validation(format!(
                "existing results use schema {} but this build writes {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        let now: BTreeMap<String, String> = cfg.to_pairs().into_iter().collect();
        let keys: std::collections::BTreeSet<&String> = self.config.keys().chain(now.keys()).collect();
        for key in keys {
            if RESUMABLE_KEYS.contains(&key.as_str()) {
                continue;
            }
            let (old, new) = (self.config.get(key), now.get(key));
            if old != new {
                return Err(HarnessError::validation(format!(
                    "cannot resume: `{key}` was {} and is now {}",
                    old.map_or("unset", String::as_str),
                    new.map_or("unset", String::as_str)
                )));
            }
        }
        Ok(())
    }
}
