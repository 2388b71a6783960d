//! Flat `key = value` run configuration.
//!
//! Keys follow the factorial-design parameter names (`replications`,
//! `timesteps`, `k`, `sigma`, `sampleSize`, `trueModel`, `correlation`,
//! `nRey`, `nTess`, `nMave`, `nBo`, `modelCompare`, `ndec`) plus harness
//! settings. List values are comma separated. `#` starts a comment.

use std::fmt;
use std::path::{Path, PathBuf};

use discovery_core::abm::BetaPolicy;
use discovery_core::data_gen::SignalScale;
use discovery_core::selection::Statistic;
use discovery_core::strategies::{HardResidual, Mode, Population, Preset};
use discovery_core::{ModelSpace, ModelSpec};

use crate::error::{HarnessError, Result};

pub const DEFAULT_TRUE_MODELS: [&str; 3] = [
    "x1 + x2",
    "x1 + x2 + x3 + x1x2",
    "x1 + x2 + x3 + x1x2 + x1x3 + x2x3",
];

/// A named scientist population.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationSpec {
    pub label: String,
    /// Rey, Tess, Mave, Bo.
    pub weights: [f64; 4],
}

impl PopulationSpec {
    pub fn preset(preset: Preset, with_replicator: bool) -> Result<PopulationSpec> {
        Ok(PopulationSpec {
            label: preset.name().to_string(),
            weights: preset.weights(with_replicator)?,
        })
    }

    /// Integer head counts, normalized; labelled `rey:tess:mave:bo`.
    pub fn counts(counts: [u64; 4]) -> Result<PopulationSpec> {
        let pop = Population::from_counts(counts, Mode::Hard)?;
        Ok(PopulationSpec {
            label: format!("{}:{}:{}:{}", counts[0], counts[1], counts[2], counts[3]),
            weights: pop.weights(),
        })
    }

    pub fn population(&self, mode: Mode) -> Result<Population> {
        Ok(Population::new(self.weights, mode)?)
    }

    fn parse(s: &str, with_replicator: bool) -> Result<PopulationSpec> {
        if s.contains(':') {
            let parts: Vec<&str> = s.split(':').map(str::trim).collect();
            if parts.len() != 4 {
                return Err(HarnessError::validation(format!(
                    "population counts need four fields rey:tess:mave:bo, got `{s}`"
                )));
            }
            let mut counts = [0u64; 4];
            for (c, p) in counts.iter_mut().zip(&parts) {
                *c = p
                    .parse()
                    .map_err(|_| HarnessError::validation(format!("bad population count `{p}`")))?;
            }
            return PopulationSpec::counts(counts);
        }
        let preset: Preset = s.parse()?;
        PopulationSpec::preset(preset, with_replicator)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub replications: usize,
    pub timesteps: usize,
    pub k: usize,
    pub sigma: Vec<f64>,
    pub sample_size: usize,
    pub true_models: Vec<ModelSpec>,
    pub correlation: f64,
    /// `None` selects the defaults of the command being run.
    pub populations: Option<Vec<PopulationSpec>>,
    pub statistics: Vec<Statistic>,
    pub ndec: u32,
    pub mode: Mode,
    pub burn_in: usize,
    pub seed: u64,
    pub output: PathBuf,
    pub hard_residual: HardResidual,
    pub beta_policy: BetaPolicy,
    pub signal: SignalScale,
    /// Presets include the replicator.
    pub replicator: bool,
    /// Monte Carlo draws per win matrix.
    pub win_samples: usize,
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            replications: 100,
            timesteps: 11000,
            k: 3,
            sigma: vec![0.2, 0.5, 0.8],
            sample_size: 100,
            true_models: DEFAULT_TRUE_MODELS.iter().map(|s| s.parse().unwrap()).collect(),
            correlation: 0.2,
            populations: None,
            statistics: vec![Statistic::Aic, Statistic::Sc],
            ndec: 4,
            mode: Mode::Hard,
            burn_in: 1000,
            seed: 20191016,
            output: PathBuf::from("results"),
            hard_residual: HardResidual::SelfProposal,
            beta_policy: BetaPolicy::FixedPerRun,
            signal: SignalScale::Normalized,
            replicator: true,
            win_samples: 10000,
            cache_dir: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| HarnessError::validation(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_list<T, F>(v: &str, f: F) -> Result<Vec<T>>
where
    F: Fn(&str) -> Result<T>,
{
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(f)
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(HarnessError::validation(format!("empty list `{v}`")));
    }
    Ok(items)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(HarnessError::validation(format!("`{key}`: expected true or false"))),
    }
}

const COUNT_KEYS: [&str; 4] = ["nRey", "nTess", "nMave", "nBo"];

impl RunConfig {
    /// Reads a config file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::validation(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        cfg.apply_pairs(&parse_pairs(&text)?)?;
        Ok(cfg)
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_pairs(&mut self, pairs: &[(String, String)]) -> Result<()> {
        let mut counts: [Option<u64>; 4] = [None; 4];
        // presets read the replicator switch, so it goes first
        let (first, rest): (Vec<_>, Vec<_>) = pairs.iter().partition(|(k, _)| k == "replicator");
        for (key, value) in first.into_iter().chain(rest) {
            if let Some(i) = COUNT_KEYS.iter().position(|k| k == key) {
                counts[i] = Some(parse_num(key, value)?);
                continue;
            }
            self.set(key, value)?;
        }
        if counts.iter().any(Option::is_some) {
            let c: Vec<u64> = counts
                .iter()
                .map(|c| c.ok_or_else(|| HarnessError::validation("set all of nRey, nTess, nMave, nBo")))
                .collect::<Result<_>>()?;
            self.populations = Some(vec![PopulationSpec::counts([c[0], c[1], c[2], c[3]])?]);
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "replications" => self.replications = parse_num(key, value)?,
            "timesteps" => self.timesteps = parse_num(key, value)?,
            "k" => self.k = parse_num(key, value)?,
            "sigma" => self.sigma = parse_list(value, |s| parse_num(key, s))?,
            "sampleSize" => self.sample_size = parse_num(key, value)?,
            "trueModel" => self.true_models = parse_list(value, |s| Ok(s.parse::<ModelSpec>()?))?,
            "correlation" => self.correlation = parse_num(key, value)?,
            "population" => {
                let with_rey = self.replicator;
                self.populations = Some(parse_list(value, |s| PopulationSpec::parse(s, with_rey))?);
            }
            "modelCompare" => self.statistics = parse_list(value, |s| Ok(s.parse::<Statistic>()?))?,
            "ndec" => self.ndec = parse_num(key, value)?,
            "mode" => self.mode = value.parse()?,
            "burnIn" => self.burn_in = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "output" => self.output = PathBuf::from(value.trim()),
            "hardResidual" => self.hard_residual = value.parse()?,
            "betaPolicy" => self.beta_policy = value.parse()?,
            "signalScale" => self.signal = value.parse()?,
            "replicator" => self.replicator = parse_bool(key, value)?,
            "V" => self.win_samples = parse_num(key, value)?,
            "cacheDir" => self.cache_dir = Some(PathBuf::from(value.trim())),
            _ => return Err(HarnessError::validation(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn space(&self) -> Result<ModelSpace> {
        Ok(ModelSpace::new(self.k)?)
    }

    /// Populations for the agent-based sweep: configured or all presets.
    pub fn abm_populations(&self) -> Result<Vec<PopulationSpec>> {
        match &self.populations {
            Some(p) => Ok(p.clone()),
            None => Preset::ALL
                .iter()
                .map(|&p| PopulationSpec::preset(p, self.replicator))
                .collect(),
        }
    }

    /// Populations for chain analysis: configured or the presets without
    /// replicator.
    pub fn chain_populations(&self) -> Result<Vec<PopulationSpec>> {
        match &self.populations {
            Some(p) => Ok(p.clone()),
            None => Preset::NO_REPLICATOR
                .iter()
                .map(|&p| PopulationSpec::preset(p, false))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let space = self.space()?;
        for m in &self.true_models {
            if space.index_of(*m).is_none() {
                return Err(HarnessError::validation(format!("true model `{m}` not in the k={} space", self.k)));
            }
        }
        if self.replications == 0 {
            return Err(HarnessError::validation("replications must be positive"));
        }
        if self.timesteps == 0 || self.burn_in >= self.timesteps {
            return Err(HarnessError::validation("need 0 <= burnIn < timesteps"));
        }
        for &s in &self.sigma {
            if !(s > 0.0 && s < 1.0) {
                return Err(HarnessError::validation(format!("sigma {s} outside (0, 1)")));
            }
        }
        if !(0.0..0.9).contains(&self.correlation) {
            return Err(HarnessError::validation("correlation must lie in [0, 0.9)"));
        }
        if self.sample_size <= (1 << self.k) {
            return Err(HarnessError::validation("sampleSize must exceed 2^k"));
        }
        if self.win_samples < 1000 {
            return Err(HarnessError::validation("V must be at least 1000"));
        }
        Ok(())
    }

    /// Effective settings as `key = value` pairs, in file syntax.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let join = |v: Vec<String>| v.join(", ");
        let mut out = vec![
            ("replications", self.replications.to_string()),
            ("timesteps", self.timesteps.to_string()),
            ("k", self.k.to_string()),
            ("sigma", join(self.sigma.iter().map(f64::to_string).collect())),
            ("sampleSize", self.sample_size.to_string()),
            ("trueModel", join(self.true_models.iter().map(ToString::to_string).collect())),
            ("correlation", self.correlation.to_string()),
            ("modelCompare", join(self.statistics.iter().map(ToString::to_string).collect())),
            ("ndec", self.ndec.to_string()),
            ("mode", self.mode.to_string()),
            ("burnIn", self.burn_in.to_string()),
            ("seed", self.seed.to_string()),
            ("output", self.output.display().to_string()),
            ("hardResidual", self.hard_residual.to_string()),
            ("betaPolicy", beta_name(self.beta_policy).to_string()),
            ("signalScale", signal_name(self.signal).to_string()),
            ("replicator", self.replicator.to_string()),
            ("V", self.win_samples.to_string()),
        ];
        if let Some(p) = &self.populations {
            out.push(("population", join(p.iter().map(|p| p.label.clone()).collect())));
        }
        if let Some(c) = &self.cache_dir {
            out.push(("cacheDir", c.display().to_string()));
        }
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.to_pairs() {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

pub fn beta_name(b: BetaPolicy) -> &'static str {
    match b {
        BetaPolicy::FixedPerRun => "fixed",
        BetaPolicy::FreshPerExperiment => "fresh",
    }
}

pub fn signal_name(s: SignalScale) -> &'static str {
    match s {
        SignalScale::Normalized => "normalized",
        SignalScale::Raw => "raw",
    }
}

/// Splits config text into `(key, value)` pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = parse_assignment(line)
            .ok_or_else(|| HarnessError::validation(format!("line {}: expected key = value", no + 1)))?;
        out.push((k, v));
    }
    Ok(out)
}

/// Parses one `key=value` assignment.
pub fn parse_assignment(s: &str) -> Option<(String, String)> {
    let (k, v) = s.split_once('=')?;
    let k = k.trim();
    (!k.is_empty()).then(|| (k.to_string(), v.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_design() {
        let c = RunConfig::default();
        assert_eq!(c.replications, 100);
        assert_eq!(c.timesteps, 11000);
        assert_eq!(c.k, 3);
        assert_eq!(c.sigma, vec![0.2, 0.5, 0.8]);
        assert_eq!(c.sample_size, 100);
        assert_eq!(c.correlation, 0.2);
        assert_eq!(c.ndec, 4);
        assert_eq!(c.burn_in, 1000);
        assert_eq!(c.true_models.len(), 3);
        assert_eq!(c.abm_populations().unwrap().len(), 5);
        assert_eq!(c.chain_populations().unwrap().len(), 4);
        c.validate().unwrap();
    }

    #[test]
    fn parses_file_syntax() {
        let text = "# sweep\nreplications = 2\ntimesteps=500 # short\nsigma = 0.2, 0.8\n\
                    trueModel = x1 + x2, x1+x2+x3\nmodelCompare = BIC\nmode = soft\n\
                    population = mave-dominant, 1:1:300:1\nburnIn = 100\n";
        let mut c = RunConfig::default();
        c.apply_pairs(&parse_pairs(text).unwrap()).unwrap();
        assert_eq!(c.replications, 2);
        assert_eq!(c.timesteps, 500);
        assert_eq!(c.sigma, vec![0.2, 0.8]);
        assert_eq!(c.true_models[1].to_string(), "x1 + x2 + x3");
        assert_eq!(c.statistics, vec![Statistic::Sc]);
        assert_eq!(c.mode, Mode::Soft);
        let pops = c.populations.clone().unwrap();
        assert_eq!(pops[0].label, "mave-dominant");
        assert_eq!(pops[1].label, "1:1:300:1");
        assert!((pops[1].weights[2] - 300.0 / 303.0).abs() < 1e-15);
        c.validate().unwrap();
    }

    #[test]
    fn head_counts() {
        let mut c = RunConfig::default();
        let pairs: Vec<(String, String)> = [("nRey", "300"), ("nTess", "1"), ("nMave", "1"), ("nBo", "1")]
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        c.apply_pairs(&pairs).unwrap();
        let p = &c.populations.as_ref().unwrap()[0];
        assert_eq!(p.label, "300:1:1:1");
        assert!((p.weights[0] - 300.0 / 303.0).abs() < 1e-15);

        let partial = vec![("nRey".to_string(), "3".to_string())];
        assert!(RunConfig::default().apply_pairs(&partial).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        let mut c = RunConfig::default();
        assert!(c.set("bogus", "1").is_err());
        assert!(c.set("sigma", "a").is_err());
        assert!(c.set("trueModel", "x2").is_err());
        assert!(parse_pairs("no equals sign").is_err());
        c.set("k", "2").unwrap();
        assert!(c.validate().is_err(), "default true models need k = 3");
    }

    #[test]
    fn round_trips_through_text() {
        let mut c = RunConfig::default();
        c.set("population", "all-equal, 1:2:3:4").unwrap();
        c.set("cacheDir", "/tmp/x").unwrap();
        let mut d = RunConfig::default();
        d.apply_pairs(&parse_pairs(&c.to_string()).unwrap()).unwrap();
        assert_eq!(c, d);
    }
}
