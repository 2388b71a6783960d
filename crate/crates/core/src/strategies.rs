//! Scientist types, populations and proposal distributions.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model_space::ModelSpace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    /// Replicator: repeats the preceding experiment on fresh data.
    Rey,
    /// Theory tester: one main effect away from the global model.
    Tess,
    /// Maverick: uniform over all models.
    Mave,
    /// Boundary tester: adds one interaction to the global model.
    Bo,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Rey,
        StrategyKind::Tess,
        StrategyKind::Mave,
        StrategyKind::Bo,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Rey => "Rey",
            StrategyKind::Tess => "Tess",
            StrategyKind::Mave => "Mave",
            StrategyKind::Bo => "Bo",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<StrategyKind> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::config("unknown scientist type"))
    }
}

/// Whether Tess and Bo may propose models outside their neighborhood.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Hard,
    Soft,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Hard => "Hard",
            Mode::Soft => "Soft",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hard" => Ok(Mode::Hard),
            "soft" => Ok(Mode::Soft),
            _ => Err(Error::config("mode must be Hard or Soft")),
        }
    }
}

/// Where Hard mode puts the `1/(m+1)` left over after the neighborhood.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum HardResidual {
    /// On the global model itself (a no-op experiment).
    #[default]
    SelfProposal,
    /// Spread over the neighborhood, giving each neighbor `1/m`.
    Renormalize,
}

impl fmt::Display for HardResidual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HardResidual::SelfProposal => "self",
            HardResidual::Renormalize => "renormalize",
        })
    }
}

impl FromStr for HardResidual {
    type Err = Error;

    fn from_str(s: &str) -> Result<HardResidual> {
        match s.trim().to_ascii_lowercase().as_str() {
            "self" => Ok(HardResidual::SelfProposal),
            "renormalize" => Ok(HardResidual::Renormalize),
            _ => Err(Error::config("hard residual must be self or renormalize")),
        }
    }
}

/// Named scientist populations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Preset {
    ReyDominant,
    TessDominant,
    MaveDominant,
    BoDominant,
    AllEqual,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::ReyDominant,
        Preset::TessDominant,
        Preset::MaveDominant,
        Preset::BoDominant,
        Preset::AllEqual,
    ];

    /// The four populations without a replicator.
    pub const NO_REPLICATOR: [Preset; 4] = [
        Preset::TessDominant,
        Preset::MaveDominant,
        Preset::BoDominant,
        Preset::AllEqual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::ReyDominant => "rey-dominant",
            Preset::TessDominant => "tess-dominant",
            Preset::MaveDominant => "mave-dominant",
            Preset::BoDominant => "bo-dominant",
            Preset::AllEqual => "all-equal",
        }
    }

    fn dominant(self) -> Option<StrategyKind> {
        match self {
            Preset::ReyDominant => Some(StrategyKind::Rey),
            Preset::TessDominant => Some(StrategyKind::Tess),
            Preset::MaveDominant => Some(StrategyKind::Mave),
            Preset::BoDominant => Some(StrategyKind::Bo),
            Preset::AllEqual => None,
        }
    }

    /// Weights in [`StrategyKind::ALL`] order. Dominant types take 0.99 and
    /// the others share 0.01; the equal preset splits evenly.
    pub fn weights(self, with_replicator: bool) -> Result<[f64; 4]> {
        let members: &[StrategyKind] = if with_replicator {
            &StrategyKind::ALL
        } else {
            &StrategyKind::ALL[1..]
        };
        let mut w = [0.0; 4];
        match self.dominant() {
            Some(StrategyKind::Rey) if !with_replicator => {
                return Err(Error::config("rey-dominant requires a replicator"));
            }
            Some(dom) => {
                let minor = 0.01 / (members.len() - 1) as f64;
                for &m in members {
                    w[m.index()] = if m == dom { 0.99 } else { minor };
                }
            }
            None => {
                for &m in members {
                    w[m.index()] = 1.0 / members.len() as f64;
                }
            }
        }
        Ok(w)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Preset> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::config("unknown population preset"))
    }
}

/// Probability of each scientist type being drawn, plus the strategy mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    weights: [f64; 4],
    pub mode: Mode,
}

impl Population {
    /// Weights in [`StrategyKind::ALL`] order; must be nonnegative and sum to 1.
    pub fn new(weights: [f64; 4], mode: Mode) -> Result<Population> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::config("population weights must be nonnegative"));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::config("population weights must sum to 1"));
        }
        Ok(Population { weights, mode })
    }

    pub fn preset(preset: Preset, with_replicator: bool, mode: Mode) -> Result<Population> {
        Population::new(preset.weights(with_replicator)?, mode)
    }

    /// Integer head counts `[rey, tess, mave, bo]`, normalized.
    pub fn from_counts(counts: [u64; 4], mode: Mode) -> Result<Population> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::config("population needs at least one scientist"));
        }
        Population::new(counts.map(|c| c as f64 / total as f64), mode)
    }

    pub fn weight(&self, kind: StrategyKind) -> f64 {
        self.weights[kind.index()]
    }

    pub fn weights(&self) -> [f64; 4] {
        self.weights
    }

    pub fn has_replicator(&self) -> bool {
        self.weight(StrategyKind::Rey) > 0.0
    }

    /// Moves the replicator's weight onto the other types proportionally.
    pub fn without_replicator(&self) -> Result<Population> {
        let rest = 1.0 - self.weight(StrategyKind::Rey);
        if rest <= 0.0 {
            return Err(Error::config("population consists only of replicators"));
        }
        let mut w = self.weights;
        w[0] = 0.0;
        let w = w.map(|v| v / rest);
        // restore an exact unit sum after the division
        let s: f64 = w.iter().sum();
        Population::new(w.map(|v| v / s), self.mode)
    }
}

/// Categorical draw of a scientist type.
pub fn sample_strategy<R: Rng + ?Sized>(population: &Population, rng: &mut R) -> StrategyKind {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = StrategyKind::Rey;
    for kind in StrategyKind::ALL {
        let w = population.weight(kind);
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = kind;
        if u < acc {
            return kind;
        }
    }
    last
}

/// Probabilities over model indices.
#[derive(Clone, Debug, PartialEq)]
pub struct ProposalDistribution {
    pub probs: Vec<f64>,
}

impl ProposalDistribution {
    pub fn degenerate(l: usize, index: usize) -> ProposalDistribution {
        let mut probs = vec![0.0; l];
        probs[index] = 1.0;
        ProposalDistribution { probs }
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(i, _)| i)
    }
}

/// Proposal distribution of `strategy` given global model index `mg`.
pub fn proposal_distribution(
    strategy: StrategyKind,
    mg: usize,
    space: &ModelSpace,
    mode: Mode,
    residual: HardResidual,
) -> Result<ProposalDistribution> {
    let l = space.len();
    if mg >= l {
        return Err(Error::config("global model index out of range"));
    }
    let neighborhood = match strategy {
        StrategyKind::Rey => {
            return Err(Error::config(
                "the replicator repeats the preceding experiment and has no proposal distribution",
            ))
        }
        StrategyKind::Mave => {
            return Ok(ProposalDistribution {
                probs: vec![1.0 / l as f64; l],
            })
        }
        StrategyKind::Tess => space.tess_neighbor_indices(mg),
        StrategyKind::Bo => space.bo_move_indices(mg),
    };
    let m = neighborhood.len();
    let share = 1.0 / (m + 1) as f64;
    let mut probs = match mode {
        Mode::Soft => {
            // m == L is impossible: mg itself is never a neighbor
            vec![1.0 / ((l - m) as f64 * (m + 1) as f64); l]
        }
        Mode::Hard => vec![0.0; l],
    };
    if mode == Mode::Hard && (m == 0 || residual == HardResidual::SelfProposal) {
        probs[mg] = share;
    }
    let neighbor_mass = if mode == Mode::Hard && residual == HardResidual::Renormalize && m > 0 {
        1.0 / m as f64
    } else {
        share
    };
    for j in neighborhood {
        probs[j] = neighbor_mass;
    }
    Ok(ProposalDistribution { probs })
}

/// Categorical draw of a model index.
pub fn sample_proposal<R: Rng + ?Sized>(dist: &ProposalDistribution, rng: &mut R) -> usize {
    WeightedIndex::new(&dist.probs)
        .expect("proposal distribution has positive mass")
        .sample(rng)
}

/// Precomputed distributions and samplers for Tess, Mave and Bo at every
/// global model. Read-only after construction.
#[derive(Clone, Debug)]
pub struct ProposalTable {
    l: usize,
    mode: Mode,
    dists: Vec<ProposalDistribution>,
    samplers: Vec<WeightedIndex<f64>>,
}

impl ProposalTable {
    const KINDS: [StrategyKind; 3] = [StrategyKind::Tess, StrategyKind::Mave, StrategyKind::Bo];

    pub fn new(space: &ModelSpace, mode: Mode, residual: HardResidual) -> Result<ProposalTable> {
        let l = space.len();
        let mut dists = Vec::with_capacity(3 * l);
        for kind in Self::KINDS {
            for mg in 0..l {
                dists.push(proposal_distribution(kind, mg, space, mode, residual)?);
            }
        }
        let samplers = dists
            .iter()
            .map(|d| WeightedIndex::new(&d.probs).expect("positive mass"))
            .collect();
        Ok(ProposalTable {
            l,
            mode,
            dists,
            samplers,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.l
    }

    pub fn is_empty(&self) -> bool {
        self.l == 0
    }

    fn slot(&self, kind: StrategyKind, mg: usize) -> usize {
        let k = match kind {
            StrategyKind::Tess => 0,
            StrategyKind::Mave => 1,
            StrategyKind::Bo => 2,
            StrategyKind::Rey => panic!("replicator has no proposal distribution"),
        };
        k * self.l + mg
    }

    pub fn get(&self, kind: StrategyKind, mg: usize) -> &ProposalDistribution {
        &self.dists[self.slot(kind, mg)]
    }

    /// `P(M_proposed | kind, M_mg)`.
    pub fn prob(&self, kind: StrategyKind, mg: usize, proposed: usize) -> f64 {
        self.get(kind, mg).probs[proposed]
    }

    pub fn sample<R: Rng + ?Sized>(&self, kind: StrategyKind, mg: usize, rng: &mut R) -> usize {
        self.samplers[self.slot(kind, mg)].sample(rng)
    }
}
