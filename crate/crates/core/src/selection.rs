//! Least-squares fits, information-criterion scores and pairwise model
//! comparison, plus Monte Carlo estimation of pairwise win probabilities.
//!
//! Design columns are the raw term products centered on their sample mean.
//! Centering is equivalent to fitting a shared intercept that is not counted
//! in `p`; the response is already mean zero.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::data_gen::{gen_dataset, term_values, Dataset, GroundTruth, Predictors, TruthSpec};
use crate::error::{Error, FitError, Result};
use crate::linalg::householder_rss;
use crate::model_space::{ModelSpace, ModelSpec};
use crate::rng::{mix, stream_rng};

const RANK_TOL: f64 = 1e-9;
/// Fits whose rss falls below this fraction of `y'y` count as exact.
const EXACT_FIT_TOL: f64 = 1e-24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Statistic {
    Aic,
    /// Schwarz criterion, also accepted as `BIC`.
    Sc,
}

impl Statistic {
    pub fn penalty(self, p: usize, n: usize) -> f64 {
        match self {
            Statistic::Aic => 2.0 * p as f64,
            Statistic::Sc => p as f64 * libm::log(n as f64),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Aic => "AIC",
            Statistic::Sc => "SC",
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Statistic> {
        match s.trim().to_ascii_uppercase().as_str() {
            "AIC" => Ok(Statistic::Aic),
            "SC" | "BIC" => Ok(Statistic::Sc),
            _ => Err(Error::config("model comparison statistic must be AIC, SC or BIC")),
        }
    }
}

/// Rounds half away from zero to `ndec` decimals.
pub fn round_to(x: f64, ndec: u32) -> f64 {
    let f = libm::pow(10.0, f64::from(ndec));
    libm::round(x * f) / f
}

/// `penalty + n ln(rss / n)`, rounded to `ndec` decimals.
pub fn score(rss: f64, p: usize, n: usize, statistic: Statistic, ndec: u32) -> f64 {
    let nf = n as f64;
    round_to(statistic.penalty(p, n) + nf * libm::log(rss / nf), ndec)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitScore {
    pub rss: f64,
    pub p: usize,
    pub n: usize,
    pub statistic: Statistic,
    pub value: f64,
}

impl FitScore {
    pub fn new(rss: f64, p: usize, n: usize, statistic: Statistic, ndec: u32) -> FitScore {
        FitScore {
            rss,
            p,
            n,
            statistic,
            value: score(rss, p, n, statistic, ndec),
        }
    }
}

/// Centered, unit-norm columns for every term over the dataset's factors.
#[derive(Clone, Debug)]
pub struct Design {
    n: usize,
    columns: Vec<Vec<f64>>,
}

impl Design {
    pub fn new(x: &Predictors) -> Design {
        Design::covering(x, u32::MAX)
    }

    /// Builds only the columns of terms present in `models` (a union of
    /// [`ModelSpec::bits`]).
    pub fn covering(x: &Predictors, models: u32) -> Design {
        let n = x.n();
        let count = (1usize << x.k()) - 1;
        let mut columns = Vec::with_capacity(count);
        for mask in 1..=count {
            if models & (1 << mask) == 0 {
                columns.push(Vec::new());
                continue;
            }
            let mut col = vec![0.0; n];
            term_values(x, mask as u8, &mut col);
            let mean = col.iter().sum::<f64>() / n as f64;
            col.iter_mut().for_each(|v| *v -= mean);
            let norm = libm::sqrt(col.iter().map(|v| v * v).sum::<f64>());
            if norm > 0.0 {
                col.iter_mut().for_each(|v| *v /= norm);
            }
            columns.push(col);
        }
        Design { n, columns }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Residual sum of squares of `y` on `model`.
    pub fn rss(&self, model: ModelSpec, y: &[f64]) -> Result<f64, FitError> {
        let p = model.p();
        if self.n <= p {
            return Err(FitError::TooFewObservations);
        }
        let cols: Vec<&[f64]> = model
            .terms()
            .iter()
            .map(|t| self.columns[usize::from(t.mask()) - 1].as_slice())
            .collect();
        assert!(cols.iter().all(|c| c.len() == self.n), "design lacks a column of {model}");
        let rss = householder_rss(&cols, y, RANK_TOL).ok_or(FitError::RankDeficient)?;
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if rss <= EXACT_FIT_TOL * yy {
            return Err(FitError::ExactFit);
        }
        Ok(rss)
    }

    pub fn fit_score(
        &self,
        model: ModelSpec,
        y: &[f64],
        statistic: Statistic,
        ndec: u32,
    ) -> Result<FitScore, FitError> {
        let rss = self.rss(model, y)?;
        Ok(FitScore::new(rss, model.p(), self.n, statistic, ndec))
    }
}

/// Least-squares fit of `y` on the terms of `model`; returns `(rss, p)`.
pub fn fit_ols(y: &[f64], model: ModelSpec, x: &Predictors) -> Result<(f64, usize), FitError> {
    if model.max_factor() > x.k() {
        return Err(FitError::RankDeficient);
    }
    let rss = Design::new(x).rss(model, y)?;
    Ok((rss, model.p()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    ProposedWins,
    IncumbentStays,
}

/// The proposed model wins only on a strictly smaller rounded score.
pub fn compare_scores(proposed: f64, incumbent: f64) -> Outcome {
    if proposed < incumbent {
        Outcome::ProposedWins
    } else {
        Outcome::IncumbentStays
    }
}

pub fn compare_in(
    design: &Design,
    y: &[f64],
    proposed: ModelSpec,
    incumbent: ModelSpec,
    statistic: Statistic,
    ndec: u32,
) -> Result<Outcome, FitError> {
    if proposed == incumbent {
        return Ok(Outcome::IncumbentStays);
    }
    let sp = design.fit_score(proposed, y, statistic, ndec)?;
    let sg = design.fit_score(incumbent, y, statistic, ndec)?;
    Ok(compare_scores(sp.value, sg.value))
}

/// Tests `proposed` against `incumbent` on `dataset`.
pub fn compare(
    proposed: ModelSpec,
    incumbent: ModelSpec,
    dataset: &Dataset,
    statistic: Statistic,
    ndec: u32,
) -> Result<Outcome, FitError> {
    compare_in(&Design::new(&dataset.x), &dataset.y, proposed, incumbent, statistic, ndec)
}

/// Estimated `P(S(M_l) < S(M_i))`, row `l` (proposed), column `i`
/// (incumbent). The diagonal is 1 by convention.
#[derive(Clone, Debug, PartialEq)]
pub struct WinMatrix {
    l: usize,
    w: Vec<f64>,
    pub samples: usize,
}

impl WinMatrix {
    /// Builds from row-major probabilities; the diagonal is forced to 1.
    pub fn from_rows(l: usize, mut w: Vec<f64>, samples: usize) -> Result<WinMatrix> {
        if w.len() != l * l {
            return Err(Error::config("win matrix must be L x L"));
        }
        if w.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::config("win probabilities must lie in [0, 1]"));
        }
        for i in 0..l {
            w[i * l + i] = 1.0;
        }
        Ok(WinMatrix { l, w, samples })
    }

    /// Every off-diagonal entry set to `value`.
    pub fn constant(l: usize, value: f64) -> Result<WinMatrix> {
        WinMatrix::from_rows(l, vec![value; l * l], 0)
    }

    pub fn len(&self) -> usize {
        self.l
    }

    pub fn is_empty(&self) -> bool {
        self.l == 0
    }

    /// Probability that `proposed` beats `incumbent`.
    pub fn get(&self, proposed: usize, incumbent: usize) -> f64 {
        self.w[proposed * self.l + incumbent]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.w.chunks(self.l)
    }
}

/// Integer tallies behind a [`WinMatrix`]; merging is associative, so
/// replicates can be summed in any order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WinTally {
    l: usize,
    wins: Vec<u64>,
    valid: Vec<u64>,
    draws: u64,
}

impl WinTally {
    pub fn new(l: usize) -> WinTally {
        WinTally {
            l,
            wins: vec![0; l * l],
            valid: vec![0; l * l],
            draws: 0,
        }
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Adds one replicate given the rss of every model (`None` = failed fit).
    pub fn add(
        &mut self,
        space: &ModelSpace,
        rss: &[Option<f64>],
        n: usize,
        statistic: Statistic,
        ndec: u32,
    ) {
        let scores: Vec<Option<f64>> = rss
            .iter()
            .zip(space.models())
            .map(|(r, m)| r.map(|r| score(r, m.p(), n, statistic, ndec)))
            .collect();
        self.draws += 1;
        for (l, sl) in scores.iter().enumerate() {
            for (i, si) in scores.iter().enumerate() {
                if l == i {
                    continue;
                }
                if let (Some(a), Some(b)) = (sl, si) {
                    self.valid[l * self.l + i] += 1;
                    if compare_scores(*a, *b) == Outcome::ProposedWins {
                        self.wins[l * self.l + i] += 1;
                    }
                }
            }
        }
    }

    pub fn merge(&mut self, other: &WinTally) {
        assert_eq!(self.l, other.l);
        self.draws += other.draws;
        for (a, b) in self.wins.iter_mut().zip(&other.wins) {
            *a += b;
        }
        for (a, b) in self.valid.iter_mut().zip(&other.valid) {
            *a += b;
        }
    }

    /// Estimates use `(wins + 1/2) / (draws + 1)`: within `1/(2V)` of the
    /// raw frequency but never exactly 0 or 1, as the true probabilities
    /// are not under continuous noise. Fails if any pair lost more than 1%
    /// of its draws to fit failures.
    pub fn finish(&self) -> Result<WinMatrix> {
        let l = self.l;
        let mut w = vec![1.0; l * l];
        for idx in 0..l * l {
            if idx / l == idx % l {
                continue;
            }
            let valid = self.valid[idx];
            if (self.draws - valid) * 100 > self.draws || valid == 0 {
                return Err(Error::Estimation(alloc::format!(
                    "pair ({}, {}) failed to fit on {} of {} draws",
                    idx / l,
                    idx % l,
                    self.draws - valid,
                    self.draws
                )));
            }
            w[idx] = (self.wins[idx] as f64 + 0.5) / (valid as f64 + 1.0);
        }
        WinMatrix::from_rows(l, w, self.draws as usize)
    }
}

/// Rss of every model in `space` on one fresh dataset (fresh predictors,
/// coefficients and noise). A dataset that cannot be generated yields all
/// `None`.
pub fn replicate_rss<R: Rng + ?Sized>(
    truth: &TruthSpec,
    space: &ModelSpace,
    rng: &mut R,
) -> Vec<Option<f64>> {
    let generated = GroundTruth::draw(truth.clone(), rng).and_then(|t| gen_dataset(&t, rng));
    match generated {
        Ok(d) => {
            let design = Design::new(&d.x);
            space
                .models()
                .iter()
                .map(|&m| design.rss(m, &d.y).ok())
                .collect()
        }
        Err(_) => vec![None; space.len()],
    }
}

/// Random stream for replicate `v` of the win-matrix estimate for `truth`.
/// Independent of the statistic, so AIC and SC see the same datasets.
pub fn replicate_stream(truth: &TruthSpec, seed: u64, v: u64) -> crate::rng::SimRng {
    stream_rng(mix(seed, truth.fingerprint()), v)
}

pub fn check_win_inputs(truth: &TruthSpec, space: &ModelSpace, samples: usize) -> Result<()> {
    truth.validate()?;
    if truth.k != space.k() {
        return Err(Error::config("truth and model space disagree on k"));
    }
    if samples < 1000 {
        return Err(Error::config("at least 1000 Monte Carlo samples required"));
    }
    Ok(())
}

/// Tally of replicates `range` (see [`replicate_stream`]).
pub fn tally_range(
    truth: &TruthSpec,
    space: &ModelSpace,
    statistics: &[Statistic],
    ndec: u32,
    seed: u64,
    range: core::ops::Range<u64>,
) -> Vec<WinTally> {
    let mut tallies: Vec<WinTally> = statistics.iter().map(|_| WinTally::new(space.len())).collect();
    for v in range {
        let mut rng = replicate_stream(truth, seed, v);
        let rss = replicate_rss(truth, space, &mut rng);
        for (tally, &stat) in tallies.iter_mut().zip(statistics) {
            tally.add(space, &rss, truth.n, stat, ndec);
        }
    }
    tallies
}

/// Monte Carlo estimate of every pairwise win probability under `truth`.
pub fn estimate_win_matrix(
    truth: &TruthSpec,
    space: &ModelSpace,
    statistic: Statistic,
    samples: usize,
    ndec: u32,
    seed: u64,
) -> Result<WinMatrix> {
    check_win_inputs(truth, space, samples)?;
    let tally = tally_range(truth, space, &[statistic], ndec, seed, 0..samples as u64);
    tally[0].finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_gen::SignalScale;
    use crate::data_gen::gen_predictors;
    use crate::model_space::enumerate_models;
    use approx::assert_relative_eq;

    #[test]
    fn score_differences() {
        let ln100 = libm::log(100.0);
        let d = score(40.0, 3, 100, Statistic::Sc, 12) - score(40.0, 2, 100, Statistic::Sc, 12);
        assert_relative_eq!(d, ln100, epsilon = 1e-9);
        assert_relative_eq!(d, 4.6052, epsilon = 1e-4);
        let d = score(40.0, 3, 100, Statistic::Aic, 4) - score(40.0, 2, 100, Statistic::Aic, 4);
        assert_relative_eq!(d, 2.0, epsilon = 1e-9);
        assert_eq!(score(40.0, 3, 100, Statistic::Aic, 4), score(40.0, 3, 100, Statistic::Aic, 4));
    }

    #[test]
    fn score_formula() {
        let v = score(50.0, 2, 100, Statistic::Aic, 4);
        assert_eq!(v, round_to(4.0 + 100.0 * libm::log(0.5), 4));
        assert_eq!(round_to(1.23456, 4), 1.2346);
        assert_eq!(round_to(-1.23455, 2), -1.23);
    }

    #[test]
    fn rounding_decides_ties() {
        // unrounded proposed score is smaller but both round to the same value
        let a = round_to(10.00001, 4);
        let b = round_to(10.00004, 4);
        assert!(10.00001 < 10.00004);
        assert_eq!(compare_scores(a, b), Outcome::IncumbentStays);
    }

    #[test]
    fn statistic_aliases() {
        assert_eq!("BIC".parse::<Statistic>().unwrap(), Statistic::Sc);
        assert_eq!("sc".parse::<Statistic>().unwrap(), Statistic::Sc);
        assert_eq!("AIC".parse::<Statistic>().unwrap(), Statistic::Aic);
        assert!("DIC".parse::<Statistic>().is_err());
    }

    #[test]
    fn exact_fit_rejected() {
        let mut rng = stream_rng(1, 1);
        let x = gen_predictors(50, 2, 0.2, &mut rng).unwrap();
        let mut y: Vec<f64> = x.column(1).to_vec();
        crate::data_gen::standardize(&mut y).unwrap();
        assert_eq!(
            fit_ols(&y, "x1".parse().unwrap(), &x),
            Err(FitError::ExactFit)
        );
        // tiny perturbation: near-perfect but valid fit
        for (i, v) in y.iter_mut().enumerate() {
            *v += if i % 2 == 0 { 1e-6 } else { -1e-6 };
        }
        let (rss, p) = fit_ols(&y, "x1".parse().unwrap(), &x).unwrap();
        assert_eq!(p, 1);
        assert!(rss < 1e-9 && rss > 0.0);
    }

    #[test]
    fn identical_models_keep_incumbent() {
        let mut rng = stream_rng(3, 3);
        let spec = TruthSpec {
            true_model: "x1 + x2".parse().unwrap(),
            k: 2,
            n: 100,
            sigma_level: 0.2,
            correlation: 0.2,
            signal: SignalScale::Normalized,
        };
        let t = GroundTruth::draw(spec, &mut rng).unwrap();
        let d = gen_dataset(&t, &mut rng).unwrap();
        let m = "x1 + x2".parse().unwrap();
        assert_eq!(compare(m, m, &d, Statistic::Sc, 4).unwrap(), Outcome::IncumbentStays);
    }

    #[test]
    fn win_matrix_basic_properties() {
        let space = enumerate_models(2).unwrap();
        let truth = TruthSpec {
            true_model: "x1 + x2".parse().unwrap(),
            k: 2,
            n: 100,
            sigma_level: 0.2,
            correlation: 0.2,
            signal: SignalScale::Normalized,
        };
        let w = estimate_win_matrix(&truth, &space, Statistic::Sc, 1000, 4, 5).unwrap();
        for l in 0..3 {
            assert_eq!(w.get(l, l), 1.0);
            for i in 0..3 {
                if l != i {
                    assert!(w.get(l, i) + w.get(i, l) <= 1.0 + 1e-15);
                }
            }
        }
        assert!(estimate_win_matrix(&truth, &space, Statistic::Sc, 999, 4, 5).is_err());
    }

    #[test]
    fn tally_merge_is_order_independent() {
        let space = enumerate_models(2).unwrap();
        let truth = TruthSpec {
            true_model: "x1".parse().unwrap(),
            k: 2,
            n: 30,
            sigma_level: 0.5,
            correlation: 0.2,
            signal: SignalScale::Normalized,
        };
        let all = tally_range(&truth, &space, &[Statistic::Aic], 4, 1, 0..60).remove(0);
        let mut a = tally_range(&truth, &space, &[Statistic::Aic], 4, 1, 30..60).remove(0);
        let b = tally_range(&truth, &space, &[Statistic::Aic], 4, 1, 0..30).remove(0);
        a.merge(&b);
        assert_eq!(a, all);
    }
}
