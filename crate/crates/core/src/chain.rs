//! Exact analysis of the process without replication: transition matrix,
//! stationary distribution, mean first passage times and stickiness.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::lu_solve;
use crate::selection::WinMatrix;
use crate::strategies::{Population, ProposalTable, StrategyKind};

/// Tolerance for the diagonal cross-check and row sums.
pub const ROW_TOL: f64 = 1e-9;

/// Row-stochastic matrix; `get(i, l)` is the probability of moving from
/// model `i` to model `l` in one step.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    l: usize,
    p: Vec<f64>,
}

impl TransitionMatrix {
    pub fn from_rows(l: usize, p: Vec<f64>) -> Result<TransitionMatrix> {
        if p.len() != l * l || l == 0 {
            return Err(Error::Analysis("transition matrix must be L x L".into()));
        }
        for row in p.chunks(l) {
            if row.iter().any(|v| !(-ROW_TOL..=1.0 + ROW_TOL).contains(v)) {
                return Err(Error::Analysis("transition probabilities must lie in [0, 1]".into()));
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > ROW_TOL {
                return Err(Error::Analysis("transition rows must sum to 1".into()));
            }
        }
        Ok(TransitionMatrix { l, p })
    }

    pub fn len(&self) -> usize {
        self.l
    }

    pub fn is_empty(&self) -> bool {
        self.l == 0
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.p[from * self.l + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.p[from * self.l..(from + 1) * self.l]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.l).map(|i| self.get(i, i)).collect()
    }

    pub fn all_positive(&self) -> bool {
        self.p.iter().all(|&v| v > 0.0)
    }
}

fn check_inputs(win: &WinMatrix, population: &Population, table: &ProposalTable) -> Result<()> {
    if population.has_replicator() {
        return Err(Error::config(
            "exact chain analysis needs a population without replicators; \
             replication makes the process higher order, use the agent-based engine",
        ));
    }
    if win.len() != table.len() {
        return Err(Error::config("win matrix and model space sizes differ"));
    }
    Ok(())
}

const PROPOSERS: [StrategyKind; 3] = [StrategyKind::Tess, StrategyKind::Mave, StrategyKind::Bo];

/// Probability that the global model stays at `i` for one step: the
/// incumbent survives every proposal it does not lose (ties included).
pub fn stickiness(
    win: &WinMatrix,
    population: &Population,
    table: &ProposalTable,
    i: usize,
) -> Result<f64> {
    check_inputs(win, population, table)?;
    let mut stay = 0.0;
    for kind in PROPOSERS {
        let pa = population.weight(kind);
        if pa == 0.0 {
            continue;
        }
        let q = &table.get(kind, i).probs;
        let mut s = q[i];
        for (l, &ql) in q.iter().enumerate() {
            if l != i {
                s += (1.0 - win.get(l, i)) * ql;
            }
        }
        stay += pa * s;
    }
    Ok(stay)
}

/// One-step transition matrix of the global model.
///
/// Off-diagonal entries sum win probability times proposal probability over
/// scientist types; the diagonal is the complement and is cross-checked
/// against [`stickiness`].
pub fn build_transition_matrix(
    win: &WinMatrix,
    population: &Population,
    table: &ProposalTable,
) -> Result<TransitionMatrix> {
    check_inputs(win, population, table)?;
    let l = win.len();
    let mut p = vec![0.0; l * l];
    for i in 0..l {
        let mut off = 0.0;
        for to in 0..l {
            if to == i {
                continue;
            }
            let v: f64 = PROPOSERS
                .iter()
                .map(|&k| win.get(to, i) * table.prob(k, i, to) * population.weight(k))
                .sum();
            p[i * l + to] = v;
            off += v;
        }
        let diag = 1.0 - off;
        let sticky = stickiness(win, population, table, i)?;
        if (diag - sticky).abs() > ROW_TOL {
            return Err(Error::Analysis(alloc::format!(
                "diagonal {diag} disagrees with stickiness {sticky} for model {i}"
            )));
        }
        p[i * l + i] = diag;
    }
    TransitionMatrix::from_rows(l, p)
}

/// Solves `pi P = pi`, `sum(pi) = 1` directly.
pub fn stationary_distribution(p: &TransitionMatrix, tol: f64) -> Result<Vec<f64>> {
    let l = p.len();
    // rows of (P' - I), last equation replaced by the normalization
    let mut a = vec![0.0; l * l];
    for r in 0..l {
        for c in 0..l {
            a[r * l + c] = p.get(c, r) - if r == c { 1.0 } else { 0.0 };
        }
    }
    for c in 0..l {
        a[(l - 1) * l + c] = 1.0;
    }
    let mut pi = vec![0.0; l];
    pi[l - 1] = 1.0;
    lu_solve(&mut a, &mut pi, l)
        .ok_or_else(|| Error::Analysis("stationary system is singular".into()))?;
    for v in pi.iter_mut() {
        if *v < 0.0 {
            if *v < -tol {
                return Err(Error::Analysis("stationary solution has negative mass".into()));
            }
            *v = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    let residual = stationary_residual(p, &pi);
    if !(residual < tol) {
        return Err(Error::Analysis(alloc::format!(
            "stationary residual {residual:e} exceeds tolerance"
        )));
    }
    Ok(pi)
}

/// `max_j |(pi P)_j - pi_j|`.
pub fn stationary_residual(p: &TransitionMatrix, pi: &[f64]) -> f64 {
    let l = p.len();
    (0..l)
        .map(|j| {
            let v: f64 = (0..l).map(|i| pi[i] * p.get(i, j)).sum();
            (v - pi[j]).abs()
        })
        .fold(0.0, f64::max)
}

/// Expected steps to first reach `target` from each model. The entry at
/// `target` is the mean return time.
pub fn mean_first_passage(p: &TransitionMatrix, target: usize) -> Result<Vec<f64>> {
    let l = p.len();
    if target >= l {
        return Err(Error::config("target index out of range"));
    }
    let others: Vec<usize> = (0..l).filter(|&i| i != target).collect();
    let m = others.len();
    let mut tau = vec![0.0; l];
    if m > 0 {
        let mut a = vec![0.0; m * m];
        let mut b = vec![1.0; m];
        for (r, &i) in others.iter().enumerate() {
            for (c, &j) in others.iter().enumerate() {
                a[r * m + c] = if r == c { 1.0 } else { 0.0 } - p.get(i, j);
            }
        }
        lu_solve(&mut a, &mut b, m)
            .ok_or_else(|| Error::Analysis("first passage system is singular".into()))?;
        for (&i, v) in others.iter().zip(b) {
            tau[i] = v;
        }
    }
    tau[target] = 1.0 + others.iter().map(|&j| p.get(target, j) * tau[j]).sum::<f64>();
    if tau.iter().any(|t| !t.is_finite() || *t < 1.0 - 1e-9) {
        return Err(Error::Analysis("target is not reachable from every model".into()));
    }
    Ok(tau)
}

/// Stationary distribution, first passage times to the true model and the
/// per-model stay probabilities of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSummary {
    pub true_index: usize,
    pub stationary: Vec<f64>,
    pub mfpt: Vec<f64>,
    pub stickiness: Vec<f64>,
}

impl ChainSummary {
    pub fn new(p: &TransitionMatrix, true_index: usize, tol: f64) -> Result<ChainSummary> {
        Ok(ChainSummary {
            true_index,
            stationary: stationary_distribution(p, tol)?,
            mfpt: mean_first_passage(p, true_index)?,
            stickiness: p.diagonal(),
        })
    }

    /// Mean first passage time averaged over the starting models other
    /// than the true one.
    pub fn mean_mfpt(&self) -> f64 {
        let l = self.mfpt.len();
        if l < 2 {
            return 0.0;
        }
        let s: f64 = (0..l)
            .filter(|&i| i != self.true_index)
            .map(|i| self.mfpt[i])
            .sum();
        s / (l - 1) as f64
    }

    pub fn time_at_true(&self) -> f64 {
        self.stationary[self.true_index]
    }

    pub fn true_stickiness(&self) -> f64 {
        self.stickiness[self.true_index]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_space::enumerate_models;
    use crate::strategies::{HardResidual, Mode, Preset};
    use approx::assert_relative_eq;

    fn two_state(a: f64, b: f64) -> TransitionMatrix {
        TransitionMatrix::from_rows(2, vec![1.0 - a, a, b, 1.0 - b]).unwrap()
    }

    #[test]
    fn symmetric_two_state() {
        let pi = stationary_distribution(&two_state(0.3, 0.3), 1e-10).unwrap();
        assert_relative_eq!(pi[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(pi[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn asymmetric_two_state() {
        let pi = stationary_distribution(&two_state(0.2, 0.4), 1e-10).unwrap();
        assert_relative_eq!(pi[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(pi[1], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn geometric_passage() {
        let tau = mean_first_passage(&two_state(0.5, 0.3), 1).unwrap();
        assert_relative_eq!(tau[0], 2.0, epsilon = 1e-12);
        // return time 1 + 0.3 * 2
        assert_relative_eq!(tau[1], 1.6, epsilon = 1e-12);
    }

    #[test]
    fn absorbing_elsewhere_is_an_error() {
        let p = TransitionMatrix::from_rows(2, vec![1.0, 0.0, 0.5, 0.5]).unwrap();
        assert!(mean_first_passage(&p, 1).is_err());
    }

    #[test]
    fn rows_validated() {
        assert!(TransitionMatrix::from_rows(2, vec![0.5, 0.4, 0.5, 0.5]).is_err());
    }

    fn mave_only(mode: Mode) -> Population {
        Population::new([0.0, 0.0, 1.0, 0.0], mode).unwrap()
    }

    #[test]
    fn hand_filled_k2() {
        let space = enumerate_models(2).unwrap();
        let table = ProposalTable::new(&space, Mode::Soft, HardResidual::SelfProposal).unwrap();
        let win = WinMatrix::constant(3, 0.5).unwrap();
        let pop = mave_only(Mode::Soft);
        let p = build_transition_matrix(&win, &pop, &table).unwrap();
        for i in 0..3 {
            for l in 0..3 {
                if i != l {
                    assert_relative_eq!(p.get(i, l), 0.5 / 3.0, epsilon = 1e-15);
                }
            }
            assert_relative_eq!(stickiness(&win, &pop, &table, i).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn incumbent_always_wins() {
        let space = enumerate_models(2).unwrap();
        let table = ProposalTable::new(&space, Mode::Soft, HardResidual::SelfProposal).unwrap();
        let win = WinMatrix::constant(3, 0.0).unwrap();
        for i in 0..3 {
            assert_eq!(stickiness(&win, &mave_only(Mode::Soft), &table, i).unwrap(), 1.0);
        }
    }

    #[test]
    fn replicator_rejected() {
        let space = enumerate_models(2).unwrap();
        let table = ProposalTable::new(&space, Mode::Soft, HardResidual::SelfProposal).unwrap();
        let win = WinMatrix::constant(3, 0.5).unwrap();
        let pop = Population::preset(Preset::AllEqual, true, Mode::Soft).unwrap();
        assert!(build_transition_matrix(&win, &pop, &table).is_err());
    }

    #[test]
    fn soft_presets_are_positive() {
        let space = enumerate_models(3).unwrap();
        let table = ProposalTable::new(&space, Mode::Soft, HardResidual::SelfProposal).unwrap();
        let win = WinMatrix::constant(14, 0.3).unwrap();
        for preset in Preset::NO_REPLICATOR {
            let pop = Population::preset(preset, false, Mode::Soft).unwrap();
            let p = build_transition_matrix(&win, &pop, &table).unwrap();
            assert!(p.all_positive());
            let s = ChainSummary::new(&p, 3, 1e-10).unwrap();
            assert!(stationary_residual(&p, &s.stationary) < 1e-8);
            assert!(s.mfpt.iter().all(|&t| t >= 1.0));
        }
    }
}
