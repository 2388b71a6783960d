//! Hierarchically closed linear models over `k` factors.
//!
//! A [`Term`] is a nonempty set of factors encoded as a bitmask (bit `j - 1`
//! stands for factor `x_j`). A [`ModelSpec`] is a set of terms, itself encoded
//! as a 32-bit set indexed by term mask, so closure and subset tests are a
//! handful of integer operations.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// Largest supported factor count.
pub const MAX_FACTORS: usize = 5;

/// A main effect (one factor) or a `v`-way interaction (`v` factors).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Term(u8);

impl Term {
    pub fn from_mask(mask: u8) -> Result<Term> {
        if mask == 0 || (mask as usize) >= (1 << MAX_FACTORS) {
            return Err(Error::config("term must reference factors 1..=5"));
        }
        Ok(Term(mask))
    }

    /// Builds a term from 1-based factor indices.
    pub fn from_factors(factors: &[usize]) -> Result<Term> {
        let mut mask = 0u8;
        for &f in factors {
            if f == 0 || f > MAX_FACTORS {
                return Err(Error::config("factor index out of range"));
            }
            let bit = 1u8 << (f - 1);
            if mask & bit != 0 {
                return Err(Error::config("factor repeated within a term"));
            }
            mask |= bit;
        }
        Term::from_mask(mask)
    }

    pub fn main(factor: usize) -> Term {
        assert!((1..=MAX_FACTORS).contains(&factor));
        Term(1 << (factor - 1))
    }

    pub fn mask(self) -> u8 {
        self.0
    }

    /// Interaction order: 1 for a main effect.
    pub fn order(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_main(self) -> bool {
        self.order() == 1
    }

    pub fn contains_factor(self, factor: usize) -> bool {
        self.0 & (1 << (factor - 1)) != 0
    }

    /// Highest factor index referenced.
    pub fn max_factor(self) -> usize {
        8 - self.0.leading_zeros() as usize
    }

    pub fn factors(self) -> impl Iterator<Item = usize> {
        let mask = self.0;
        (1..=MAX_FACTORS).filter(move |f| mask & (1 << (f - 1)) != 0)
    }
}

impl Ord for Term {
    /// Lower order first, then lexicographic on the ascending factor list.
    fn cmp(&self, other: &Self) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| self.factors().cmp(other.factors()))
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for factor in self.factors() {
            write!(f, "x{factor}")?;
        }
        Ok(())
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Term> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let body = s
            .strip_prefix('x')
            .ok_or_else(|| Error::config("term must start with 'x'"))?;
        let mut factors = Vec::new();
        for part in body.split('x') {
            let f: usize = part
                .parse()
                .map_err(|_| Error::config("malformed factor index in term"))?;
            factors.push(f);
        }
        Term::from_factors(&factors)
    }
}

/// Set of regression terms. Valid models contain `x1` and are
/// hierarchically closed; see [`ModelSpec::is_valid`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModelSpec(u32);

impl ModelSpec {
    /// The model holding only the main effect of factor 1.
    pub fn base() -> ModelSpec {
        ModelSpec(1 << 1)
    }

    /// Raw term set; no validity checks.
    pub fn from_terms<I: IntoIterator<Item = Term>>(terms: I) -> ModelSpec {
        ModelSpec(terms.into_iter().fold(0, |acc, t| acc | (1 << t.0)))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn contains(self, term: Term) -> bool {
        self.0 & (1 << term.0) != 0
    }

    pub fn with(self, term: Term) -> ModelSpec {
        ModelSpec(self.0 | (1 << term.0))
    }

    /// Number of regression terms.
    pub fn p(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Terms in canonical order (main effects first).
    pub fn terms(self) -> Vec<Term> {
        let mut terms: Vec<Term> = (1u8..32)
            .filter(|m| self.0 & (1 << m) != 0)
            .map(Term)
            .collect();
        terms.sort();
        terms
    }

    /// Highest interaction order present, 0 for the empty set.
    pub fn max_order(self) -> u32 {
        (1u8..32)
            .filter(|m| self.0 & (1 << m) != 0)
            .map(|m| m.count_ones())
            .max()
            .unwrap_or(0)
    }

    /// How many terms sit at the highest order.
    pub fn max_order_count(self) -> usize {
        let top = self.max_order();
        (1u8..32)
            .filter(|m| self.0 & (1 << m) != 0 && m.count_ones() == top)
            .count()
    }

    pub fn max_factor(self) -> usize {
        (1u8..32)
            .filter(|m| self.0 & (1 << m) != 0)
            .map(|m| Term(m).max_factor())
            .max()
            .unwrap_or(0)
    }

    pub fn is_closed(self) -> bool {
        (1u8..32)
            .filter(|m| self.0 & (1 << m) != 0)
            .all(|m| submasks(m).all(|s| self.0 & (1 << s) != 0))
    }

    pub fn is_valid(self) -> bool {
        self.contains(Term::main(1)) && self.is_closed()
    }

    /// Main effects present, as factor indices.
    pub fn main_effects(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (1..=MAX_FACTORS).filter(move |f| bits & (1 << (1u32 << (f - 1))) != 0)
    }

    /// Removes factor `factor` and every term that mentions it.
    pub fn without_factor(self, factor: usize) -> ModelSpec {
        let mut bits = self.0;
        for m in 1u8..32 {
            if m & (1 << (factor - 1)) != 0 {
                bits &= !(1 << m);
            }
        }
        ModelSpec(bits)
    }

    fn sort_key(self) -> (usize, u32, usize, Vec<Term>) {
        (self.p(), self.max_order(), self.max_order_count(), self.terms())
    }
}

/// Nonempty submasks of `mask`, including `mask` itself.
fn submasks(mask: u8) -> impl Iterator<Item = u8> {
    let mut next = Some(mask);
    core::iter::from_fn(move || {
        let cur = next?;
        next = match cur.wrapping_sub(1) & mask {
            0 => None,
            s => Some(s),
        };
        Some(cur)
    })
}

impl Ord for ModelSpec {
    /// Canonical total order: parameter count, highest interaction order,
    /// count of highest-order terms, then the term lists lexicographically.
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for ModelSpec {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms().into_iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    /// Parses `x1 + x2 + x1x2`. Whitespace is ignored; the result must be a
    /// valid (closed, `x1`-containing) model.
    fn from_str(s: &str) -> Result<ModelSpec> {
        let mut spec = ModelSpec(0);
        for part in s.split('+') {
            let term: Term = part.parse()?;
            if spec.contains(term) {
                return Err(Error::config("duplicate term in model string"));
            }
            spec = spec.with(term);
        }
        if !spec.is_valid() {
            return Err(Error::config(
                "model must contain x1 and be hierarchically closed",
            ));
        }
        Ok(spec)
    }
}

/// Smallest valid model containing `terms`.
pub fn hierarchical_closure(terms: &[Term], k: usize) -> Result<ModelSpec> {
    if terms.is_empty() {
        return Err(Error::config("closure of an empty term set"));
    }
    let mut bits = 1u32 << 1;
    for t in terms {
        if t.max_factor() > k {
            return Err(Error::config("term references a factor beyond k"));
        }
        for s in submasks(t.0) {
            bits |= 1 << s;
        }
    }
    Ok(ModelSpec(bits))
}

/// Result of comparing two models under the complexity partial order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Complexity {
    MoreComplex,
    LessComplex,
    Indistinguishable,
}

/// Applies, in order: parameter count, highest interaction order, number of
/// highest-order interactions.
pub fn compare_complexity(a: ModelSpec, b: ModelSpec) -> Complexity {
    let ka = (a.p(), a.max_order(), a.max_order_count());
    let kb = (b.p(), b.max_order(), b.max_order_count());
    match ka.cmp(&kb) {
        Ordering::Greater => Complexity::MoreComplex,
        Ordering::Less => Complexity::LessComplex,
        Ordering::Equal => Complexity::Indistinguishable,
    }
}

/// The canonically ordered universe of valid models for `k` factors.
#[derive(Clone, Debug)]
pub struct ModelSpace {
    k: usize,
    models: Vec<ModelSpec>,
    index: BTreeMap<u32, usize>,
}

impl ModelSpace {
    pub fn new(k: usize) -> Result<ModelSpace> {
        enumerate_models(k)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of models, `L`.
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn models(&self) -> &[ModelSpec] {
        &self.models
    }

    pub fn model(&self, index: usize) -> ModelSpec {
        self.models[index]
    }

    pub fn index_of(&self, model: ModelSpec) -> Option<usize> {
        self.index.get(&model.bits()).copied()
    }

    /// Parses a model string and locates it in the space.
    pub fn parse_index(&self, s: &str) -> Result<usize> {
        let spec: ModelSpec = s.parse()?;
        self.index_of(spec)
            .ok_or_else(|| Error::config("model is not a member of the model space"))
    }

    /// All interaction terms available for `k` factors.
    pub fn interaction_terms(&self) -> impl Iterator<Item = Term> + '_ {
        (1u8..(1 << self.k)).filter(|m| m.count_ones() >= 2).map(Term)
    }

    /// Models one main effect away from `mg`: add an absent main effect, or
    /// drop a present one (never `x1`) together with its interactions.
    pub fn tess_neighbors(&self, mg: ModelSpec) -> Vec<ModelSpec> {
        let mut out = Vec::new();
        for f in 1..=self.k {
            let main = Term::main(f);
            let candidate = if mg.contains(main) {
                if f == 1 {
                    continue;
                }
                mg.without_factor(f)
            } else {
                mg.with(main)
            };
            debug_assert!(candidate.is_valid());
            out.push(candidate);
        }
        out.sort();
        out.dedup();
        out
    }

    /// Closures of `mg` plus one absent interaction term.
    pub fn bo_moves(&self, mg: ModelSpec) -> Vec<ModelSpec> {
        let mut out: Vec<ModelSpec> = self
            .interaction_terms()
            .filter(|&w| !mg.contains(w))
            .map(|w| {
                let mut terms = mg.terms();
                terms.push(w);
                hierarchical_closure(&terms, self.k).expect("terms within k")
            })
            .filter(|&m| m != mg)
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn tess_neighbor_indices(&self, mg: usize) -> Vec<usize> {
        self.to_indices(self.tess_neighbors(self.models[mg]))
    }

    pub fn bo_move_indices(&self, mg: usize) -> Vec<usize> {
        self.to_indices(self.bo_moves(self.models[mg]))
    }

    fn to_indices(&self, models: Vec<ModelSpec>) -> Vec<usize> {
        models
            .into_iter()
            .map(|m| self.index_of(m).expect("closed model is in the space"))
            .collect()
    }
}

/// All valid models over `k` factors in canonical order.
pub fn enumerate_models(k: usize) -> Result<ModelSpace> {
    if k == 0 || k > MAX_FACTORS {
        return Err(Error::config("k must lie in 1..=5"));
    }
    let terms: Vec<Term> = (1u8..(1 << k)).map(Term).collect();
    let mut seen: BTreeMap<u32, ModelSpec> = BTreeMap::new();
    let mut frontier = Vec::from([ModelSpec::base()]);
    seen.insert(ModelSpec::base().bits(), ModelSpec::base());
    // Every closed set is reachable by adding terms in increasing order and
    // closing after each addition.
    while let Some(m) = frontier.pop() {
        for &t in &terms {
            if m.contains(t) {
                continue;
            }
            let mut ts = m.terms();
            ts.push(t);
            let next = hierarchical_closure(&ts, k)?;
            if let alloc::collections::btree_map::Entry::Vacant(e) = seen.entry(next.bits()) {
                e.insert(next);
                frontier.push(next);
            }
        }
    }
    let mut models: Vec<ModelSpec> = seen.into_values().collect();
    models.sort();
    let index = models
        .iter()
        .enumerate()
        .map(|(i, m)| (m.bits(), i))
        .collect();
    Ok(ModelSpace { k, models, index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn m(s: &str) -> ModelSpec {
        s.parse().unwrap()
    }

    /// Brute force over every subset of the `2^k - 1` terms.
    fn brute_force(k: usize) -> Vec<ModelSpec> {
        let nterms = (1usize << k) - 1;
        let mut out = Vec::new();
        for subset in 0u32..(1 << nterms) {
            let spec = ModelSpec::from_terms(
                (0..nterms)
                    .filter(|i| subset & (1 << i) != 0)
                    .map(|i| Term((i + 1) as u8)),
            );
            if spec.is_valid() {
                out.push(spec);
            }
        }
        out.sort();
        out
    }

    #[test]
    fn model_counts() {
        assert_eq!(enumerate_models(1).unwrap().len(), 1);
        assert_eq!(enumerate_models(2).unwrap().len(), 3);
        assert_eq!(enumerate_models(3).unwrap().len(), 14);
        for k in 1..=3 {
            assert_eq!(enumerate_models(k).unwrap().models(), &brute_force(k)[..]);
        }
    }

    #[test]
    fn k_out_of_range() {
        assert!(enumerate_models(0).is_err());
        assert!(enumerate_models(6).is_err());
        assert!(enumerate_models(5).is_ok());
    }

    #[test]
    fn k2_order() {
        let space = enumerate_models(2).unwrap();
        let names: Vec<_> = space.models().iter().map(|m| m.to_string()).collect();
        assert_eq!(names, ["x1", "x1 + x2", "x1 + x2 + x1x2"]);
    }

    #[test]
    fn k3_canonical_order() {
        let space = enumerate_models(3).unwrap();
        let names: Vec<_> = space.models().iter().map(|m| m.to_string()).collect();
        assert_eq!(
            names,
            [
                "x1",
                "x1 + x2",
                "x1 + x3",
                "x1 + x2 + x3",
                "x1 + x2 + x1x2",
                "x1 + x3 + x1x3",
                "x1 + x2 + x3 + x1x2",
                "x1 + x2 + x3 + x1x3",
                "x1 + x2 + x3 + x2x3",
                "x1 + x2 + x3 + x1x2 + x1x3",
                "x1 + x2 + x3 + x1x2 + x2x3",
                "x1 + x2 + x3 + x1x3 + x2x3",
                "x1 + x2 + x3 + x1x2 + x1x3 + x2x3",
                "x1 + x2 + x3 + x1x2 + x1x3 + x2x3 + x1x2x3",
            ]
        );
    }

    #[test]
    fn closure_examples() {
        let t = |s: &str| s.parse::<Term>().unwrap();
        assert_eq!(
            hierarchical_closure(&[t("x1x2x3")], 3).unwrap(),
            m("x1 + x2 + x3 + x1x2 + x1x3 + x2x3 + x1x2x3")
        );
        assert_eq!(hierarchical_closure(&[t("x2")], 3).unwrap(), m("x1 + x2"));
        assert_eq!(
            hierarchical_closure(&[t("x1x3")], 3).unwrap(),
            m("x1 + x3 + x1x3")
        );
        assert!(hierarchical_closure(&[t("x1x4")], 3).is_err());
        assert!(hierarchical_closure(&[], 3).is_err());
    }

    #[test]
    fn complexity_rules() {
        let full = m("x1+x2+x3+x1x2+x1x3+x2x3+x1x2x3");
        assert_eq!(compare_complexity(full, m("x1+x2")), Complexity::MoreComplex);
        assert_eq!(
            compare_complexity(m("x1+x2+x1x2"), m("x1+x2+x3")),
            Complexity::MoreComplex
        );
        assert_eq!(
            compare_complexity(m("x1+x2+x3"), m("x1+x2+x1x2")),
            Complexity::LessComplex
        );
        assert_eq!(compare_complexity(full, full), Complexity::Indistinguishable);
        assert_eq!(
            compare_complexity(m("x1+x2+x1x2"), m("x1+x3+x1x3")),
            Complexity::Indistinguishable
        );
    }

    #[test]
    fn tess_examples() {
        let space = enumerate_models(3).unwrap();
        assert_eq!(
            space.tess_neighbors(m("x1+x2")),
            vec![m("x1"), m("x1+x2+x3")]
        );
        assert_eq!(
            space.tess_neighbors(m("x1+x2+x3+x1x2+x1x3+x2x3+x1x2x3")),
            vec![m("x1+x2+x1x2"), m("x1+x3+x1x3")]
        );
        assert_eq!(space.tess_neighbors(m("x1")), vec![m("x1+x2"), m("x1+x3")]);
    }

    #[test]
    fn bo_examples() {
        let space = enumerate_models(3).unwrap();
        assert_eq!(
            space.bo_moves(m("x1+x2")),
            vec![
                m("x1+x2+x1x2"),
                m("x1+x2+x3+x1x3"),
                m("x1+x2+x3+x2x3"),
                m("x1+x2+x3+x1x2+x1x3+x2x3+x1x2x3"),
            ]
        );
        assert_eq!(
            space.bo_moves(m("x1+x2+x3+x1x2+x1x3+x2x3")),
            vec![m("x1+x2+x3+x1x2+x1x3+x2x3+x1x2x3")]
        );
        assert!(space
            .bo_moves(m("x1+x2+x3+x1x2+x1x3+x2x3+x1x2x3"))
            .is_empty());
    }

    #[test]
    fn parse_errors() {
        assert!("x2".parse::<ModelSpec>().is_err());
        assert!("x1 + x1x2".parse::<ModelSpec>().is_err());
        assert!("x1 + x1".parse::<ModelSpec>().is_err());
        assert!("x1 + y2".parse::<ModelSpec>().is_err());
        assert!("x1 + x9".parse::<ModelSpec>().is_err());
        assert!("".parse::<ModelSpec>().is_err());
        assert_eq!(m(" x1+x2 +  x1 x2 ").to_string(), "x1 + x2 + x1x2");
        let space = enumerate_models(2).unwrap();
        assert!(space.parse_index("x1 + x3").is_err());
    }
}
