//! Mass-function calculus over a finite frame of classes.
//!
//! A [`MassFunction`] assigns belief to subsets of a [`Frame`] of mutually
//! exclusive class hypotheses. The module provides conjunctive combination
//! with conflict renormalization, the pignistic probability transform, and
//! the two uncertainty measures read off a combined mass: non-specificity
//! (imprecision, the epistemic component) and discord (internal conflict,
//! the aleatoric component).
//!
//! Subsets are bitmasks over the frame, so the full power set is exact for
//! frames of up to [`MAX_CLASSES`] classes. All values are immutable after
//! construction and every operation is a pure function.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Largest supported frame; subsets must fit in a `u32` bitmask.
pub const MAX_CLASSES: usize = 24;

/// Combination drops focal elements whose renormalized mass falls below
/// this, bounding sparsity growth over long combination chains.
const MASS_FLOOR: f64 = 1e-15;

/// Stored masses must sum to one within this.
const NORM_TOL: f64 = 1e-9;

/// Conflict within this of 1 is treated as total conflict.
const TOTAL_CONFLICT_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum BeliefError {
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("frame needs 2..={MAX_CLASSES} distinct classes, got {0} (after deduplication)")]
    InvalidFrame(usize),
    #[error("duplicate class `{0}` in frame")]
    DuplicateClass(String),
    #[error("mass functions are defined on different frames")]
    FrameMismatch,
    #[error("total conflict: sources have no common hypothesis")]
    TotalConflict,
    #[error("mass {mass} for subset {subset:?} outside (0, 1]")]
    MassOutOfRange { subset: Subset, mass: f64 },
    #[error("mass assigned to the empty subset")]
    EmptyFocalElement,
    #[error("masses sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("subset {0:?} is not contained in the frame")]
    SubsetOutOfFrame(Subset),
}

/// Ordered set of class labels the belief functions discern between.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    labels: Vec<String>,
}

impl Frame {
    /// Builds a frame from distinct labels. The label order is significant:
    /// it fixes class indices, bitmask bit positions and tie-breaking.
    pub fn new<I, S>(labels: I) -> Result<Self, BeliefError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(BeliefError::DuplicateClass(l.clone()));
            }
        }
        if labels.len() < 2 || labels.len() > MAX_CLASSES {
            return Err(BeliefError::InvalidFrame(labels.len()));
        }
        Ok(Frame { labels })
    }

    /// Number of classes `K`.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// The subset containing every class (Ω).
    pub fn full_set(&self) -> Subset {
        Subset(((1u64 << self.labels.len()) - 1) as u32)
    }

    /// log2 K, the upper bound of non-specificity on this frame.
    pub fn max_non_specificity(&self) -> f64 {
        (self.labels.len() as f64).log2()
    }
}

/// A subset of frame classes, packed as a bitmask (bit i = class index i).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Subset(u32);

impl Subset {
    pub const EMPTY: Subset = Subset(0);

    pub fn singleton(index: usize) -> Subset {
        debug_assert!(index < MAX_CLASSES);
        Subset(1 << index)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Subset {
        let mut bits = 0u32;
        for i in indices {
            debug_assert!(i < MAX_CLASSES);
            bits |= 1 << i;
        }
        Subset(bits)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn contains(self, index: usize) -> bool {
        self.0 & (1 << index) != 0
    }

    pub fn intersect(self, other: Subset) -> Subset {
        Subset(self.0 & other.0)
    }

    pub fn union(self, other: Subset) -> Subset {
        Subset(self.0 | other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: Subset) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn cardinality(self) -> u32 {
        self.0.count_ones()
    }

    pub fn indices(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..MAX_CLASSES).filter(move |i| bits & (1 << i) != 0)
    }
}

impl fmt::Debug for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (n, i) in self.indices().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// Normalized belief assignment over subsets of a frame.
///
/// Invariants, enforced at construction and preserved by every operation:
/// stored masses lie in (0, 1], the empty subset never carries mass, and the
/// stored masses sum to one within `1e-9`.
#[derive(Debug, Clone)]
pub struct MassFunction {
    frame: Frame,
    masses: BTreeMap<Subset, f64>,
}

impl MassFunction {
    /// Validating constructor. Zero-mass entries are dropped; masses for a
    /// repeated subset accumulate.
    pub fn new<I>(frame: Frame, entries: I) -> Result<Self, BeliefError>
    where
        I: IntoIterator<Item = (Subset, f64)>,
    {
        let full = frame.full_set();
        let mut masses: BTreeMap<Subset, f64> = BTreeMap::new();
        for (subset, mass) in entries {
            if mass == 0.0 {
                continue;
            }
            if !subset.is_subset_of(full) {
                return Err(BeliefError::SubsetOutOfFrame(subset));
            }
            if subset.is_empty() {
                return Err(BeliefError::EmptyFocalElement);
            }
            if !(mass > 0.0 && mass <= 1.0 + NORM_TOL) {
                return Err(BeliefError::MassOutOfRange { subset, mass });
            }
            *masses.entry(subset).or_insert(0.0) += mass;
        }
        let total: f64 = masses.values().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(BeliefError::NotNormalized(total));
        }
        Ok(MassFunction { frame, masses })
    }

    /// Internal constructor for operations that produce valid masses by
    /// construction.
    fn from_parts(frame: Frame, masses: BTreeMap<Subset, f64>) -> Self {
        debug_assert!(
            (masses.values().sum::<f64>() - 1.0).abs() <= NORM_TOL,
            "mass invariant violated"
        );
        MassFunction { frame, masses }
    }

    /// The certain mass m({y}) = 1 for a known class.
    pub fn categorical(frame: Frame, label: &str) -> Result<Self, BeliefError> {
        let index = frame
            .index_of(label)
            .ok_or_else(|| BeliefError::UnknownClass(label.to_string()))?;
        Ok(Self::categorical_index(frame, index))
    }

    /// As [`MassFunction::categorical`], by class index.
    pub fn categorical_index(frame: Frame, index: usize) -> Self {
        assert!(index < frame.len(), "class index out of frame");
        let masses = BTreeMap::from([(Subset::singleton(index), 1.0)]);
        Self::from_parts(frame, masses)
    }

    /// Total ignorance: m(Ω) = 1.
    pub fn vacuous(frame: Frame) -> Self {
        let masses = BTreeMap::from([(frame.full_set(), 1.0)]);
        Self::from_parts(frame, masses)
    }

    /// Simple support mass: m({y}) = alpha, m(Ω) = 1 − alpha.
    pub fn simple_support(frame: Frame, index: usize, alpha: f64) -> Result<Self, BeliefError> {
        let singleton = Subset::singleton(index);
        if !(0.0..=1.0).contains(&alpha) {
            return Err(BeliefError::MassOutOfRange {
                subset: singleton,
                mass: alpha,
            });
        }
        assert!(index < frame.len(), "class index out of frame");
        let full = frame.full_set();
        let mut masses = BTreeMap::new();
        if alpha > 0.0 {
            masses.insert(singleton, alpha);
        }
        if alpha < 1.0 {
            *masses.entry(full).or_insert(0.0) += 1.0 - alpha;
        }
        Ok(Self::from_parts(frame, masses))
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    /// Mass carried by `subset` (zero if not focal).
    pub fn mass(&self, subset: Subset) -> f64 {
        self.masses.get(&subset).copied().unwrap_or(0.0)
    }

    /// Focal elements in deterministic (bitmask) order.
    pub fn focal_elements(&self) -> impl Iterator<Item = (Subset, f64)> + '_ {
        self.masses.iter().map(|(s, m)| (*s, *m))
    }

    pub fn focal_count(&self) -> usize {
        self.masses.len()
    }

    /// Union of the focal elements.
    pub fn core(&self) -> Subset {
        self.masses
            .keys()
            .fold(Subset::EMPTY, |acc, s| acc.union(*s))
    }

    /// Degree of conflict κ with another mass: the total product mass that
    /// lands on disjoint focal pairs.
    pub fn conflict(&self, other: &MassFunction) -> Result<f64, BeliefError> {
        if self.frame != other.frame {
            return Err(BeliefError::FrameMismatch);
        }
        let mut kappa = 0.0;
        for (a, ma) in self.focal_elements() {
            for (b, mb) in other.focal_elements() {
                if a.intersect(b).is_empty() {
                    kappa += ma * mb;
                }
            }
        }
        Ok(kappa.min(1.0))
    }

    /// Conjunctive combination with conflict renormalization.
    ///
    /// Fails with [`BeliefError::TotalConflict`] when κ = 1 within `1e-12`:
    /// the sources share no hypothesis and no coherent combination exists.
    pub fn combine(&self, other: &MassFunction) -> Result<MassFunction, BeliefError> {
        if self.frame != other.frame {
            return Err(BeliefError::FrameMismatch);
        }
        let mut combined: BTreeMap<Subset, f64> = BTreeMap::new();
        let mut kappa = 0.0;
        for (a, ma) in self.focal_elements() {
            for (b, mb) in other.focal_elements() {
                let inter = a.intersect(b);
                let product = ma * mb;
                if inter.is_empty() {
                    kappa += product;
                } else {
                    *combined.entry(inter).or_insert(0.0) += product;
                }
            }
        }
        if kappa >= 1.0 - TOTAL_CONFLICT_TOL {
            return Err(BeliefError::TotalConflict);
        }
        // Single renormalization pass; entries below the floor are noise
        // from long combination chains and are folded into the remainder.
        let surviving: f64 = combined.values().sum();
        combined.retain(|_, m| {
            *m /= surviving;
            *m >= MASS_FLOOR
        });
        let total: f64 = combined.values().sum();
        for m in combined.values_mut() {
            *m /= total;
        }
        Ok(MassFunction::from_parts(self.frame.clone(), combined))
    }

    /// Pignistic transform: each focal mass is split uniformly over its
    /// member classes.
    pub fn pignistic(&self) -> PignisticDistribution {
        let mut probs = vec![0.0; self.frame.len()];
        for (subset, mass) in self.focal_elements() {
            let share = mass / f64::from(subset.cardinality());
            for i in subset.indices() {
                probs[i] += share;
            }
        }
        PignisticDistribution {
            frame: self.frame.clone(),
            probs,
        }
    }

    /// Non-specificity Σ m(A)·log2|A|: the mass-weighted imprecision of the
    /// focal elements, in [0, log2 K]. Zero iff all focal elements are
    /// singletons; maximal only for the vacuous mass.
    pub fn non_specificity(&self) -> f64 {
        self.focal_elements()
            .map(|(s, m)| m * f64::from(s.cardinality()).log2())
            .sum()
    }

    /// Discord −Σ m(A)·log2 BetP(A), with BetP extended to subsets by
    /// summing member-class probabilities. Non-negative; equals the Shannon
    /// entropy of BetP when every focal element is a singleton.
    ///
    /// Well-defined for any valid mass: m(A) > 0 implies
    /// BetP(A) ≥ m(A)/|A| > 0. The sum runs over focal elements only;
    /// zero-mass subsets contribute nothing.
    pub fn discord(&self) -> f64 {
        let betp = self.pignistic();
        -self
            .focal_elements()
            .map(|(s, m)| m * betp.subset_prob(s).log2())
            .sum::<f64>()
    }
}

/// Probability distribution over frame classes produced by the pignistic
/// transform.
#[derive(Debug, Clone)]
pub struct PignisticDistribution {
    frame: Frame,
    probs: Vec<f64>,
}

impl PignisticDistribution {
    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.probs[index]
    }

    /// Probability of a subset: sum over its member classes.
    pub fn subset_prob(&self, subset: Subset) -> f64 {
        subset.indices().map(|i| self.probs[i]).sum()
    }

    /// Most probable class; ties resolve to the lowest class index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate().skip(1) {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Shannon entropy (log2) of the distribution.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| p * p.log2())
            .sum::<f64>()
    }
}


#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    fn mass_on(frame: Frame) -> impl Strategy<Value = MassFunction> {
        let full = frame.full_set().bits();
        let subsets = proptest::collection::btree_set(1..=full, 1..=6);
        let weights = proptest::collection::vec(0.01f64..1.0, 6);
        (Just(frame), subsets, weights).prop_map(|(frame, subsets, weights)| {
            let total: f64 = weights.iter().take(subsets.len()).sum();
            MassFunction::new(
                frame,
                subsets
                    .iter()
                    .zip(&weights)
                    .map(|(s, w)| (Subset(*s), w / total)),
            )
            .unwrap()
        })
    }

    fn shared_frame() -> impl Strategy<Value = Frame> {
        (2usize..=5).prop_map(|k| Frame::new((0..k).map(|i| format!("c{i}"))).unwrap())
    }

    /// Random normalized mass over a random frame of 2..=5 classes.
    fn arbitrary_mass() -> impl Strategy<Value = MassFunction> {
        shared_frame().prop_flat_map(mass_on)
    }

    fn mass_pair() -> impl Strategy<Value = (MassFunction, MassFunction)> {
        shared_frame().prop_flat_map(|f| (mass_on(f.clone()), mass_on(f)))
    }

    fn mass_triple() -> impl Strategy<Value = (MassFunction, MassFunction, MassFunction)> {
        shared_frame().prop_flat_map(|f| (mass_on(f.clone()), mass_on(f.clone()), mass_on(f)))
    }

    fn masses_close(a: &MassFunction, b: &MassFunction, tol: f64) -> bool {
        let keys: std::collections::BTreeSet<Subset> = a
            .focal_elements()
            .map(|(s, _)| s)
            .chain(b.focal_elements().map(|(s, _)| s))
            .collect();
        keys.into_iter().all(|s| (a.mass(s) - b.mass(s)).abs() <= tol)
    }

    proptest! {
        #[test]
        fn combination_commutes((m1, m2) in mass_pair()) {
            match (m1.combine(&m2), m2.combine(&m1)) {
                (Ok(a), Ok(b)) => prop_assert!(masses_close(&a, &b, 1e-9)),
                (Err(BeliefError::TotalConflict), Err(BeliefError::TotalConflict)) => {}
                _ => prop_assert!(false, "combine disagreed on success"),
            }
        }

        #[test]
        fn combination_associates((m1, m2, m3) in mass_triple()) {
            let left = m1.combine(&m2).and_then(|m| m.combine(&m3));
            let right = m2.combine(&m3).and_then(|m| m1.combine(&m));
            if let (Ok(a), Ok(b)) = (left, right) {
                prop_assert!(masses_close(&a, &b, 1e-9));
            }
        }

        #[test]
        fn pignistic_sums_to_one(m in arbitrary_mass()) {
            let total: f64 = m.pignistic().probs().iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            prop_assert!(m.pignistic().probs().iter().all(|p| *p >= 0.0));
        }

        #[test]
        fn non_specificity_is_bounded(m in arbitrary_mass()) {
            let ns = m.non_specificity();
            prop_assert!(ns >= 0.0);
            prop_assert!(ns <= m.frame().max_non_specificity() + 1e-12);
        }

        #[test]
        fn discord_is_nonnegative(m in arbitrary_mass()) {
            prop_assert!(m.discord() >= -1e-12);
        }

        #[test]
        fn discord_matches_entropy_on_singleton_masses(
            weights in proptest::collection::vec(0.01f64..1.0, 2..=5),
        ) {
            let k = weights.len();
            let frame = Frame::new((0..k).map(|i| format!("c{i}"))).unwrap();
            let total: f64 = weights.iter().sum();
            let m = MassFunction::new(
                frame,
                weights
                    .iter()
                    .enumerate()
                    .map(|(i, w)| (Subset::singleton(i), w / total)),
            )
            .unwrap();
            let entropy = m.pignistic().entropy();
            prop_assert!((m.discord() - entropy).abs() <= 1e-9);
        }

        #[test]
        fn categorical_evidence_never_raises_non_specificity(m in arbitrary_mass()) {
            let core = m.core();
            for index in core.indices() {
                let cat = MassFunction::categorical_index(m.frame().clone(), index);
                let combined = m.combine(&cat).unwrap();
                prop_assert!(combined.non_specificity() <= m.non_specificity() + 1e-12);
            }
        }
    }
}
