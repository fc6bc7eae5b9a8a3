//! Bagged decision-tree ensemble with two uncertainty decompositions.
//!
//! The forest approximates a second-order distribution over class
//! probabilities by the finite set of member predictions. Two readings of
//! that sample are provided:
//!
//! - entropy: aleatoric = mean member entropy, total = entropy of the mean
//!   member distribution, epistemic = their difference (mutual
//!   information);
//! - variance: per class, total = variance of the class indicator under the
//!   member mixture, aleatoric = mean of `p(1-p)` across members, epistemic
//!   = population variance of `p` across members, summed over classes.

mod tree;

pub use tree::{DecisionTree, TreeParams};

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::UncertaintyScore;
use crate::belief::Frame;
use crate::seeding;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("feature dimension mismatch: model has {expected}, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label index {label} outside frame of {classes} classes")]
    LabelOutsideFrame { label: usize, classes: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: {rows} feature rows vs {labels} labels")]
    ShapeMismatch { rows: usize, labels: usize },
    #[error("member probability row {row} sums to {sum}, expected 1")]
    InvalidMemberProbs { row: usize, sum: f64 },
}

/// How many features each split considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitFeatures {
    All,
    #[default]
    Sqrt,
    Fixed(usize),
}

impl SplitFeatures {
    pub fn resolve(self, p: usize) -> usize {
        match self {
            SplitFeatures::All => p.max(1),
            SplitFeatures::Sqrt => ((p as f64).sqrt().floor() as usize).clamp(1, p.max(1)),
            SplitFeatures::Fixed(m) => m.clamp(1, p.max(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub split_features: SplitFeatures,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            tree: TreeParams::default(),
            split_features: SplitFeatures::Sqrt,
        }
    }
}

/// Per-member class distributions for one input: an M x K row-stochastic
/// matrix.
#[derive(Debug, Clone)]
pub struct MemberProbs {
    probs: Array2<f64>,
}

impl MemberProbs {
    pub fn new(probs: Array2<f64>) -> Result<Self, EnsembleError> {
        for (row, r) in probs.rows().into_iter().enumerate() {
            let sum: f64 = r.sum();
            if (sum - 1.0).abs() > 1e-9 || r.iter().any(|p| *p < 0.0) {
                return Err(EnsembleError::InvalidMemberProbs { row, sum });
            }
        }
        Ok(MemberProbs { probs })
    }

    pub fn members(&self) -> usize {
        self.probs.nrows()
    }

    pub fn classes(&self) -> usize {
        self.probs.ncols()
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.probs.view()
    }

    /// The ensemble predictive distribution: the mean over member rows.
    pub fn mean_distribution(&self) -> Vec<f64> {
        let m = self.members() as f64;
        (0..self.classes())
            .map(|c| self.probs.column(c).sum() / m)
            .collect()
    }
}

/// The three components of an uncertainty decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub tu: f64,
    pub au: f64,
    pub eu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionKind {
    Entropy,
    Variance,
}

fn xlog2(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// Entropy decomposition: AU is the mean member entropy, TU the entropy of
/// the mean member distribution, EU = TU - AU (clamped at zero against
/// rounding; Jensen guarantees it is non-negative).
pub fn entropy_decomposition(probs: &MemberProbs) -> Decomposition {
    let m = probs.members() as f64;
    let au = -probs.matrix().iter().map(|p| xlog2(*p)).sum::<f64>() / m;
    let tu = -probs
        .mean_distribution()
        .iter()
        .map(|p| xlog2(*p))
        .sum::<f64>();
    let eu = (tu - au).max(0.0);
    Decomposition { tu, au, eu }
}

/// Label-wise variance decomposition. Expectations over the second-order
/// distribution are estimated by the empirical mean over members, and the
/// epistemic term uses the population (1/M) variance so that duplicating
/// every member leaves the result unchanged. TU = AU + EU holds exactly and
/// equals the summed indicator variance under the member mixture.
pub fn variance_decomposition(probs: &MemberProbs) -> Decomposition {
    let m = probs.members() as f64;
    let mut au = 0.0;
    let mut eu = 0.0;
    for c in 0..probs.classes() {
        let column = probs.matrix().column(c).to_owned();
        let mean = column.sum() / m;
        au += column.iter().map(|t| t * (1.0 - t)).sum::<f64>() / m;
        eu += column.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / m;
    }
    Decomposition {
        tu: au + eu,
        au,
        eu,
    }
}

/// Forest of CART trees fit on bootstrap resamples.
#[derive(Debug, Clone)]
pub struct BaggedEnsemble {
    trees: Vec<DecisionTree>,
    frame: Frame,
    params: ForestParams,
    dim: usize,
    seed: u64,
}

/// Trains `params.n_trees` trees, each on `n` bootstrap draws with
/// replacement, with an independent RNG stream derived from `seed` and the
/// member index. Bit-reproducible for equal inputs.
pub fn fit_forest(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    frame: &Frame,
    params: &ForestParams,
    seed: u64,
) -> Result<BaggedEnsemble, EnsembleError> {
    let n = features.nrows();
    if n == 0 {
        return Err(EnsembleError::EmptyTrainingSet);
    }
    if labels.len() != n {
        return Err(EnsembleError::ShapeMismatch {
            rows: n,
            labels: labels.len(),
        });
    }
    if params.n_trees == 0 {
        return Err(EnsembleError::InvalidParameter("need at least one tree".into()));
    }
    if params.tree.min_samples_leaf == 0 {
        return Err(EnsembleError::InvalidParameter(
            "min_samples_leaf must be at least 1".into(),
        ));
    }
    for &label in labels {
        if label >= frame.len() {
            return Err(EnsembleError::LabelOutsideFrame {
                label,
                classes: frame.len(),
            });
        }
    }
    let n_split_features = params.split_features.resolve(features.ncols());
    let trees = (0..params.n_trees)
        .map(|member| {
            let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(seed, member as u64));
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            DecisionTree::fit(
                features,
                labels,
                &rows,
                frame.len(),
                &params.tree,
                n_split_features,
                &mut rng,
            )
        })
        .collect();
    Ok(BaggedEnsemble {
        trees,
        frame: frame.clone(),
        params: params.clone(),
        dim: features.ncols(),
        seed,
    })
}

impl BaggedEnsemble {
    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Per-member leaf distributions for `x`.
    pub fn member_probs(&self, x: ArrayView1<'_, f64>) -> Result<MemberProbs, EnsembleError> {
        if x.len() != self.dim {
            return Err(EnsembleError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut probs = Array2::zeros((self.trees.len(), self.frame.len()));
        for (i, tree) in self.trees.iter().enumerate() {
            let leaf = tree.leaf_probs(x);
            probs.row_mut(i).assign(&ndarray::ArrayView1::from(leaf));
        }
        MemberProbs::new(probs)
    }

    /// Predicted class (argmax of the mean member distribution, ties to the
    /// lowest index) plus the chosen decomposition's EU and AU.
    pub fn score(
        &self,
        x: ArrayView1<'_, f64>,
        kind: DecompositionKind,
    ) -> Result<UncertaintyScore, EnsembleError> {
        let probs = self.member_probs(x)?;
        let mean = probs.mean_distribution();
        let mut predicted = 0;
        for (c, p) in mean.iter().enumerate().skip(1) {
            if *p > mean[predicted] {
                predicted = c;
            }
        }
        let decomposition = match kind {
            DecompositionKind::Entropy => entropy_decomposition(&probs),
            DecompositionKind::Variance => variance_decomposition(&probs),
        };
        Ok(UncertaintyScore {
            predicted,
            eu: decomposition.eu,
            au: decomposition.au,
            mass: None,
        })
    }
}
