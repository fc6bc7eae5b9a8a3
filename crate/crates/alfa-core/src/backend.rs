//! Common interface over the uncertainty quantification backends, plus a
//! name-keyed registry so callers (CLI, experiment configs, the acquisition
//! loop) select the algorithm at runtime.
//!
//! A [`Method`] is an unfitted strategy: given training data it produces a
//! fitted [`Scorer`]. The four built-ins are `eknn`, `entropy`, `variance`
//! and `centroid`; external code can register more through
//! [`MethodRegistry::register`].

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::belief::{Frame, MassFunction};
use crate::centroid::{self, CentroidModel};
use crate::data::Scaler;
use crate::eknn::EknnModel;
use crate::ensemble::{
    fit_forest, BaggedEnsemble, DecompositionKind, ForestParams, SplitFeatures, TreeParams,
};
use crate::{Error, Result};

/// What a backend reports for one test instance: the decision, the
/// epistemic and aleatoric components, and (for evidential backends) the
/// fused mass as a diagnostic.
#[derive(Debug, Clone)]
pub struct UncertaintyScore {
    pub predicted: usize,
    pub eu: f64,
    pub au: f64,
    pub mass: Option<MassFunction>,
}

/// A fitted model that can score test instances. Immutable and safe to
/// call concurrently.
pub trait Scorer: Send + Sync {
    fn frame(&self) -> &Frame;
    fn score(&self, x: ArrayView1<'_, f64>) -> Result<UncertaintyScore>;
}

/// An unfitted uncertainty quantification strategy.
pub trait Method: Send + Sync {
    fn name(&self) -> &str;
    /// Fits on the given training data. `seed` drives any training
    /// randomness; deterministic methods may ignore it.
    fn fit(
        &self,
        features: ArrayView2<'_, f64>,
        labels: &[usize],
        frame: &Frame,
        seed: u64,
    ) -> Result<Box<dyn Scorer>>;
}

// ---------------------------------------------------------------------------
// evidential k-NN

pub struct EknnMethod {
    pub k: usize,
    pub alpha0: f64,
    pub gamma: Option<f64>,
}

impl Method for EknnMethod {
    fn name(&self) -> &str {
        "eknn"
    }

    fn fit(
        &self,
        features: ArrayView2<'_, f64>,
        labels: &[usize],
        frame: &Frame,
        _seed: u64,
    ) -> Result<Box<dyn Scorer>> {
        // k is capped at n so the method stays usable on tiny pools
        let k = self.k.min(features.nrows()).max(1);
        let model = EknnModel::fit(
            features.to_owned(),
            labels.to_vec(),
            frame.clone(),
            k,
            self.alpha0,
            self.gamma,
        )?;
        Ok(Box::new(model))
    }
}

impl Scorer for EknnModel {
    fn frame(&self) -> &Frame {
        EknnModel::frame(self)
    }

    fn score(&self, x: ArrayView1<'_, f64>) -> Result<UncertaintyScore> {
        Ok(self.predict_with_uncertainty(x)?)
    }
}

// ---------------------------------------------------------------------------
// bagged trees, entropy or variance reading

pub struct ForestMethod {
    pub params: ForestParams,
    pub kind: DecompositionKind,
}

struct FittedForest {
    model: BaggedEnsemble,
    kind: DecompositionKind,
}

impl Method for ForestMethod {
    fn name(&self) -> &str {
        match self.kind {
            DecompositionKind::Entropy => "entropy",
            DecompositionKind::Variance => "variance",
        }
    }

    fn fit(
        &self,
        features: ArrayView2<'_, f64>,
        labels: &[usize],
        frame: &Frame,
        seed: u64,
    ) -> Result<Box<dyn Scorer>> {
        let model = fit_forest(features, labels, frame, &self.params, seed)?;
        Ok(Box::new(FittedForest {
            model,
            kind: self.kind,
        }))
    }
}

impl Scorer for FittedForest {
    fn frame(&self) -> &Frame {
        self.model.frame()
    }

    fn score(&self, x: ArrayView1<'_, f64>) -> Result<UncertaintyScore> {
        Ok(self.model.score(x, self.kind)?)
    }
}

// ---------------------------------------------------------------------------
// class centroids with RBF scoring

pub struct CentroidMethod {
    pub sigma: f64,
}

impl Method for CentroidMethod {
    fn name(&self) -> &str {
        "centroid"
    }

    fn fit(
        &self,
        features: ArrayView2<'_, f64>,
        labels: &[usize],
        frame: &Frame,
        _seed: u64,
    ) -> Result<Box<dyn Scorer>> {
        let model = centroid::fit_centroids(features, labels, frame, self.sigma)?;
        Ok(Box::new(model))
    }
}

impl Scorer for CentroidModel {
    fn frame(&self) -> &Frame {
        CentroidModel::frame(self)
    }

    fn score(&self, x: ArrayView1<'_, f64>) -> Result<UncertaintyScore> {
        Ok(CentroidModel::score(self, x)?)
    }
}

// ---------------------------------------------------------------------------
// standardization wrapper

/// Wraps a method so training features are standardized per column with
/// training statistics, and queries are transformed with the same scaler.
/// Distance-based backends expect standardized inputs; tree splits are
/// unaffected, so the wrapper is safe to apply uniformly.
pub struct StandardizedMethod {
    inner: Box<dyn Method>,
}

impl StandardizedMethod {
    pub fn new(inner: Box<dyn Method>) -> Self {
        StandardizedMethod { inner }
    }
}

struct StandardizedScorer {
    scaler: Scaler,
    inner: Box<dyn Scorer>,
}

impl Method for StandardizedMethod {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn fit(
        &self,
        features: ArrayView2<'_, f64>,
        labels: &[usize],
        frame: &Frame,
        seed: u64,
    ) -> Result<Box<dyn Scorer>> {
        let scaler = Scaler::fit(features);
        let standardized = scaler.transform(features);
        let inner = self.inner.fit(standardized.view(), labels, frame, seed)?;
        Ok(Box::new(StandardizedScorer { scaler, inner }))
    }
}

impl Scorer for StandardizedScorer {
    fn frame(&self) -> &Frame {
        self.inner.frame()
    }

    fn score(&self, x: ArrayView1<'_, f64>) -> Result<UncertaintyScore> {
        let transformed = self.scaler.transform_row(x);
        self.inner.score(transformed.view())
    }
}

// ---------------------------------------------------------------------------
// configuration and registry

/// Flat, serializable method configuration. Unused fields are ignored by
/// the selected method; every field has the documented default.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodConfig {
    /// Registry key: `eknn`, `entropy`, `variance` or `centroid`.
    pub name: String,
    /// Neighbor count for `eknn`.
    pub k: usize,
    /// Maximum evidence weight of a zero-distance neighbor for `eknn`.
    pub alpha0: f64,
    /// Distance scale for `eknn`; estimated from the data when omitted.
    pub gamma: Option<f64>,
    /// Member count for the forest methods.
    pub trees: usize,
    /// Depth cap for the forest methods; unlimited when omitted.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub split_features: SplitFeatures,
    /// RBF length scale for `centroid`.
    pub sigma: f64,
    /// Standardize features per column (training statistics) before
    /// fitting and scoring.
    pub standardize: bool,
}

impl Default for MethodConfig {
    fn default() -> Self {
        MethodConfig {
            name: "eknn".into(),
            k: 7,
            alpha0: crate::eknn::DEFAULT_ALPHA0,
            gamma: None,
            trees: 100,
            max_depth: Some(4),
            min_samples_leaf: 1,
            split_features: SplitFeatures::Sqrt,
            sigma: centroid::default_sigma(),
            standardize: true,
        }
    }
}

impl MethodConfig {
    pub fn named(name: &str) -> Self {
        MethodConfig {
            name: name.into(),
            ..MethodConfig::default()
        }
    }

    fn forest_params(&self) -> ForestParams {
        ForestParams {
            n_trees: self.trees,
            tree: TreeParams {
                max_depth: self.max_depth,
                min_samples_leaf: self.min_samples_leaf,
                min_samples_split: 2,
            },
            split_features: self.split_features,
        }
    }
}

/// Builds an unwrapped method from a configuration.
pub type MethodBuilder = fn(&MethodConfig) -> Result<Box<dyn Method>>;

/// Name-keyed registry of method builders.
pub struct MethodRegistry {
    builders: BTreeMap<String, MethodBuilder>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        MethodRegistry {
            builders: BTreeMap::new(),
        }
    }

    /// Registry with the four built-in backends.
    pub fn with_defaults() -> Self {
        let mut registry = Self::empty();
        registry.register("eknn", |cfg| {
            Ok(Box::new(EknnMethod {
                k: cfg.k,
                alpha0: cfg.alpha0,
                gamma: cfg.gamma,
            }))
        });
        registry.register("entropy", |cfg| {
            Ok(Box::new(ForestMethod {
                params: cfg.forest_params(),
                kind: DecompositionKind::Entropy,
            }))
        });
        registry.register("variance", |cfg| {
            Ok(Box::new(ForestMethod {
                params: cfg.forest_params(),
                kind: DecompositionKind::Variance,
            }))
        });
        registry.register("centroid", |cfg| {
            Ok(Box::new(CentroidMethod { sigma: cfg.sigma }))
        });
        registry
    }

    pub fn register(&mut self, name: &str, builder: MethodBuilder) {
        self.builders.insert(name.to_string(), builder);
    }

    pub fn names(&self) -> Vec<&str> {
        self.builders.keys().map(String::as_str).collect()
    }

    /// Builds the method selected by `config.name`, honoring
    /// `config.standardize`.
    pub fn build(&self, config: &MethodConfig) -> Result<Box<dyn Method>> {
        let builder = self.builders.get(&config.name).ok_or_else(|| {
            Error::Config(format!(
                "unknown method `{}`; known methods: {}",
                config.name,
                self.names().join(", ")
            ))
        })?;
        let method = builder(config)?;
        if config.standardize {
            Ok(Box::new(StandardizedMethod::new(method)))
        } else {
            Ok(method)
        }
    }
}

impl Default for MethodRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

/// Convenience: accuracy of a fitted scorer on a labeled set.
pub fn accuracy(scorer: &dyn Scorer, features: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    let mut correct = 0usize;
    for (row, &label) in features.rows().into_iter().zip(labels) {
        if scorer.score(row)?.predicted == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

/// Scores every row, returning (eu, au, predicted) triples.
pub fn score_all(
    scorer: &dyn Scorer,
    features: ArrayView2<'_, f64>,
) -> Result<Vec<UncertaintyScore>> {
    features.rows().into_iter().map(|row| scorer.score(row)).collect()
}

/// Owned training matrix assembled from selected rows and columns of a
/// larger table.
pub fn gather(table: ArrayView2<'_, f64>, rows: &[usize], columns: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), columns.len()), |(i, j)| {
        table[(rows[i], columns[j])]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn frame(k: usize) -> Frame {
        Frame::new((0..k).map(|i| format!("c{i}"))).unwrap()
    }

    fn toy_data() -> (Array2<f64>, Vec<usize>) {
        let features = array![
            [0.0, 0.1],
            [0.2, 0.0],
            [0.1, 0.2],
            [5.0, 5.1],
            [5.2, 5.0],
            [5.1, 4.9]
        ];
        (features, vec![0, 0, 0, 1, 1, 1])
    }

    #[test]
    fn registry_lists_builtin_methods() {
        let registry = MethodRegistry::with_defaults();
        assert_eq!(registry.names(), vec!["centroid", "eknn", "entropy", "variance"]);
    }

    #[test]
    fn unknown_method_is_a_config_error() {
        let registry = MethodRegistry::with_defaults();
        let err = match registry.build(&MethodConfig::named("nope")) {
            Err(e) => e,
            Ok(_) => panic!("unknown method must not build"),
        };
        assert_eq!(err.kind(), crate::ErrorKind::Config);
    }

    #[test]
    fn every_builtin_fits_and_scores() {
        let registry = MethodRegistry::with_defaults();
        let (features, labels) = toy_data();
        for name in ["eknn", "entropy", "variance", "centroid"] {
            let mut cfg = MethodConfig::named(name);
            cfg.k = 3;
            let method = registry.build(&cfg).unwrap();
            assert_eq!(method.name(), name);
            let scorer = method.fit(features.view(), &labels, &frame(2), 0).unwrap();
            let score = scorer.score(array![0.1, 0.1].view()).unwrap();
            assert_eq!(score.predicted, 0, "method {name}");
            assert!(score.eu >= 0.0 && score.au >= 0.0);
            let acc = accuracy(scorer.as_ref(), features.view(), &labels).unwrap();
            assert_eq!(acc, 1.0, "method {name}");
        }
    }

    #[test]
    fn registry_accepts_external_methods() {
        struct Constant;
        impl Method for Constant {
            fn name(&self) -> &str {
                "constant"
            }
            fn fit(
                &self,
                _features: ArrayView2<'_, f64>,
                _labels: &[usize],
                frame: &Frame,
                _seed: u64,
            ) -> Result<Box<dyn Scorer>> {
                struct S(Frame);
                impl Scorer for S {
                    fn frame(&self) -> &Frame {
                        &self.0
                    }
                    fn score(&self, _x: ArrayView1<'_, f64>) -> Result<UncertaintyScore> {
                        Ok(UncertaintyScore {
                            predicted: 0,
                            eu: 0.0,
                            au: 0.0,
                            mass: None,
                        })
                    }
                }
                Ok(Box::new(S(frame.clone())))
            }
        }

        let mut registry = MethodRegistry::with_defaults();
        registry.register("constant", |_cfg| Ok(Box::new(Constant)));
        let mut cfg = MethodConfig::named("constant");
        cfg.standardize = false;
        let method = registry.build(&cfg).unwrap();
        let (features, labels) = toy_data();
        let scorer = method.fit(features.view(), &labels, &frame(2), 0).unwrap();
        assert_eq!(scorer.score(features.row(0)).unwrap().predicted, 0);
    }

    #[test]
    fn standardization_changes_distance_based_scores_only() {
        // one dominant-scale column would swamp Euclidean distances
        let features = array![
            [0.0, 1000.0],
            [0.1, 980.0],
            [1.0, 10.0],
            [1.1, 30.0],
            [0.05, 990.0],
            [1.05, 20.0]
        ];
        let labels = vec![0, 0, 1, 1, 0, 1];
        let registry = MethodRegistry::with_defaults();

        let mut raw_cfg = MethodConfig::named("eknn");
        raw_cfg.k = 3;
        raw_cfg.standardize = false;
        let mut std_cfg = raw_cfg.clone();
        std_cfg.standardize = true;

        let raw = registry.build(&raw_cfg).unwrap();
        let std = registry.build(&std_cfg).unwrap();
        let raw_scorer = raw.fit(features.view(), &labels, &frame(2), 0).unwrap();
        let std_scorer = std.fit(features.view(), &labels, &frame(2), 0).unwrap();

        let q = array![0.0, 995.0];
        let raw_score = raw_scorer.score(q.view()).unwrap();
        let std_score = std_scorer.score(q.view()).unwrap();
        assert_eq!(raw_score.predicted, 0);
        assert_eq!(std_score.predicted, 0);
        assert_ne!(raw_score.eu, std_score.eu);
    }

    #[test]
    fn gather_selects_rows_and_columns() {
        let table = array![[0.0, 1.0, 2.0], [3.0, 4.0, 5.0], [6.0, 7.0, 8.0]];
        let sub = gather(table.view(), &[2, 0], &[0, 2]);
        assert_eq!(sub, array![[6.0, 8.0], [0.0, 2.0]]);
    }
}
