//! Evidential k-nearest-neighbors backend.
//!
//! Each of the k nearest training points is treated as an evidence source
//! asserting its own class, discounted toward ignorance with the distance
//! kernel `alpha0 * exp(-(d/gamma)^2)`. The k simple-support masses are
//! fused with Dempster's rule; epistemic uncertainty is the non-specificity
//! of the fused mass and aleatoric uncertainty its discord.
//!
//! The fusion uses a closed-form product expression over per-class
//! discounting factors; it equals iterated pairwise combination (within
//! floating-point noise) and never hits total conflict because every source
//! keeps strictly positive mass on the full frame when `alpha0 < 1`.

use std::collections::HashSet;
use std::io::{self, Read, Write};

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::backend::UncertaintyScore;
use crate::belief::{Frame, MassFunction, Subset};

/// Pair budget used when `fit` estimates gamma itself.
pub const DEFAULT_PAIR_BUDGET: usize = 1_000_000;

/// When the exact pair count exceeds the budget, gamma is re-estimated by
/// sampling only every this many insertions.
pub const GAMMA_REFRESH_INTERVAL: usize = 64;

/// Default maximum evidence weight of a zero-distance neighbor.
pub const DEFAULT_ALPHA0: f64 = 0.95;

#[derive(Debug, Error)]
pub enum EknnError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("k = {k} exceeds training size n = {n}")]
    KLargerThanTrainingSet { k: usize, n: usize },
    #[error("feature dimension mismatch: model has {expected}, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("all points coincide; mean pairwise distance is zero, supply gamma explicitly")]
    DegenerateData,
    #[error("label index {label} outside frame of {classes} classes")]
    LabelOutsideFrame { label: usize, classes: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: {rows} feature rows vs {labels} labels")]
    ShapeMismatch { rows: usize, labels: usize },
    #[error("model blob is corrupt: {0}")]
    CorruptModel(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Mean Euclidean distance between training points, the distance scale of
/// the discounting kernel.
///
/// Exact when the number of unordered pairs fits in `pair_budget`;
/// otherwise the mean over `pair_budget` distinct pairs sampled uniformly
/// with the given seed.
pub fn estimate_gamma(
    features: ArrayView2<'_, f64>,
    pair_budget: usize,
    seed: u64,
) -> Result<f64, EknnError> {
    let n = features.nrows();
    if n < 2 {
        return Err(EknnError::InvalidParameter(
            "gamma estimation needs at least two points".into(),
        ));
    }
    if pair_budget == 0 {
        return Err(EknnError::InvalidParameter("pair budget must be positive".into()));
    }
    let total_pairs = n * (n - 1) / 2;
    let mean = if total_pairs <= pair_budget {
        let mut sum = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                sum += distance(features.row(i), features.row(j));
            }
        }
        sum / total_pairs as f64
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen: HashSet<(u32, u32)> = HashSet::with_capacity(pair_budget);
        let mut sum = 0.0;
        while seen.len() < pair_budget {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b {
                continue;
            }
            let pair = (a.min(b) as u32, a.max(b) as u32);
            if seen.insert(pair) {
                sum += distance(features.row(pair.0 as usize), features.row(pair.1 as usize));
            }
        }
        sum / pair_budget as f64
    };
    if mean == 0.0 {
        return Err(EknnError::DegenerateData);
    }
    Ok(mean)
}

fn distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Fitted evidential k-NN model. Immutable; [`EknnModel::add_labeled`]
/// returns a grown copy.
#[derive(Debug, Clone)]
pub struct EknnModel {
    features: Array2<f64>,
    labels: Vec<usize>,
    frame: Frame,
    k: usize,
    alpha0: f64,
    gamma: f64,
    inserts_since_estimate: usize,
}

impl EknnModel {
    /// Stores the training data. When `gamma` is omitted it is estimated
    /// from the data with [`estimate_gamma`] under the default pair budget.
    pub fn fit(
        features: Array2<f64>,
        labels: Vec<usize>,
        frame: Frame,
        k: usize,
        alpha0: f64,
        gamma: Option<f64>,
    ) -> Result<Self, EknnError> {
        let n = features.nrows();
        if n == 0 {
            return Err(EknnError::EmptyTrainingSet);
        }
        if labels.len() != n {
            return Err(EknnError::ShapeMismatch {
                rows: n,
                labels: labels.len(),
            });
        }
        if k == 0 {
            return Err(EknnError::InvalidParameter("k must be at least 1".into()));
        }
        if k > n {
            return Err(EknnError::KLargerThanTrainingSet { k, n });
        }
        if !(alpha0 > 0.0 && alpha0 < 1.0) {
            return Err(EknnError::InvalidParameter(format!(
                "alpha0 must lie in (0, 1), got {alpha0}"
            )));
        }
        for &label in &labels {
            if label >= frame.len() {
                return Err(EknnError::LabelOutsideFrame {
                    label,
                    classes: frame.len(),
                });
            }
        }
        let gamma = match gamma {
            Some(g) if g > 0.0 => g,
            Some(g) => {
                return Err(EknnError::InvalidParameter(format!(
                    "gamma must be positive, got {g}"
                )))
            }
            None => estimate_gamma(features.view(), DEFAULT_PAIR_BUDGET, 0)?,
        };
        Ok(EknnModel {
            features,
            labels,
            frame,
            k,
            alpha0,
            gamma,
            inserts_since_estimate: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    fn check_dim(&self, x: ArrayView1<'_, f64>) -> Result<(), EknnError> {
        if x.len() != self.dim() {
            return Err(EknnError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Indices and distances of the k nearest training points, ascending by
    /// distance with ties broken by lower training index.
    fn nearest(&self, x: ArrayView1<'_, f64>) -> Vec<(f64, usize)> {
        let mut order: Vec<(f64, usize)> = (0..self.n())
            .map(|i| (distance(self.features.row(i), x), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        order.truncate(self.k);
        order
    }

    fn evidence_weight(&self, d: f64) -> f64 {
        let z = d / self.gamma;
        self.alpha0 * (-z * z).exp()
    }

    /// The k neighbors as discounted simple-support masses, nearest first.
    pub fn neighbor_masses(
        &self,
        x: ArrayView1<'_, f64>,
    ) -> Result<Vec<(f64, MassFunction)>, EknnError> {
        self.check_dim(x)?;
        Ok(self
            .nearest(x)
            .into_iter()
            .map(|(d, i)| {
                let alpha = self.evidence_weight(d);
                let mass = MassFunction::simple_support(self.frame.clone(), self.labels[i], alpha)
                    .expect("alpha lies in (0, 1)");
                (d, mass)
            })
            .collect())
    }

    /// Fuses the k neighbor masses and reads the decision and both
    /// uncertainty components off the result.
    pub fn predict_with_uncertainty(
        &self,
        x: ArrayView1<'_, f64>,
    ) -> Result<UncertaintyScore, EknnError> {
        self.check_dim(x)?;
        let neighbors = self.nearest(x);
        let classes = self.frame.len();

        // Closed-form fusion: per class, q_c = prod over class-c neighbors
        // of (1 - alpha_i). Picking one focal element per source and
        // intersecting leaves only singletons and the full frame:
        //   m({c}) ∝ (1 - q_c) * prod_{c' != c} q_{c'},   m(Ω) ∝ prod_c q_c.
        let mut ignore = vec![1.0f64; classes];
        for &(d, i) in &neighbors {
            ignore[self.labels[i]] *= 1.0 - self.evidence_weight(d);
        }
        let all_ignore: f64 = ignore.iter().product();
        let mut unnorm = vec![0.0f64; classes];
        let mut total = all_ignore;
        for c in 0..classes {
            if ignore[c] < 1.0 {
                let mut v = 1.0 - ignore[c];
                for (other, q) in ignore.iter().enumerate() {
                    if other != c {
                        v *= q;
                    }
                }
                unnorm[c] = v;
                total += v;
            }
        }
        // alpha0 < 1 keeps every source's mass on Ω positive, so the fused
        // core always contains Ω and total conflict cannot occur.
        assert!(total > 0.0, "evidential fusion lost all mass");

        let mut entries: Vec<(Subset, f64)> = unnorm
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(c, v)| (Subset::singleton(c), v / total))
            .collect();
        entries.push((self.frame.full_set(), all_ignore / total));
        let mass = MassFunction::new(self.frame.clone(), entries)
            .expect("closed-form fusion yields a normalized mass");

        let predicted = mass.pignistic().argmax();
        Ok(UncertaintyScore {
            predicted,
            eu: mass.non_specificity(),
            au: mass.discord(),
            mass: Some(mass),
        })
    }

    /// Returns a new model with `(x, y)` appended.
    ///
    /// Gamma refresh policy: recomputed exactly while the pair count fits
    /// the default budget, otherwise re-estimated by sampling every
    /// [`GAMMA_REFRESH_INTERVAL`] insertions.
    pub fn add_labeled(&self, x: ArrayView1<'_, f64>, y: usize) -> Result<Self, EknnError> {
        self.check_dim(x)?;
        if y >= self.frame.len() {
            return Err(EknnError::LabelOutsideFrame {
                label: y,
                classes: self.frame.len(),
            });
        }
        let n = self.n() + 1;
        let mut features = Array2::zeros((n, self.dim()));
        features
            .slice_mut(ndarray::s![..n - 1, ..])
            .assign(&self.features);
        features.row_mut(n - 1).assign(&x);
        let mut labels = self.labels.clone();
        labels.push(y);

        let (gamma, inserts) = if n * (n - 1) / 2 <= DEFAULT_PAIR_BUDGET {
            (
                estimate_gamma(features.view(), DEFAULT_PAIR_BUDGET, 0)?,
                0,
            )
        } else if self.inserts_since_estimate + 1 >= GAMMA_REFRESH_INTERVAL {
            (
                estimate_gamma(features.view(), DEFAULT_PAIR_BUDGET, n as u64)?,
                0,
            )
        } else {
            (self.gamma, self.inserts_since_estimate + 1)
        };

        Ok(EknnModel {
            features,
            labels,
            frame: self.frame.clone(),
            k: self.k,
            alpha0: self.alpha0,
            gamma,
            inserts_since_estimate: inserts,
        })
    }

    /// Writes the model as a flat little-endian binary blob with a
    /// versioned header, for harness caching.
    pub fn save<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.n() as u32).to_le_bytes())?;
        w.write_all(&(self.dim() as u32).to_le_bytes())?;
        w.write_all(&(self.k as u32).to_le_bytes())?;
        w.write_all(&(self.frame.len() as u32).to_le_bytes())?;
        w.write_all(&self.alpha0.to_le_bytes())?;
        w.write_all(&self.gamma.to_le_bytes())?;
        w.write_all(&(self.inserts_since_estimate as u64).to_le_bytes())?;
        for label in self.frame.labels() {
            let bytes = label.as_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(bytes)?;
        }
        for &label in &self.labels {
            w.write_all(&(label as u32).to_le_bytes())?;
        }
        for value in self.features.iter() {
            w.write_all(&value.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a model written by [`EknnModel::save`].
    pub fn load<R: Read>(r: &mut R) -> Result<Self, EknnError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(EknnError::CorruptModel("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(EknnError::CorruptModel(format!(
                "unsupported format version {version}"
            )));
        }
        let n = read_u32(r)? as usize;
        let dim = read_u32(r)? as usize;
        let k = read_u32(r)? as usize;
        let classes = read_u32(r)? as usize;
        let alpha0 = read_f64(r)?;
        let gamma = read_f64(r)?;
        let inserts = read_u64(r)? as usize;
        let mut names = Vec::with_capacity(classes);
        for _ in 0..classes {
            let len = read_u32(r)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            names.push(
                String::from_utf8(buf)
                    .map_err(|_| EknnError::CorruptModel("label not utf-8".into()))?,
            );
        }
        let frame =
            Frame::new(names).map_err(|e| EknnError::CorruptModel(format!("bad frame: {e}")))?;
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            labels.push(read_u32(r)? as usize);
        }
        let mut values = Vec::with_capacity(n * dim);
        for _ in 0..n * dim {
            values.push(read_f64(r)?);
        }
        let features = Array2::from_shape_vec((n, dim), values)
            .map_err(|e| EknnError::CorruptModel(e.to_string()))?;
        let mut model = Self::fit(features, labels, frame, k, alpha0, Some(gamma))?;
        model.inserts_since_estimate = inserts;
        Ok(model)
    }
}

const MAGIC: &[u8; 4] = b"EKNN";
const FORMAT_VERSION: u32 = 1;

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
