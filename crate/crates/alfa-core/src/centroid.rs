//! Centroid density backend: one mean centroid per class, scored with a
//! radial basis function.
//!
//! The RBF certainty to the nearest centroid acts as epistemic certainty
//! (the model has seen data like this), so `eu = 1 - max_y U_y`. Aleatoric
//! uncertainty is the Shannon entropy of the kernel values normalized by
//! their sum — ambiguity between classes makes several centroids equally
//! close and the entropy large.

use ndarray::{Array2, ArrayView1, ArrayView2};
use thiserror::Error;

use crate::backend::UncertaintyScore;
use crate::belief::Frame;

/// Default RBF length scale.
pub fn default_sigma() -> f64 {
    0.1f64.sqrt()
}

#[derive(Debug, Error)]
pub enum CentroidError {
    #[error("class `{0}` has no training rows; cannot place its centroid")]
    MissingClass(String),
    #[error("feature dimension mismatch: model has {expected}, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label index {label} outside frame of {classes} classes")]
    LabelOutsideFrame { label: usize, classes: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: {rows} feature rows vs {labels} labels")]
    ShapeMismatch { rows: usize, labels: usize },
}

/// Per-class mean centroids with a shared RBF length scale.
#[derive(Debug, Clone)]
pub struct CentroidModel {
    centroids: Array2<f64>,
    sigma: f64,
    frame: Frame,
}

/// Places one centroid per frame class at the mean of that class's rows.
pub fn fit_centroids(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    frame: &Frame,
    sigma: f64,
) -> Result<CentroidModel, CentroidError> {
    if features.nrows() != labels.len() {
        return Err(CentroidError::ShapeMismatch {
            rows: features.nrows(),
            labels: labels.len(),
        });
    }
    if sigma <= 0.0 {
        return Err(CentroidError::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let k = frame.len();
    let mut centroids = Array2::zeros((k, features.ncols()));
    let mut counts = vec![0usize; k];
    for (row, &label) in features.rows().into_iter().zip(labels) {
        if label >= k {
            return Err(CentroidError::LabelOutsideFrame { label, classes: k });
        }
        counts[label] += 1;
        let mut target = centroids.row_mut(label);
        target += &row;
    }
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(CentroidError::MissingClass(frame.label(c).to_string()));
        }
        let mut row = centroids.row_mut(c);
        row /= count as f64;
    }
    Ok(CentroidModel {
        centroids,
        sigma,
        frame: frame.clone(),
    })
}

impl CentroidModel {
    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn centroids(&self) -> ArrayView2<'_, f64> {
        self.centroids.view()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    fn check_dim(&self, x: ArrayView1<'_, f64>) -> Result<(), CentroidError> {
        if x.len() != self.dim() {
            return Err(CentroidError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn log_kernel(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>, CentroidError> {
        self.check_dim(x)?;
        Ok(self
            .centroids
            .rows()
            .into_iter()
            .map(|e| {
                let d2: f64 = e
                    .iter()
                    .zip(x.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                -d2 / (2.0 * self.sigma * self.sigma)
            })
            .collect())
    }

    /// Kernel value per class: `U_y = exp(-||x - e_y||² / (2σ²))`, each in
    /// (0, 1] for finite inputs (down to f64 underflow).
    pub fn rbf_certainty(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>, CentroidError> {
        Ok(self.log_kernel(x)?.into_iter().map(f64::exp).collect())
    }

    /// eu = 1 - max_y U_y, au = entropy of U/ΣU, predicted = nearest
    /// centroid's class (ties to the lowest class index).
    ///
    /// The normalization runs in log space so the entropy stays defined
    /// even when every raw kernel value underflows.
    pub fn score(&self, x: ArrayView1<'_, f64>) -> Result<UncertaintyScore, CentroidError> {
        let logs = self.log_kernel(x)?;
        let mut predicted = 0;
        for (c, v) in logs.iter().enumerate().skip(1) {
            if *v > logs[predicted] {
                predicted = c;
            }
        }
        let max_log = logs[predicted];
        let weights: Vec<f64> = logs.iter().map(|l| (l - max_log).exp()).collect();
        let total: f64 = weights.iter().sum();
        let au = -weights
            .iter()
            .map(|w| {
                let p = w / total;
                if p > 0.0 {
                    p * p.log2()
                } else {
                    0.0
                }
            })
            .sum::<f64>();
        Ok(UncertaintyScore {
            predicted,
            eu: 1.0 - max_log.exp(),
            au,
            mass: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn frame(k: usize) -> Frame {
        Frame::new((0..k).map(|i| format!("c{i}"))).unwrap()
    }

    #[test]
    fn one_point_per_class_centroids_are_the_points() {
        let x = array![[0.0, 0.0], [4.0, 4.0]];
        let model = fit_centroids(x.view(), &[0, 1], &frame(2), 1.0).unwrap();
        assert_eq!(model.centroids().row(0).to_vec(), vec![0.0, 0.0]);
        assert_eq!(model.centroids().row(1).to_vec(), vec![4.0, 4.0]);
    }

    #[test]
    fn centroid_is_the_class_mean() {
        let x = array![[0.0, 0.0], [2.0, 0.0], [9.0, 9.0]];
        let model = fit_centroids(x.view(), &[0, 0, 1], &frame(2), 1.0).unwrap();
        assert_eq!(model.centroids().row(0).to_vec(), vec![1.0, 0.0]);
    }

    #[test]
    fn row_order_does_not_matter() {
        let x = array![[0.0, 1.0], [2.0, 3.0], [4.0, 5.0], [6.0, 7.0]];
        let a = fit_centroids(x.view(), &[0, 1, 0, 1], &frame(2), 1.0).unwrap();
        let shuffled = array![[6.0, 7.0], [4.0, 5.0], [2.0, 3.0], [0.0, 1.0]];
        let b = fit_centroids(shuffled.view(), &[1, 0, 1, 0], &frame(2), 1.0).unwrap();
        assert_eq!(a.centroids(), b.centroids());
    }

    #[test]
    fn missing_class_is_an_error() {
        let x = array![[0.0], [1.0]];
        assert!(matches!(
            fit_centroids(x.view(), &[0, 0], &frame(2), 1.0),
            Err(CentroidError::MissingClass(_))
        ));
        assert!(matches!(
            fit_centroids(x.view(), &[0, 1], &frame(2), 0.0),
            Err(CentroidError::InvalidParameter(_))
        ));
    }

    #[test]
    fn kernel_values() {
        let x = array![[0.0, 0.0], [10.0, 0.0]];
        let sigma = 2.0;
        let model = fit_centroids(x.view(), &[0, 1], &frame(2), sigma).unwrap();

        // at the centroid the kernel is exactly one
        let u = model.rbf_certainty(array![0.0, 0.0].view()).unwrap();
        assert_eq!(u[0], 1.0);

        // at distance sigma * sqrt(2) the kernel is e^{-1}
        let d = sigma * 2.0f64.sqrt();
        let u = model.rbf_certainty(array![d, 0.0].view()).unwrap();
        assert!((u[0] - (-1.0f64).exp()).abs() <= 1e-12);

        assert!(u.iter().all(|v| *v > 0.0 && *v <= 1.0));
    }

    #[test]
    fn on_centroid_far_from_others_is_certain() {
        let x = array![[0.0, 0.0], [100.0, 100.0], [-100.0, 100.0]];
        let model = fit_centroids(x.view(), &[0, 1, 2], &frame(3), 1.0).unwrap();
        let score = model.score(array![0.0, 0.0].view()).unwrap();
        assert_eq!(score.predicted, 0);
        assert!(score.eu <= 1e-12);
        assert!(score.au <= 1e-9);
    }

    #[test]
    fn equidistant_query_is_maximally_ambiguous() {
        let x = array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let model = fit_centroids(x.view(), &[0, 1, 2, 3], &frame(4), 1.0).unwrap();
        let score = model.score(array![0.0, 0.0].view()).unwrap();
        assert!((score.au - 2.0).abs() <= 1e-12); // log2 4
        assert_eq!(score.predicted, 0); // tie rule
    }

    #[test]
    fn binary_entropy_example() {
        // U = (1, e^{-1}) after placing the query on centroid 0 at distance
        // sigma*sqrt(2) from centroid 1
        let sigma = 1.0;
        let d = sigma * 2.0f64.sqrt();
        let x = array![[0.0], [d]];
        let model = fit_centroids(x.view(), &[0, 1], &frame(2), sigma).unwrap();
        let score = model.score(array![0.0].view()).unwrap();
        assert!(score.eu.abs() <= 1e-12);
        let p = 1.0 / (1.0 + (-1.0f64).exp());
        let expected = -(p * p.log2() + (1.0 - p) * (1.0 - p).log2());
        assert!((score.au - expected).abs() <= 1e-12);
        assert!((score.au - 0.84).abs() <= 5e-3);
    }

    #[test]
    fn translation_and_joint_scaling_invariance() {
        let x = array![[0.0, 1.0], [3.0, 2.0], [1.0, -1.0], [4.0, 0.0]];
        let labels = [0, 1, 0, 1];
        let sigma = 0.7;
        let model = fit_centroids(x.view(), &labels, &frame(2), sigma).unwrap();
        let q = array![0.5, 0.5];
        let base = model.score(q.view()).unwrap();

        let shift = array![10.0, -20.0];
        let translated = &x + &shift.broadcast((4, 2)).unwrap();
        let model_t = fit_centroids(translated.view(), &labels, &frame(2), sigma).unwrap();
        let score_t = model_t.score((&q + &shift).view()).unwrap();
        assert_eq!(base.predicted, score_t.predicted);
        assert!((base.eu - score_t.eu).abs() <= 1e-9);
        assert!((base.au - score_t.au).abs() <= 1e-9);

        let c = 5.5;
        let model_s = fit_centroids((&x * c).view(), &labels, &frame(2), sigma * c).unwrap();
        let score_s = model_s.score((&q * c).view()).unwrap();
        assert_eq!(base.predicted, score_s.predicted);
        assert!((base.eu - score_s.eu).abs() <= 1e-9);
        assert!((base.au - score_s.au).abs() <= 1e-9);
    }

    #[test]
    fn predicted_class_is_nearest_centroid() {
        let x = array![[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]];
        let model = fit_centroids(x.view(), &[0, 1, 2], &frame(3), 1.0).unwrap();
        for (q, want) in [
            (array![0.4, 0.1], 0),
            (array![4.0, 1.0], 1),
            (array![1.0, 4.5], 2),
        ] {
            assert_eq!(model.score(q.view()).unwrap().predicted, want);
        }
    }

    #[test]
    fn bounds_hold() {
        let x = array![[0.0, 0.0], [1.0, 1.0]];
        let model = fit_centroids(x.view(), &[0, 1], &frame(2), 0.3).unwrap();
        // close enough that the kernel stays above f64 epsilon; farther out
        // eu rounds to exactly 1
        for q in [array![0.2, 0.9], array![-1.0, 0.5], array![1.5, 1.8]] {
            let s = model.score(q.view()).unwrap();
            assert!(s.eu >= 0.0 && s.eu < 1.0);
            assert!(s.au >= 0.0 && s.au <= 1.0 + 1e-12); // log2 K, K = 2
        }
    }

    #[test]
    fn score_survives_kernel_underflow() {
        // raw kernels underflow to zero this far out, but the log-space
        // normalization keeps the score finite and ordered
        let x = array![[0.0, 0.0], [1.0, 1.0]];
        let model = fit_centroids(x.view(), &[0, 1], &frame(2), 0.3).unwrap();
        let s = model.score(array![500.0, -500.0].view()).unwrap();
        assert_eq!(s.predicted, 0);
        assert!(s.au.is_finite() && s.au >= 0.0);
        assert!((0.0..=1.0).contains(&s.eu));
    }

    #[test]
    fn dimension_mismatch() {
        let x = array![[0.0, 0.0], [1.0, 1.0]];
        let model = fit_centroids(x.view(), &[0, 1], &frame(2), 1.0).unwrap();
        assert!(matches!(
            model.rbf_certainty(array![1.0].view()),
            Err(CentroidError::DimensionMismatch { .. })
        ));
    }
}
