//! Similarity-weighted kNN evaluation of learned representations.
//!
//! Each test embedding votes among its `k` most similar training embeddings
//! (cosine similarity); a neighbour contributes `exp(sim / τ)` to its class.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 15;
pub const DEFAULT_TAU: f64 = 0.1;

const UNIT_NORM_TOLERANCE: f64 = 1e-9;

/// Unit-norm embeddings with one class id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbeddingSet {
    vectors: Array2<f64>,
    labels: Vec<usize>,
}

impl LabeledEmbeddingSet {
    /// Requires every row to already have unit norm.
    pub fn new(vectors: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if vectors.nrows() != labels.len() {
            return Err(Error::invalid(format!("{} vectors but {} labels", vectors.nrows(), labels.len())));
        }
        for (i, row) in vectors.axis_iter(Axis(0)).enumerate() {
            let norm = row.dot(&row).sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::invalid(format!("vector {i} has norm {norm}, expected 1")));
            }
        }
        Ok(Self { vectors, labels })
    }

    /// Scales every row to unit norm first.
    pub fn normalized(mut vectors: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        for (i, mut row) in vectors.axis_iter_mut(Axis(0)).enumerate() {
            let norm = row.dot(&row).sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::DegenerateEmbedding { index: i });
            }
            row /= norm;
        }
        Self::new(vectors, labels)
    }

    pub fn vectors(&self) -> ArrayView2<'_, f64> {
        self.vectors.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Predicted class for every test vector.
///
/// Neighbour ties in similarity go to the lower training index; score ties
/// between classes go to the lowest class id.
pub fn knn_predict(train: &LabeledEmbeddingSet, test: &LabeledEmbeddingSet, k: usize, tau: f64) -> Result<Vec<usize>> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid("kNN evaluation needs nonempty train and test sets"));
    }
    if k == 0 || k > train.len() {
        return Err(Error::invalid(format!("k must lie in 1..={}, got {k}", train.len())));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid(format!("tau must be > 0, got {tau}")));
    }
    if train.vectors.ncols() != test.vectors.ncols() {
        return Err(Error::invalid("train and test embeddings differ in dimension"));
    }

    let sims = test.vectors.dot(&train.vectors.t());
    let mut order: Vec<usize> = Vec::with_capacity(train.len());
    Ok(sims
        .axis_iter(Axis(0))
        .map(|row| {
            order.clear();
            order.extend(0..train.len());
            let by_sim = |a: &usize, b: &usize| row[*b].total_cmp(&row[*a]).then(a.cmp(b));
            if k < order.len() {
                order.select_nth_unstable_by(k - 1, by_sim);
                order.truncate(k);
            }
            let top = order.iter().map(|&i| row[i]).fold(f64::NEG_INFINITY, f64::max);
            let mut scores: BTreeMap<usize, f64> = BTreeMap::new();
            for &i in &order {
                *scores.entry(train.labels[i]).or_insert(0.0) += ((row[i] - top) / tau).exp();
            }
            scores
                .into_iter()
                .fold((usize::MAX, f64::NEG_INFINITY), |best, (c, s)| if s > best.1 { (c, s) } else { best })
                .0
        })
        .collect())
}

/// Percentage of test vectors whose predicted class matches their label.
pub fn knn_accuracy(train: &LabeledEmbeddingSet, test: &LabeledEmbeddingSet, k: usize, tau: f64) -> Result<f64> {
    let predicted = knn_predict(train, test, k, tau)?;
    let correct = predicted.iter().zip(&test.labels).filter(|(p, l)| p == l).count();
    Ok(100.0 * correct as f64 / test.len() as f64)
}
