//! Contrastive objectives over two-view batches.
//!
//! A batch holds `2N` embeddings: two augmented views of each of `N`
//! samples. For anchor `i`, `j(i)` is its other view, `A(i)` every index but
//! `i`, and `P(i) ⊆ A(i)` its positives: `{j(i)}` when self-supervised, or
//! every view sharing the anchor's class when supervised. Both losses are
//!
//! ```text
//! L = Σ_i  -1/|P(i)| Σ_{p∈P(i)} log( exp(z_i·z_p/τ) / Σ_{a∈A(i)} exp(z_i·z_a/τ) )
//! ```
//!
//! summed (not averaged) over anchors. Gradients are taken with respect to
//! the embeddings as given; callers normalize first with
//! [`MultiviewBatch::normalize`] and compose the normalization Jacobian
//! themselves.

mod losses;
mod pseudo;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use losses::{info_nce_loss, supcon_loss};
pub use pseudo::{pseudo_label, semi_supervised_loss, semi_supervised_loss_detailed, PseudoLabel, SemiSupervisedLoss};

/// `2N` embeddings with their view pairing, optional per-sample labels and
/// a temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiviewBatch {
    embeddings: Array2<f64>,
    pairing: Vec<usize>,
    origin: Vec<usize>,
    labels: Option<Vec<Option<usize>>>,
    temperature: f64,
}

impl MultiviewBatch {
    /// Builds a batch from an explicit pairing `j`. `j` must be an
    /// involution without fixed points over the embedding rows.
    pub fn new(embeddings: Array2<f64>, pairing: Vec<usize>, temperature: f64) -> Result<Self> {
        let n = embeddings.nrows();
        if n == 0 || n % 2 != 0 {
            return Err(Error::invalid(format!("a two-view batch needs an even, nonzero row count, got {n}")));
        }
        if pairing.len() != n {
            return Err(Error::invalid(format!("pairing has {} entries for {n} embeddings", pairing.len())));
        }
        let mut origin = vec![usize::MAX; n];
        let mut next = 0;
        for i in 0..n {
            let j = pairing[i];
            if j >= n || j == i || pairing[j] != i {
                return Err(Error::invalid(format!("pairing is not a fixed-point-free involution at index {i}")));
            }
            if i < j {
                origin[i] = next;
                origin[j] = next;
                next += 1;
            }
        }
        Ok(Self { embeddings, pairing, origin, labels: None, temperature })
    }

    /// Rows `0..N` are the first views, rows `N..2N` the second views.
    pub fn from_views<'a>(first: ArrayView2<'a, f64>, second: ArrayView2<'a, f64>, temperature: f64) -> Result<Self> {
        if first.dim() != second.dim() {
            return Err(Error::invalid("both views must have the same shape"));
        }
        let n = first.nrows();
        let embeddings = ndarray::concatenate(Axis(0), &[first, second]).expect("shapes checked");
        let pairing = (0..2 * n).map(|i| if i < n { i + n } else { i - n }).collect();
        Self::new(embeddings, pairing, temperature)
    }

    /// Attaches a class label to every sample.
    pub fn with_labels(self, labels: Vec<usize>) -> Result<Self> {
        self.with_partial_labels(labels.into_iter().map(Some).collect())
    }

    /// Attaches per-sample labels where `None` marks an unlabeled sample.
    pub fn with_partial_labels(mut self, labels: Vec<Option<usize>>) -> Result<Self> {
        if labels.len() != self.n_samples() {
            return Err(Error::invalid(format!(
                "{} labels for {} samples",
                labels.len(),
                self.n_samples()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn embeddings(&self) -> &Array2<f64> {
        &self.embeddings
    }

    pub fn embedding(&self, i: usize) -> ArrayView1<'_, f64> {
        self.embeddings.row(i)
    }

    pub fn pairing(&self) -> &[usize] {
        &self.pairing
    }

    /// Sample index of view `i`.
    pub fn origin(&self, i: usize) -> usize {
        self.origin[i]
    }

    pub fn labels(&self) -> Option<&[Option<usize>]> {
        self.labels.as_deref()
    }

    /// Class of the sample view `i` belongs to.
    pub fn label_of_view(&self, i: usize) -> Option<usize> {
        self.labels.as_ref().and_then(|l| l[self.origin[i]])
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn n_views(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.embeddings.nrows() / 2
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    /// Copy with every embedding scaled to unit L2 norm.
    pub fn normalize(&self) -> Result<Self> {
        let mut out = self.clone();
        for (i, mut row) in out.embeddings.rows_mut().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::DegenerateEmbedding { index: i });
            }
            row /= norm;
        }
        Ok(out)
    }

    /// Sub-batch holding both views of the given samples (in view order).
    /// Also returns, for each sub-batch row, its row in `self`.
    pub fn select_samples(&self, samples: &[usize]) -> Result<(Self, Vec<usize>)> {
        let mut keep = vec![false; self.n_samples()];
        for &s in samples {
            keep[s] = true;
        }
        let rows: Vec<usize> = (0..self.n_views()).filter(|&i| keep[self.origin[i]]).collect();
        let mut new_index = vec![usize::MAX; self.n_views()];
        for (k, &r) in rows.iter().enumerate() {
            new_index[r] = k;
        }
        let embeddings = self.embeddings.select(Axis(0), &rows);
        let pairing = rows.iter().map(|&r| new_index[self.pairing[r]]).collect();
        let mut sub = Self::new(embeddings, pairing, self.temperature)?;
        if let Some(labels) = &self.labels {
            let mut sub_labels = vec![None; sub.n_samples()];
            for (k, &r) in rows.iter().enumerate() {
                sub_labels[sub.origin[k]] = labels[self.origin[r]];
            }
            sub.labels = Some(sub_labels);
        }
        Ok((sub, rows))
    }

    pub(crate) fn check_temperature(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::invalid(format!("temperature must be > 0, got {}", self.temperature)));
        }
        Ok(())
    }
}

/// Negative and positive index sets of one anchor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorSets {
    /// `A(i)`: every view except the anchor.
    pub negatives: Vec<usize>,
    /// `P(i)`: views treated as positives.
    pub positives: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Supervision {
    /// Positives are the anchor's other view only.
    SelfSupervised,
    /// Positives are all views sharing the anchor's class.
    Supervised,
}

/// `A(i)` and `P(i)` for every anchor.
pub fn build_sets(batch: &MultiviewBatch, mode: Supervision) -> Result<Vec<AnchorSets>> {
    let n = batch.n_views();
    if mode == Supervision::Supervised {
        let labels = batch.labels().ok_or(Error::MissingLabel { sample: 0 })?;
        if let Some(s) = labels.iter().position(Option::is_none) {
            return Err(Error::MissingLabel { sample: s });
        }
    }
    Ok((0..n)
        .map(|i| {
            let negatives: Vec<usize> = (0..n).filter(|&a| a != i).collect();
            let positives = match mode {
                Supervision::SelfSupervised => vec![batch.pairing[i]],
                Supervision::Supervised => {
                    let c = batch.label_of_view(i);
                    negatives.iter().copied().filter(|&a| batch.label_of_view(a) == c).collect()
                }
            };
            AnchorSets { negatives, positives }
        })
        .collect())
}

/// Loss value with its gradient with respect to the embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    /// `2N × d`, same layout as the batch embeddings.
    pub gradient: Array2<f64>,
}

impl LossResult {
    pub fn zeros(n_views: usize, dim: usize) -> Self {
        Self { value: 0.0, gradient: Array2::zeros((n_views, dim)) }
    }

    /// Value divided by the number of anchors.
    pub fn per_anchor_mean(&self) -> f64 {
        self.value / self.gradient.nrows().max(1) as f64
    }
}

/// JSON form of a batch, as read by the `loss-debug` command:
/// `{embeddings: [[..]..], pairing: [..], labels: [..] | null, tau}`.
/// Indices are 0-based; `labels` has one entry per sample (pair), ordered by
/// the lower view index of each pair, and entries may be `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchJson {
    pub embeddings: Vec<Vec<f64>>,
    pub pairing: Vec<usize>,
    #[serde(default)]
    pub labels: Option<Vec<Option<usize>>>,
    pub tau: f64,
}

impl BatchJson {
    pub fn into_batch(self) -> Result<MultiviewBatch> {
        let rows = self.embeddings.len();
        let dim = self.embeddings.first().map_or(0, Vec::len);
        if self.embeddings.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("embeddings must all have the same dimension"));
        }
        let flat: Vec<f64> = self.embeddings.into_iter().flatten().collect();
        let emb = Array2::from_shape_vec((rows, dim), flat).expect("rectangular");
        let batch = MultiviewBatch::new(emb, self.pairing, self.tau)?;
        match self.labels {
            Some(l) => batch.with_partial_labels(l),
            None => Ok(batch),
        }
    }
}
