//! Confidence-threshold pseudo-labeling and the semi-supervised objective.
//!
//! Each unlabeled embedding is scored against every labeled class by its
//! mean cosine similarity to that class; a softmax over those scores at the
//! batch temperature gives the confidence. The argmax class is adopted when
//! the confidence reaches the threshold.

use std::collections::BTreeMap;

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{info_nce_loss, supcon_loss, LossResult, MultiviewBatch};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    /// Assigned class, present only when `confidence >= threshold`.
    pub class: Option<usize>,
    /// Softmax probability of the best-scoring class.
    pub confidence: f64,
}

/// Pseudo-labels `unlabeled` rows against `labeled` rows with known `labels`.
///
/// Ties between classes go to the lowest class id.
pub fn pseudo_label(
    unlabeled: ArrayView2<f64>,
    labeled: ArrayView2<f64>,
    labels: &[usize],
    threshold: f64,
    temperature: f64,
) -> Result<Vec<PseudoLabel>> {
    if labeled.nrows() == 0 {
        return Err(Error::invalid("pseudo-labeling needs at least one labeled embedding"));
    }
    if labels.len() != labeled.nrows() {
        return Err(Error::invalid(format!("{} labels for {} labeled embeddings", labels.len(), labeled.nrows())));
    }
    if unlabeled.nrows() > 0 && unlabeled.ncols() != labeled.ncols() {
        return Err(Error::invalid("labeled and unlabeled embeddings differ in dimension"));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!("threshold must lie in [0, 1], got {threshold}")));
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::invalid(format!("temperature must be > 0, got {temperature}")));
    }

    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (row, &c) in labels.iter().enumerate() {
        members.entry(c).or_default().push(row);
    }
    let sims = unlabeled.dot(&labeled.t());

    Ok(sims
        .axis_iter(Axis(0))
        .map(|s| {
            let scores: Vec<(usize, f64)> = members
                .iter()
                .map(|(&c, rows)| (c, rows.iter().map(|&r| s[r]).sum::<f64>() / rows.len() as f64 / temperature))
                .collect();
            let (best_class, best) = scores
                .iter()
                .copied()
                .fold((usize::MAX, f64::NEG_INFINITY), |acc, (c, v)| if v > acc.1 { (c, v) } else { acc });
            let z: f64 = scores.iter().map(|(_, v)| (v - best).exp()).sum();
            let confidence = 1.0 / z;
            PseudoLabel { class: (confidence >= threshold).then_some(best_class), confidence }
        })
        .collect())
}

/// Loss plus the pseudo-label outcome for each originally unlabeled sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiSupervisedLoss {
    pub loss: LossResult,
    /// Indexed by sample; `None` for samples that carried a true label.
    pub pseudo_labels: Vec<Option<PseudoLabel>>,
}

/// SupCon over samples with true or pseudo labels plus InfoNCE over the
/// remaining samples, each on its own sub-batch, weighted 1:1.
pub fn semi_supervised_loss(batch: &MultiviewBatch, threshold: f64) -> Result<LossResult> {
    semi_supervised_loss_detailed(batch, threshold).map(|r| r.loss)
}

/// As [`semi_supervised_loss`], also reporting the pseudo-label decisions.
///
/// An unlabeled sample is represented by its first view (lower row index);
/// it is compared against both views of every labeled sample. Pseudo-label
/// assignment is treated as constant when differentiating.
pub fn semi_supervised_loss_detailed(batch: &MultiviewBatch, threshold: f64) -> Result<SemiSupervisedLoss> {
    batch.check_temperature()?;
    let labels = batch.labels().ok_or_else(|| Error::invalid("semi-supervised loss needs at least one labeled sample"))?;
    if labels.iter().all(Option::is_none) {
        return Err(Error::invalid("semi-supervised loss needs at least one labeled sample"));
    }

    let n_views = batch.n_views();
    let mut labeled_rows = Vec::new();
    let mut labeled_classes = Vec::new();
    let mut unlabeled_first_view = BTreeMap::new();
    for i in 0..n_views {
        let s = batch.origin(i);
        match labels[s] {
            Some(c) => {
                labeled_rows.push(i);
                labeled_classes.push(c);
            }
            None => {
                unlabeled_first_view.entry(s).or_insert(i);
            }
        }
    }
    let unlabeled_samples: Vec<usize> = unlabeled_first_view.keys().copied().collect();
    let query_rows: Vec<usize> = unlabeled_first_view.values().copied().collect();

    let z = batch.embeddings();
    let pseudo = pseudo_label(
        z.select(Axis(0), &query_rows).view(),
        z.select(Axis(0), &labeled_rows).view(),
        &labeled_classes,
        threshold,
        batch.temperature(),
    )?;

    let mut full_labels = labels.to_vec();
    let mut pseudo_labels = vec![None; batch.n_samples()];
    for (&s, p) in unlabeled_samples.iter().zip(&pseudo) {
        full_labels[s] = p.class;
        pseudo_labels[s] = Some(*p);
    }
    let with_label: Vec<usize> = (0..batch.n_samples()).filter(|&s| full_labels[s].is_some()).collect();
    let without_label: Vec<usize> = (0..batch.n_samples()).filter(|&s| full_labels[s].is_none()).collect();

    let relabeled = batch.clone().with_partial_labels(full_labels)?;
    let mut loss = LossResult::zeros(n_views, batch.dim());

    let (sup_batch, sup_rows) = relabeled.select_samples(&with_label)?;
    let sup = supcon_loss(&sup_batch)?;
    loss.value += sup.value;
    for (k, &r) in sup_rows.iter().enumerate() {
        loss.gradient.row_mut(r).assign(&sup.gradient.row(k));
    }

    if !without_label.is_empty() {
        let (ssl_batch, ssl_rows) = relabeled.select_samples(&without_label)?;
        let ssl = info_nce_loss(&ssl_batch)?;
        loss.value += ssl.value;
        for (k, &r) in ssl_rows.iter().enumerate() {
            loss.gradient.row_mut(r).assign(&ssl.gradient.row(k));
        }
    }

    Ok(SemiSupervisedLoss { loss, pseudo_labels })
}
