//! Gaussian-blob datasets, view augmentation and stratified subsampling.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetParams {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Radius of the sphere the class centers are placed on.
    pub radius: f64,
    /// Per-coordinate standard deviation of the within-class noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self { classes: 10, per_class: 100, dim: 16, radius: 1.0, noise_sigma: 0.1, seed: 7 }
    }
}

impl DatasetParams {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::invalid(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.per_class == 0 {
            return Err(Error::invalid("per-class count must be positive"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::invalid(format!("radius must be > 0, got {}", self.radius)));
        }
        Ok(())
    }

    /// Total number of points.
    pub fn size(&self) -> usize {
        self.classes * self.per_class
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub params: DatasetParams,
    pub centers: Array2<f64>,
    /// One row per point, grouped by class.
    pub points: Array2<f64>,
    pub labels: Vec<usize>,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn class_centers(p: &DatasetParams) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut centers = Array2::<f64>::zeros((p.classes, p.dim));
    for mut row in centers.rows_mut() {
        loop {
            row.mapv_inplace(|_| StandardNormal.sample(&mut rng));
            let norm = row.dot(&row).sqrt();
            if norm > 1e-12 {
                row *= p.radius / norm;
                break;
            }
        }
    }
    centers
}

fn sample_blobs(p: &DatasetParams, centers: &Array2<f64>, per_class: usize, stream: u64) -> SyntheticDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    rng.set_stream(stream);
    let n = p.classes * per_class;
    let mut points = Array2::<f64>::zeros((n, p.dim));
    let mut labels = Vec::with_capacity(n);
    for c in 0..p.classes {
        for k in 0..per_class {
            let mut row = points.row_mut(c * per_class + k);
            for (x, m) in row.iter_mut().zip(centers.row(c)) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = m + p.noise_sigma * z;
            }
            labels.push(c);
        }
    }
    SyntheticDataset { params: p.clone(), centers: centers.clone(), points, labels }
}

/// Gaussian blobs: centers on a sphere of radius `radius` drawn from `seed`,
/// points = center + N(0, σ²I).
pub fn make_dataset(params: &DatasetParams) -> Result<SyntheticDataset> {
    params.validate()?;
    let centers = class_centers(params);
    Ok(sample_blobs(params, &centers, params.per_class, TRAIN_STREAM))
}

/// Held-out points around the same centers as [`make_dataset`], from an
/// independent noise stream.
pub fn make_test_set(params: &DatasetParams, per_class: usize) -> Result<SyntheticDataset> {
    params.validate()?;
    if per_class == 0 {
        return Err(Error::invalid("test per-class count must be positive"));
    }
    let centers = class_centers(params);
    Ok(sample_blobs(params, &centers, per_class, TEST_STREAM))
}

/// Two independently jittered views of `point`: `point + N(0, σ²I)` each.
pub fn augment(point: ArrayView1<'_, f64>, sigma: f64, seed: u64) -> (Array1<f64>, Array1<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let view = |rng: &mut ChaCha8Rng| point.mapv(|x| x + sigma * Distribution::<f64>::sample(&StandardNormal, rng));
    let a = view(&mut rng);
    let b = view(&mut rng);
    (a, b)
}

/// Rows of a dataset used by one regime, and which of them carry labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Regime {
    /// Dataset row indices, in a seed-dependent order.
    pub indices: Vec<usize>,
    /// Parallel to `indices`.
    pub labeled: Vec<bool>,
}

impl Regime {
    pub fn labeled_count(&self) -> usize {
        self.labeled.iter().filter(|&&l| l).count()
    }
}

/// Class-stratified subsample: `round(n_c · data_fraction)` rows of every
/// class, of which `round(used_c · label_fraction)` are labeled.
pub fn subsample_regime(
    dataset: &SyntheticDataset,
    data_fraction: f64,
    label_fraction: f64,
    seed: u64,
) -> Result<Regime> {
    if !(data_fraction > 0.0 && data_fraction <= 1.0) {
        return Err(Error::invalid(format!("data fraction must lie in (0, 1], got {data_fraction}")));
    }
    if !(0.0..=1.0).contains(&label_fraction) {
        return Err(Error::invalid(format!("label fraction must lie in [0, 1], got {label_fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = dataset.labels.iter().max().map_or(0, |m| m + 1);
    let mut chosen: Vec<(usize, bool)> = Vec::new();
    for c in 0..n_classes {
        let mut rows: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.labels[i] == c).collect();
        if rows.is_empty() {
            continue;
        }
        rows.shuffle(&mut rng);
        let used = (rows.len() as f64 * data_fraction).round() as usize;
        if used == 0 {
            return Err(Error::invalid(format!("data fraction {data_fraction} leaves class {c} empty")));
        }
        let labeled = (used as f64 * label_fraction).round() as usize;
        if label_fraction > 0.0 && labeled == 0 {
            return Err(Error::invalid(format!("label fraction {label_fraction} leaves class {c} unlabeled")));
        }
        chosen.extend(rows[..used].iter().enumerate().map(|(k, &r)| (r, k < labeled)));
    }
    chosen.shuffle(&mut rng);
    Ok(Regime { indices: chosen.iter().map(|c| c.0).collect(), labeled: chosen.iter().map(|c| c.1).collect() })
}
