//! Independent reference implementations used as test oracles. None of
//! these call into the crate's numerical code.

#![allow(dead_code)]

use clenergy::contrastive::MultiviewBatch;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-3 {
                break v.iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

/// A random batch of `2n` unit rows, view `i` paired with view `i + n`.
pub struct RandomBatch {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub tau: f64,
}

impl RandomBatch {
    pub fn draw(rng: &mut ChaCha8Rng, max_n: usize, max_d: usize, classes: usize) -> Self {
        let n = rng.gen_range(1..=max_n);
        let d = rng.gen_range(2..=max_d);
        let tau = if rng.gen_bool(0.5) { 0.1 } else { 0.5 };
        Self { rows: unit_rows(rng, 2 * n, d), labels: (0..n).map(|_| rng.gen_range(0..classes)).collect(), tau }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn partner(&self, i: usize) -> usize {
        let n = self.n();
        if i < n {
            i + n
        } else {
            i - n
        }
    }

    pub fn label_of_view(&self, i: usize) -> usize {
        self.labels[i % self.n()]
    }

    pub fn batch(&self) -> MultiviewBatch {
        self.batch_from(&self.rows)
    }

    pub fn batch_from(&self, rows: &[Vec<f64>]) -> MultiviewBatch {
        let d = rows[0].len();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let all = Array2::from_shape_vec((rows.len(), d), flat).unwrap();
        let n = self.n();
        let pairing: Vec<usize> = (0..2 * n).map(|i| self.partner(i)).collect();
        MultiviewBatch::new(all, pairing, self.tau).unwrap()
    }

    pub fn labeled_batch(&self) -> MultiviewBatch {
        self.batch().with_labels(self.labels.clone()).unwrap()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `-Σ_i (1/|P(i)|) Σ_{p∈P(i)} log( exp(s_ip) / Σ_{a≠i} exp(s_ia) )`,
/// computed literally.
fn literal_loss(rows: &[Vec<f64>], tau: f64, positives: impl Fn(usize) -> Vec<usize>) -> f64 {
    let m = rows.len();
    let mut total = 0.0;
    for i in 0..m {
        let denom: f64 = (0..m).filter(|&a| a != i).map(|a| (dot(&rows[i], &rows[a]) / tau).exp()).sum();
        let pos = positives(i);
        let mut s = 0.0;
        for p in &pos {
            s += ((dot(&rows[i], &rows[*p]) / tau).exp() / denom).ln();
        }
        total -= s / pos.len() as f64;
    }
    total
}

pub fn oracle_info_nce(b: &RandomBatch, rows: &[Vec<f64>]) -> f64 {
    literal_loss(rows, b.tau, |i| vec![b.partner(i)])
}

pub fn oracle_supcon(b: &RandomBatch, rows: &[Vec<f64>]) -> f64 {
    let m = rows.len();
    literal_loss(rows, b.tau, |i| (0..m).filter(|&p| p != i && b.label_of_view(p) == b.label_of_view(i)).collect())
}

/// Componentwise relative error with an absolute floor for near-zero
/// components.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-2)
}

/// Central differences of `f` at `x`, step `h`, over every component.
pub fn central_diff(x: &Array2<f64>, h: f64, mut f: impl FnMut(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut g = Array2::zeros(x.raw_dim());
    for idx in 0..x.len() {
        let (i, k) = (idx / x.ncols(), idx % x.ncols());
        let mut p = x.clone();
        p[[i, k]] += h;
        let mut m = x.clone();
        m[[i, k]] -= h;
        g[[i, k]] = (f(&p) - f(&m)) / (2.0 * h);
    }
    g
}

pub fn max_rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| rel_err(*x, *y)).fold(0.0, f64::max)
}

/// Exhaustive Pareto check on (accuracy, energy) pairs: indices of points no
/// other point weakly dominates.
pub fn brute_pareto(points: &[(f64, f64)]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !(0..points.len()).any(|j| {
                let (ai, ei) = points[i];
                let (aj, ej) = points[j];
                j != i && aj >= ai && ej <= ei && (aj > ai || ej < ei)
            })
        })
        .collect()
}

/// Exhaustive kNN: sorts every training point by similarity (ties by index),
/// sums `exp(sim/τ)` per class over the first `k`, takes the best class
/// (ties by smallest id).
pub fn brute_knn(train: &[(Vec<f64>, usize)], query: &[f64], k: usize, tau: f64) -> usize {
    let norm = |v: &[f64]| dot(v, v).sqrt();
    let q: Vec<f64> = query.iter().map(|x| x / norm(query)).collect();
    let mut sims: Vec<(f64, usize, usize)> = train
        .iter()
        .enumerate()
        .map(|(i, (v, c))| (dot(&q, &v.iter().map(|x| x / norm(v)).collect::<Vec<_>>()), i, *c))
        .collect();
    sims.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let classes = train.iter().map(|t| t.1).max().unwrap() + 1;
    let mut score = vec![0.0; classes];
    for (s, _, c) in &sims[..k] {
        score[*c] += (s / tau).exp();
    }
    let mut best = 0;
    for c in 1..classes {
        if score[c] > score[best] {
            best = c;
        }
    }
    best
}

/// A random orthogonal matrix from Gram-Schmidt on Gaussian-ish columns.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((d, d));
    let mut k = 0;
    while k < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for j in 0..k {
            let c: f64 = (0..d).map(|i| v[i] * q[[i, j]]).sum();
            for i in 0..d {
                v[i] -= c * q[[i, j]];
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n < 1e-6 {
            continue;
        }
        for i in 0..d {
            q[[i, k]] = v[i] / n;
        }
        k += 1;
    }
    q
}

pub mod meter;
