use ndarray::Array2;

use super::{build_sets, LossResult, MultiviewBatch, Supervision};
use crate::error::Result;

/// Self-supervised InfoNCE: the positive of anchor `i` is its other view.
pub fn info_nce_loss(batch: &MultiviewBatch) -> Result<LossResult> {
    batch.check_temperature()?;
    let sets = build_sets(batch, Supervision::SelfSupervised)?;
    let positives: Vec<Vec<usize>> = sets.into_iter().map(|s| s.positives).collect();
    Ok(contrastive_kernel(batch, &positives))
}

/// Supervised contrastive loss with the `1/|P(i)|` average outside the log.
pub fn supcon_loss(batch: &MultiviewBatch) -> Result<LossResult> {
    batch.check_temperature()?;
    let sets = build_sets(batch, Supervision::Supervised)?;
    let positives: Vec<Vec<usize>> = sets.into_iter().map(|s| s.positives).collect();
    Ok(contrastive_kernel(batch, &positives))
}

/// Shared evaluation for both objectives. For anchor `i`,
///
/// ```text
/// term_i = LSE_{a≠i}(s_ia) − mean_{p∈P(i)} s_ip,     s_ia = z_i·z_a / τ
/// ```
///
/// and with `W_ia = softmax_a(s_i·)[a] − 1[a∈P(i)]/|P(i)|` (zero diagonal)
/// the gradient is `(W + Wᵀ) Z / τ`.
fn contrastive_kernel(batch: &MultiviewBatch, positives: &[Vec<usize>]) -> LossResult {
    let z = batch.embeddings();
    let n = z.nrows();
    let tau = batch.temperature();
    let logits = z.dot(&z.t()) / tau;
    let mut weights = Array2::<f64>::zeros((n, n));
    let mut value = 0.0;

    for i in 0..n {
        let row = logits.row(i);
        let max = (0..n).filter(|&a| a != i).map(|a| row[a]).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for a in (0..n).filter(|&a| a != i) {
            let e = (row[a] - max).exp();
            weights[[i, a]] = e;
            sum += e;
        }
        let lse = max + sum.ln();
        for a in (0..n).filter(|&a| a != i) {
            weights[[i, a]] /= sum;
        }

        let pos = &positives[i];
        let inv = 1.0 / pos.len() as f64;
        let pos_sum: f64 = pos.iter().map(|&p| row[p]).sum();
        value += lse - pos_sum * inv;
        for &p in pos {
            weights[[i, p]] -= inv;
        }
    }

    let sym = &weights + &weights.t();
    let gradient = sym.dot(z) / tau;
    LossResult { value, gradient }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrastive::Supervision;
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(n: usize, d: usize, tau: f64, seed: u64) -> MultiviewBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
        let b = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
        MultiviewBatch::from_views(a.view(), b.view(), tau).unwrap().normalize().unwrap()
    }

    /// Direct double loop, no stabilization.
    fn brute(batch: &MultiviewBatch, mode: Supervision) -> f64 {
        let n = batch.n_views();
        let tau = batch.temperature();
        let dot = |i: usize, j: usize| batch.embedding(i).dot(&batch.embedding(j));
        let mut total = 0.0;
        for i in 0..n {
            let denom: f64 = (0..n).filter(|&a| a != i).map(|a| (dot(i, a) / tau).exp()).sum();
            let pos: Vec<usize> = match mode {
                Supervision::SelfSupervised => vec![batch.pairing()[i]],
                Supervision::Supervised => (0..n)
                    .filter(|&p| p != i && batch.label_of_view(p) == batch.label_of_view(i))
                    .collect(),
            };
            let s: f64 = pos.iter().map(|&p| ((dot(i, p) / tau).exp() / denom).ln()).sum();
            total += -s / pos.len() as f64;
        }
        total
    }

    #[test]
    fn single_pair_is_zero() {
        let b = random_batch(1, 4, 0.1, 3);
        let r = info_nce_loss(&b).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.gradient.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn identical_embeddings_give_four_ln3() {
        let e = array![[1.0, 0.0], [1.0, 0.0]];
        let b = MultiviewBatch::from_views(e.view(), e.view(), 0.1).unwrap();
        assert_relative_eq!(info_nce_loss(&b).unwrap().value, 4.0 * 3f64.ln(), max_relative = 1e-12);
        let b = b.with_labels(vec![0, 0]).unwrap();
        assert_relative_eq!(supcon_loss(&b).unwrap().value, 4.0 * 3f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn matches_brute_force() {
        let b = random_batch(3, 5, 0.1, 11);
        assert_relative_eq!(
            info_nce_loss(&b).unwrap().value,
            brute(&b, Supervision::SelfSupervised),
            max_relative = 1e-9
        );
        let b = random_batch(3, 5, 0.5, 12).with_labels(vec![0, 0, 1]).unwrap();
        assert_relative_eq!(supcon_loss(&b).unwrap().value, brute(&b, Supervision::Supervised), max_relative = 1e-9);
    }

    #[test]
    fn distinct_labels_reduce_to_info_nce() {
        let b = random_batch(4, 6, 0.5, 5).with_labels(vec![3, 1, 0, 2]).unwrap();
        let s = supcon_loss(&b).unwrap();
        let i = info_nce_loss(&b).unwrap();
        assert_eq!(s.value, i.value);
        assert_eq!(s.gradient, i.gradient);
    }

    #[test]
    fn no_overflow_at_low_temperature() {
        let e = array![[1.0, 0.0], [0.0, 1.0]];
        let b = MultiviewBatch::from_views(e.view(), e.view(), 1e-3).unwrap();
        let r = info_nce_loss(&b).unwrap();
        assert!(r.value.is_finite());
        assert!(r.gradient.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn rejects_bad_temperature_and_missing_labels() {
        let b = random_batch(2, 3, 0.0, 1);
        assert!(info_nce_loss(&b).is_err());
        let b = random_batch(2, 3, 0.1, 1);
        assert!(supcon_loss(&b).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let b = random_batch(3, 4, 0.5, 21).with_labels(vec![1, 0, 1]).unwrap();
        let analytic = supcon_loss(&b).unwrap().gradient;
        let h = 1e-5;
        for i in 0..b.n_views() {
            for k in 0..b.dim() {
                let mut e = b.embeddings().clone();
                e[[i, k]] += h;
                let plus = MultiviewBatch::new(e.clone(), b.pairing().to_vec(), 0.5)
                    .unwrap()
                    .with_labels(vec![1, 0, 1])
                    .unwrap();
                e[[i, k]] -= 2.0 * h;
                let minus = MultiviewBatch::new(e, b.pairing().to_vec(), 0.5)
                    .unwrap()
                    .with_labels(vec![1, 0, 1])
                    .unwrap();
                let fd = (supcon_loss(&plus).unwrap().value - supcon_loss(&minus).unwrap().value) / (2.0 * h);
                assert!((fd - analytic[[i, k]]).abs() < 1e-6, "({i},{k}) fd {fd} vs {}", analytic[[i, k]]);
            }
        }
    }
}
