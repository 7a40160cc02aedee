mod common;

use clenergy::harness::{make_dataset, make_test_set, DatasetParams};
use clenergy::knn::{knn_accuracy, knn_predict, LabeledEmbeddingSet};
use common::{brute_knn, random_orthogonal, rng};
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn raw_blobs_are_nearly_perfectly_separable() {
    let p = DatasetParams { classes: 10, per_class: 100, noise_sigma: 0.1, ..Default::default() };
    let train = make_dataset(&p).unwrap();
    let test = make_test_set(&p, 50).unwrap();
    let tr = LabeledEmbeddingSet::normalized(train.points.clone(), train.labels.clone()).unwrap();
    let te = LabeledEmbeddingSet::normalized(test.points.clone(), test.labels.clone()).unwrap();
    let acc = knn_accuracy(&tr, &te, 15, 0.1).unwrap();
    assert!(acc >= 99.0, "raw kNN accuracy {acc}");
}

#[test]
fn two_class_means_match_exhaustive_oracle() {
    let mut r = rng(11);
    let mut train = Vec::new();
    for (c, cx) in [(0usize, 1.0f64), (1, -1.0)] {
        for _ in 0..5 {
            train.push((vec![cx + r.gen_range(-0.2..0.2), r.gen_range(-0.2..0.2)], c));
        }
    }
    let queries = [vec![1.0, 0.0], vec![-1.0, 0.0]];
    let expected: Vec<usize> = queries.iter().map(|q| brute_knn(&train, q, 3, 0.1)).collect();
    assert_eq!(expected, vec![0, 1]);

    let tv = Array2::from_shape_fn((10, 2), |(i, k)| train[i].0[k]);
    let tr = LabeledEmbeddingSet::normalized(tv, train.iter().map(|t| t.1).collect()).unwrap();
    let te = LabeledEmbeddingSet::normalized(array![[1.0, 0.0], [-1.0, 0.0]], vec![0, 1]).unwrap();
    assert_eq!(knn_predict(&tr, &te, 3, 0.1).unwrap(), expected);
    assert_eq!(knn_accuracy(&tr, &te, 3, 0.1).unwrap(), 100.0);
}

fn random_set(seed: u64, n: usize, d: usize, classes: usize) -> (Array2<f64>, Vec<usize>) {
    let mut r = rng(seed);
    (Array2::from_shape_fn((n, d), |_| r.gen_range(-1.0..1.0)), (0..n).map(|_| r.gen_range(0..classes)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn agrees_with_exhaustive_oracle(seed in any::<u64>(), k in 1usize..8) {
        let (x, y) = random_set(seed, 12, 3, 3);
        let (q, qy) = random_set(seed ^ 1, 5, 3, 3);
        let train: Vec<(Vec<f64>, usize)> = x.rows().into_iter().zip(&y).map(|(r, &c)| (r.to_vec(), c)).collect();
        let tr = LabeledEmbeddingSet::normalized(x, y).unwrap();
        let te = LabeledEmbeddingSet::normalized(q.clone(), qy).unwrap();
        let got = knn_predict(&tr, &te, k, 0.5).unwrap();
        for (i, row) in q.rows().into_iter().enumerate() {
            prop_assert_eq!(got[i], brute_knn(&train, &row.to_vec(), k, 0.5));
        }
    }

    #[test]
    fn rotation_invariant(seed in any::<u64>()) {
        let (x, y) = random_set(seed, 20, 4, 4);
        let (q, qy) = random_set(seed ^ 2, 8, 4, 4);
        let rot = random_orthogonal(&mut rng(seed ^ 3), 4);
        let a = knn_predict(
            &LabeledEmbeddingSet::normalized(x.clone(), y.clone()).unwrap(),
            &LabeledEmbeddingSet::normalized(q.clone(), qy.clone()).unwrap(),
            5,
            0.1,
        ).unwrap();
        let b = knn_predict(
            &LabeledEmbeddingSet::normalized(x.dot(&rot), y).unwrap(),
            &LabeledEmbeddingSet::normalized(q.dot(&rot), qy).unwrap(),
            5,
            0.1,
        ).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn accuracy_in_range_and_deterministic(seed in any::<u64>()) {
        let (x, y) = random_set(seed, 15, 3, 3);
        let (q, qy) = random_set(seed ^ 4, 6, 3, 3);
        let tr = LabeledEmbeddingSet::normalized(x, y).unwrap();
        let te = LabeledEmbeddingSet::normalized(q, qy).unwrap();
        let a = knn_accuracy(&tr, &te, 4, 0.1).unwrap();
        prop_assert!((0.0..=100.0).contains(&a));
        prop_assert_eq!(a, knn_accuracy(&tr, &te, 4, 0.1).unwrap());
    }

    #[test]
    fn huge_tau_full_k_is_majority(seed in any::<u64>()) {
        let (x, y) = random_set(seed, 11, 3, 2);
        let (q, qy) = random_set(seed ^ 5, 4, 3, 2);
        let majority = usize::from(y.iter().filter(|&&c| c == 1).count() > y.iter().filter(|&&c| c == 0).count());
        let tr = LabeledEmbeddingSet::normalized(x, y).unwrap();
        let te = LabeledEmbeddingSet::normalized(q, qy).unwrap();
        prop_assert!(knn_predict(&tr, &te, 11, 1e6).unwrap().iter().all(|&p| p == majority));
    }
}
