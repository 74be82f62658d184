//! Greedy selection against exhaustive search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semcast::featuremap::{synth_dataset, SynthSpec};
use semcast::importance::{importance, train_head, ImportanceVector};
use semcast::selector::{select_maps, semantic_entropy_estimate};

/// Smallest subset size whose unselected mass is strictly below `eps`,
/// found by enumerating every subset; `n` when none qualifies.
fn brute_force_min(scores: &[f64], confidence: f64, eps: f64) -> usize {
    let n = scores.len();
    if eps == 0.0 {
        return n;
    }
    let mut best = n;
    for mask in 0u32..(1 << n) {
        let size = mask.count_ones() as usize;
        if size >= best {
            continue;
        }
        let covered: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| scores[i]).sum();
        if confidence - covered < eps {
            best = size;
        }
    }
    best
}

#[test]
fn greedy_prefix_is_minimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..400 {
        let n = rng.random_range(1..=12);
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3)).collect();
        let iv = ImportanceVector::from_raw(raw, rng.random_range(0.3..1.0), 0).unwrap();
        let eps = rng.random_range(0.0..0.6);
        let greedy = select_maps(&iv, eps).unwrap();
        let best = brute_force_min(&iv.scores, iv.confidence, eps);
        assert_eq!(greedy.lambda(), best, "scores {:?}, eps {eps}", iv.scores);
    }
}

#[test]
fn lambda_is_monotone_in_budget() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let grid: Vec<f64> = (0..20).map(|k| k as f64 * 0.05).collect();
    for _ in 0..200 {
        let n = rng.random_range(1..=12);
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let iv = ImportanceVector::from_raw(raw, rng.random_range(0.3..1.0), 0).unwrap();
        let lambdas: Vec<usize> = grid.iter().map(|&e| select_maps(&iv, e).unwrap().lambda()).collect();
        assert!(lambdas.windows(2).all(|w| w[1] <= w[0]), "{lambdas:?}");
    }
}

#[test]
fn skew_one_items_need_few_maps() {
    let data = synth_dataset(&SynthSpec::default()).unwrap();
    let head = train_head(&data, 4, 200, 0.1, 7).unwrap();
    for item in &data {
        let iv = importance(&head, item, None).unwrap();
        assert!(select_maps(&iv, 0.01).unwrap().lambda() <= 4);
    }
    assert_eq!(semantic_entropy_estimate(&data, &head, 0.0).unwrap(), 10.0);
    assert_eq!(semantic_entropy_estimate(&data, &head, 1.0).unwrap(), 0.0);
}
