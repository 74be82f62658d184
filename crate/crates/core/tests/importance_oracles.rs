//! Analytic importance against finite differences, and the trained head on
//! the constructed dataset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semcast::featuremap::{synth_dataset, FeatureMapSet, SynthSpec};
use semcast::importance::{importance, importance_fd_oracle, train_head_with_history, HeadParams};
use semcast::selector::score_order;

fn random_instance(rng: &mut ChaCha8Rng) -> (HeadParams, FeatureMapSet, usize) {
    let n_classes = rng.random_range(2..6);
    let n_maps = rng.random_range(1..9);
    let (h, w) = (rng.random_range(1..6), rng.random_range(1..6));
    let weights = (0..n_classes * n_maps).map(|_| rng.random_range(-2.0..2.0)).collect();
    let bias = (0..n_classes).map(|_| rng.random_range(-1.0..1.0)).collect();
    let head = HeadParams::new(n_classes, n_maps, weights, bias).unwrap();
    let maps = (0..n_maps)
        .map(|_| (0..h * w).map(|_| rng.random_range(-3.0f32..3.0)).collect())
        .collect();
    let item = FeatureMapSet::new(h, w, maps, 0, "random").unwrap();
    let class = rng.random_range(0..n_classes);
    (head, item, class)
}

#[test]
fn analytic_importance_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100 {
        let (head, item, class) = random_instance(&mut rng);
        let analytic = importance(&head, &item, Some(class)).unwrap().raw;
        let oracle = importance_fd_oracle(&head, &item, class, 1e-3).unwrap();
        for (a, o) in analytic.iter().zip(&oracle) {
            let scale = o.abs().max(1e-12);
            assert!((a - o).abs() / scale <= 1e-4 || (a - o).abs() < 1e-12, "case {case}: {a} vs {o}");
        }
    }
}

fn skew1() -> Vec<FeatureMapSet> {
    synth_dataset(&SynthSpec {
        skew: 1.0,
        seed: 7,
        ..SynthSpec::default()
    })
    .unwrap()
}

#[test]
fn trained_head_reaches_high_accuracy() {
    let data = skew1();
    let report = train_head_with_history(&data, 4, 200, 0.1, 7).unwrap();
    assert!(report.accuracy >= 0.9, "accuracy {}", report.accuracy);
}

#[test]
fn top_four_maps_hold_the_importance_mass() {
    let data = skew1();
    let head = train_head_with_history(&data, 4, 200, 0.1, 7).unwrap().head;
    for item in &data {
        let class = importance(&head, item, None).unwrap().class;
        let raw = importance_fd_oracle(&head, item, class, 1e-3).unwrap();
        let total: f64 = raw.iter().sum();
        let top: f64 = score_order(&raw).iter().take(4).map(|&i| raw[i]).sum();
        assert!(top >= 0.95 * total, "{}: {top} of {total}", item.source_id);
    }
}
