//! Semantic-entropy-constrained map selection.
//!
//! Maps are taken in descending score order until the confidence not yet
//! covered by the selected scores drops strictly below the budget `epsilon`.
//! With nonnegative scores the shortest such prefix is also a smallest subset
//! meeting the constraint.

use crate::error::{param_err, Result};
use crate::featuremap::FeatureMapSet;
use crate::importance::{importance, HeadParams, ImportanceVector};

/// Maps chosen for transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Selected map indices, highest score first (ties by ascending index).
    pub indices: Vec<usize>,
    /// Confidence minus the selected scores.
    pub residual: f64,
    pub epsilon: f64,
}

impl Selection {
    /// Number of selected maps.
    pub fn lambda(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Map indices sorted by descending score, ties by ascending index.
pub fn score_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

pub fn select_maps(iv: &ImportanceVector, epsilon: f64) -> Result<Selection> {
    if !(epsilon >= 0.0) {
        return Err(param_err!("epsilon must be nonnegative, got {epsilon}"));
    }
    let order = score_order(&iv.scores);
    let mut residual = iv.confidence;
    let mut indices = Vec::new();
    // a zero budget means every map; rounding could otherwise push the
    // residual below zero once the positive scores are used up
    for idx in order {
        if epsilon > 0.0 && residual < epsilon {
            break;
        }
        residual -= iv.scores[idx];
        indices.push(idx);
    }
    Ok(Selection {
        indices,
        residual,
        epsilon,
    })
}

/// Mean number of selected maps over a dataset, each item scored for the
/// head's predicted class.
pub fn semantic_entropy_estimate(dataset: &[FeatureMapSet], head: &HeadParams, epsilon: f64) -> Result<f64> {
    if dataset.is_empty() {
        return Err(param_err!("semantic entropy needs a nonempty dataset"));
    }
    let mut total = 0usize;
    for item in dataset {
        let iv = importance(head, item, None)?;
        total += select_maps(&iv, epsilon)?.lambda();
    }
    Ok(total as f64 / dataset.len() as f64)
}

/// Mean of per-item selection sizes.
pub fn mean_lambda(lambdas: &[usize]) -> Result<f64> {
    if lambdas.is_empty() {
        return Err(param_err!("no selections to average"));
    }
    Ok(lambdas.iter().sum::<usize>() as f64 / lambdas.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use proptest::prelude::*;

    fn iv(scores: &[f64], confidence: f64) -> ImportanceVector {
        ImportanceVector {
            scores: scores.to_vec(),
            raw: scores.to_vec(),
            confidence,
            class: 0,
        }
    }

    #[test]
    fn boundary_residual_takes_one_more_map() {
        let s = select_maps(&iv(&[0.5, 0.3, 0.15, 0.05], 1.0), 0.2).unwrap();
        assert_eq!(s.indices, vec![0, 1, 2]);
        assert_eq!(s.lambda(), 3);
        assert!((s.residual - 0.05).abs() < 1e-12);
    }

    #[test]
    fn zero_budget_selects_everything() {
        let s = select_maps(&iv(&[0.1, 0.4, 0.2, 0.3], 1.0), 0.0).unwrap();
        assert_eq!(s.indices, vec![1, 3, 2, 0]);
        // zero scores after an inexact sum still go out
        let s = select_maps(&iv(&[0.7, 0.2, 0.1, 0.0, 0.0], 1.0 - 1e-16), 0.0).unwrap();
        assert_eq!(s.lambda(), 5);
    }

    #[test]
    fn budget_above_confidence_selects_nothing() {
        let s = select_maps(&iv(&[0.6, 0.3], 0.9), 0.95).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.residual, 0.9);
    }

    #[test]
    fn ties_break_by_index() {
        let s = select_maps(&iv(&[0.25; 4], 1.0), 0.3).unwrap();
        assert_eq!(s.indices, vec![0, 1, 2]);
    }

    #[test]
    fn negative_budget_is_rejected() {
        assert!(matches!(select_maps(&iv(&[1.0], 1.0), -0.1), Err(Error::Parameter(_))));
    }

    #[test]
    fn mean_of_lambdas() {
        assert_eq!(mean_lambda(&[3, 5]).unwrap(), 4.0);
        assert!(mean_lambda(&[]).is_err());
    }

    proptest! {
        #[test]
        fn selection_invariants(
            raw in proptest::collection::vec(0.0f64..1.0, 1..12),
            confidence in 0.05f64..1.0,
            eps in 0.0f64..1.0,
        ) {
            let v = ImportanceVector::from_raw(raw, confidence, 0).unwrap();
            let s = select_maps(&v, eps).unwrap();
            let n = v.n_maps();
            prop_assert!(s.residual < eps || s.lambda() == n);
            let mut seen = s.indices.clone();
            seen.sort_unstable();
            seen.dedup();
            prop_assert_eq!(seen.len(), s.lambda());
            for w in s.indices.windows(2) {
                let (a, b) = (v.scores[w[0]], v.scores[w[1]]);
                prop_assert!(a > b || (a == b && w[0] < w[1]));
            }
            if s.lambda() >= 1 && s.residual < eps {
                let before_last = s.indices[..s.lambda() - 1]
                    .iter()
                    .fold(v.confidence, |r, &i| r - v.scores[i]);
                prop_assert!(before_last >= eps);
            }
        }
    }
}
