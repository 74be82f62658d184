//! Task head over pooled feature maps and gradient-based map importance.
//!
//! The head pools every map to its spatial mean, applies a linear layer and
//! a softmax. Importance of map `i` for class `c` sums the ReLU of the logit
//! gradient over all activations of the map, weighted by the pooling factor
//! `1/(H'·W')`, and is then rescaled so that all scores add up to the head's
//! confidence in `c`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{param_err, Error, Result};
use crate::featuremap::FeatureMapSet;

pub const SEMH_MAGIC: &[u8; 4] = b"SEMH";
pub const SEMH_VERSION: u16 = 1;

pub const DEFAULT_EPOCHS: usize = 200;
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;
const INIT_SCALE: f64 = 1e-3;

/// Linear head parameters: `weights[c * n_maps + i]` couples map `i` to class `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    n_classes: usize,
    n_maps: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl HeadParams {
    pub fn new(n_classes: usize, n_maps: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if n_classes == 0 || n_maps == 0 {
            return Err(param_err!("head needs at least one class and one map"));
        }
        if weights.len() != n_classes * n_maps || bias.len() != n_classes {
            return Err(param_err!(
                "head dimensions: {} weights and {} biases for {n_classes}x{n_maps}",
                weights.len(),
                bias.len()
            ));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Data("head parameters must be finite".into()));
        }
        Ok(Self {
            n_classes,
            n_maps,
            weights,
            bias,
        })
    }

    pub fn zeros(n_classes: usize, n_maps: usize) -> Self {
        Self::new(n_classes, n_maps, vec![0.0; n_classes * n_maps], vec![0.0; n_classes])
            .expect("valid zero head")
    }

    /// Seeded small uniform weights and zero bias; the starting point of training.
    pub fn seeded(n_classes: usize, n_maps: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..n_classes * n_maps)
            .map(|_| rng.random_range(-INIT_SCALE..INIT_SCALE))
            .collect();
        Self::new(n_classes, n_maps, weights, vec![0.0; n_classes])
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_maps(&self) -> usize {
        self.n_maps
    }

    pub fn weight(&self, class: usize, map: usize) -> f64 {
        self.weights[class * self.n_maps + map]
    }

    pub fn class_weights(&self, class: usize) -> &[f64] {
        &self.weights[class * self.n_maps..(class + 1) * self.n_maps]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn check_item(&self, item: &FeatureMapSet) -> Result<()> {
        if item.n_maps() != self.n_maps {
            return Err(param_err!(
                "item has {} maps, head expects {}",
                item.n_maps(),
                self.n_maps
            ));
        }
        Ok(())
    }

    fn logits_from_pooled(&self, pooled: &[f64]) -> Vec<f64> {
        (0..self.n_classes)
            .map(|c| {
                self.class_weights(c)
                    .iter()
                    .zip(pooled)
                    .map(|(w, g)| w * g)
                    .sum::<f64>()
                    + self.bias[c]
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(10 + 8 * (self.weights.len() + self.bias.len()));
        out.extend_from_slice(SEMH_MAGIC);
        out.extend_from_slice(&SEMH_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_classes as u16).to_le_bytes());
        out.extend_from_slice(&(self.n_maps as u16).to_le_bytes());
        for v in self.weights.iter().chain(&self.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        if data.len() < 10 || &data[..4] != SEMH_MAGIC {
            return Err(Error::Format("missing \"SEMH\" header".into()));
        }
        let field = |at: usize| usize::from(u16::from_le_bytes([data[at], data[at + 1]]));
        if field(4) != usize::from(SEMH_VERSION) {
            return Err(Error::Format(format!("unsupported head version {}", field(4))));
        }
        let (c, n) = (field(6), field(8));
        let expected = 10 + 8 * (c * n + c);
        if data.len() != expected {
            return Err(Error::Format(format!(
                "head file is {} bytes, expected {expected} for {c}x{n}",
                data.len()
            )));
        }
        let values: Vec<f64> = data[10..]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let (weights, bias) = values.split_at(c * n);
        Self::new(c, n, weights.to_vec(), bias.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if self.n_classes > usize::from(u16::MAX) || self.n_maps > usize::from(u16::MAX) {
            return Err(param_err!("head too large for the SEMH format"));
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data)
    }
}

/// Output of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl HeadOutput {
    /// Most probable class; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

pub fn head_forward(head: &HeadParams, item: &FeatureMapSet) -> Result<HeadOutput> {
    head.check_item(item)?;
    let logits = head.logits_from_pooled(&item.pooled());
    let probs = softmax(&logits);
    Ok(HeadOutput { logits, probs })
}

/// Result of [`train_head_with_history`].
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub head: HeadParams,
    /// Mean cross-entropy before every epoch, plus the final value.
    pub losses: Vec<f64>,
    pub accuracy: f64,
}

pub fn train_head(
    dataset: &[FeatureMapSet],
    n_classes: usize,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<HeadParams> {
    train_head_with_history(dataset, n_classes, epochs, lr, seed).map(|r| r.head)
}

/// Full-batch gradient descent on the mean softmax cross-entropy.
pub fn train_head_with_history(
    dataset: &[FeatureMapSet],
    n_classes: usize,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<TrainReport> {
    let first = dataset.first().ok_or_else(|| param_err!("cannot train on an empty dataset"))?;
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(param_err!("learning rate must be positive, got {lr}"));
    }
    let n_maps = first.n_maps();
    if let Some(bad) = dataset.iter().find(|d| d.n_maps() != n_maps) {
        return Err(param_err!("item {} has {} maps, expected {n_maps}", bad.source_id, bad.n_maps()));
    }
    if let Some(bad) = dataset.iter().find(|d| d.label() >= n_classes) {
        return Err(param_err!("label {} outside {n_classes} classes", bad.label()));
    }
    let pooled: Vec<Vec<f64>> = dataset.iter().map(FeatureMapSet::pooled).collect();
    let labels: Vec<usize> = dataset.iter().map(FeatureMapSet::label).collect();
    let mut head = HeadParams::seeded(n_classes, n_maps, seed)?;
    let scale = 1.0 / dataset.len() as f64;
    let mut losses = Vec::with_capacity(epochs + 1);

    for _ in 0..epochs {
        let mut grad_w = vec![0.0; n_classes * n_maps];
        let mut grad_b = vec![0.0; n_classes];
        let mut loss = 0.0;
        for (x, &y) in pooled.iter().zip(&labels) {
            let probs = softmax(&head.logits_from_pooled(x));
            loss -= probs[y].ln();
            for c in 0..n_classes {
                let delta = probs[c] - if c == y { 1.0 } else { 0.0 };
                grad_b[c] += delta;
                for (g, xi) in grad_w[c * n_maps..(c + 1) * n_maps].iter_mut().zip(x) {
                    *g += delta * xi;
                }
            }
        }
        losses.push(loss * scale);
        for (w, g) in head.weights.iter_mut().zip(&grad_w) {
            *w -= lr * g * scale;
        }
        for (b, g) in head.bias.iter_mut().zip(&grad_b) {
            *b -= lr * g * scale;
        }
    }

    let mut loss = 0.0;
    let mut correct = 0usize;
    for (x, &y) in pooled.iter().zip(&labels) {
        let probs = softmax(&head.logits_from_pooled(x));
        loss -= probs[y].ln();
        correct += usize::from(argmax(&probs) == y);
    }
    losses.push(loss * scale);
    Ok(TrainReport {
        head,
        losses,
        accuracy: correct as f64 * scale,
    })
}

/// Fraction of items whose argmax prediction equals their label.
pub fn accuracy(head: &HeadParams, dataset: &[FeatureMapSet]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(param_err!("empty dataset"));
    }
    let mut correct = 0usize;
    for item in dataset {
        correct += usize::from(head_forward(head, item)?.argmax() == item.label());
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Per-map importance for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceVector {
    /// Normalized scores; they sum to `confidence`.
    pub scores: Vec<f64>,
    /// Unnormalized pooled-ReLU gradient mass per map.
    pub raw: Vec<f64>,
    /// Head probability of `class`.
    pub confidence: f64,
    pub class: usize,
}

impl ImportanceVector {
    /// Builds a vector from raw magnitudes, normalizing them to `confidence`.
    /// An all-zero raw vector spreads the confidence evenly.
    pub fn from_raw(raw: Vec<f64>, confidence: f64, class: usize) -> Result<Self> {
        if raw.is_empty() {
            return Err(param_err!("importance needs at least one map"));
        }
        if raw.iter().any(|v| !v.is_finite()) || !confidence.is_finite() {
            return Err(Error::Data("non-finite importance input".into()));
        }
        let magnitudes: Vec<f64> = raw.iter().map(|v| v.abs()).collect();
        let total: f64 = magnitudes.iter().sum();
        let scores = if total > 0.0 {
            magnitudes.iter().map(|m| m / total * confidence).collect()
        } else {
            vec![confidence / raw.len() as f64; raw.len()]
        };
        Ok(Self {
            scores,
            raw: magnitudes,
            confidence,
            class,
        })
    }

    pub fn n_maps(&self) -> usize {
        self.scores.len()
    }
}

/// Gradient of logit `class` with respect to every activation, map by map.
pub fn logit_gradient(head: &HeadParams, item: &FeatureMapSet, class: usize) -> Result<Vec<Vec<f64>>> {
    head.check_item(item)?;
    if class >= head.n_classes {
        return Err(param_err!("class {class} outside {} classes", head.n_classes));
    }
    let cells = item.map_len() as f64;
    Ok(head
        .class_weights(class)
        .iter()
        .map(|w| vec![w / cells; item.map_len()])
        .collect())
}

fn pooled_relu_sum(gradient: &[Vec<f64>], cells: usize) -> Vec<f64> {
    let alpha = 1.0 / cells as f64;
    gradient
        .iter()
        .map(|g| g.iter().map(|d| alpha * d.max(0.0)).sum())
        .collect()
}

/// Importance of every map for `class`, or for the head's prediction when
/// `class` is `None`.
pub fn importance(head: &HeadParams, item: &FeatureMapSet, class: Option<usize>) -> Result<ImportanceVector> {
    let out = head_forward(head, item)?;
    let class = class.unwrap_or_else(|| out.argmax());
    let gradient = logit_gradient(head, item, class)?;
    let raw = pooled_relu_sum(&gradient, item.map_len());
    ImportanceVector::from_raw(raw, out.probs[class], class)
}

/// Raw importance computed from central finite differences of the logit.
///
/// Every activation is perturbed by `±step` in double precision and the
/// logit is re-evaluated from scratch, so the result is independent of
/// [`logit_gradient`].
pub fn importance_fd_oracle(head: &HeadParams, item: &FeatureMapSet, class: usize, step: f64) -> Result<Vec<f64>> {
    head.check_item(item)?;
    if class >= head.n_classes {
        return Err(param_err!("class {class} outside {} classes", head.n_classes));
    }
    if !(step > 0.0) {
        return Err(param_err!("finite-difference step must be positive"));
    }
    let mut maps: Vec<Vec<f64>> = item
        .maps()
        .iter()
        .map(|m| m.iter().map(|&v| f64::from(v)).collect())
        .collect();
    let logit = |maps: &[Vec<f64>]| -> f64 {
        maps.iter()
            .enumerate()
            .map(|(i, m)| head.weight(class, i) * (m.iter().sum::<f64>() / m.len() as f64))
            .sum::<f64>()
            + head.bias[class]
    };
    let cells = item.map_len();
    let alpha = 1.0 / cells as f64;
    let mut raw = vec![0.0; maps.len()];
    for i in 0..maps.len() {
        for cell in 0..cells {
            let orig = maps[i][cell];
            maps[i][cell] = orig + step;
            let up = logit(&maps);
            maps[i][cell] = orig - step;
            let down = logit(&maps);
            maps[i][cell] = orig;
            raw[i] += alpha * ((up - down) / (2.0 * step)).max(0.0);
        }
    }
    Ok(raw)
}
