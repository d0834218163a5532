//! Multinomial logistic regression on sparse features.
//!
//! Objective: mean cross-entropy against target distributions (one-hot or
//! soft) plus `(l2 / 2)·‖W‖²`; the bias is not penalized. Training is plain
//! full-batch gradient descent from zero weights. The objective is
//! `L`-smooth with `L ≤ max_i (‖x_i‖² + 1) / 2 + l2`, so any learning rate
//! below `2 / L` (see [`stability_bound`]) decreases the loss every epoch.
//!
//! Weights of features that never occur in the training set stay exactly
//! zero, so training runs on the compacted set of active columns.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::features::FeatureVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub l2: f64,
    pub epochs: usize,
    pub seed: u64,
    pub soft_labels: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 0.1, l2: 1e-4, epochs: 500, seed: 0, soft_labels: false }
    }
}

/// A feature vector with its target distribution over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: FeatureVector,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub epochs: usize,
    pub final_loss: f64,
    /// Loss before each update, then the final loss.
    pub loss_trace: Vec<f64>,
    pub seed: u64,
    pub config: TrainConfig,
}

/// `k × dim` weights plus a bias per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SparseModel", try_from = "SparseModel")]
pub struct LinearModel {
    pub k: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub diagnostics: TrainDiagnostics,
}

#[derive(Serialize, Deserialize)]
struct SparseModel {
    k: usize,
    dim: usize,
    bias: Vec<f64>,
    /// Non-zero weights per class as `(index, weight)` pairs.
    rows: Vec<Vec<(u32, f64)>>,
    diagnostics: TrainDiagnostics,
}

impl From<LinearModel> for SparseModel {
    fn from(m: LinearModel) -> Self {
        let rows = (0..m.k)
            .map(|c| {
                m.weights[c * m.dim..(c + 1) * m.dim]
                    .iter()
                    .enumerate()
                    .filter(|(_, &w)| w != 0.0)
                    .map(|(j, &w)| (j as u32, w))
                    .collect()
            })
            .collect();
        SparseModel { k: m.k, dim: m.dim, bias: m.bias, rows, diagnostics: m.diagnostics }
    }
}

impl TryFrom<SparseModel> for LinearModel {
    type Error = Error;

    fn try_from(s: SparseModel) -> Result<Self> {
        if s.rows.len() != s.k || s.bias.len() != s.k {
            return Err(Error::Shape("model rows disagree with k".into()));
        }
        let mut weights = vec![0.0; s.k * s.dim];
        for (c, row) in s.rows.iter().enumerate() {
            for &(j, w) in row {
                if j as usize >= s.dim {
                    return Err(Error::Shape("weight index beyond dim".into()));
                }
                weights[c * s.dim + j as usize] = w;
            }
        }
        Ok(LinearModel { k: s.k, dim: s.dim, weights, bias: s.bias, diagnostics: s.diagnostics })
    }
}

impl LinearModel {
    pub fn logits(&self, x: &FeatureVector) -> Vec<f64> {
        (0..self.k)
            .map(|c| {
                let row = &self.weights[c * self.dim..(c + 1) * self.dim];
                self.bias[c] + x.iter().map(|(j, v)| row[j] * v).sum::<f64>()
            })
            .collect()
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// Argmax class, lowest index on ties.
    pub fn predict(&self, x: &FeatureVector) -> usize {
        let logits = self.logits(x);
        let mut best = 0;
        for c in 1..self.k {
            if logits[c] > logits[best] {
                best = c;
            }
        }
        best
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

/// Objective value and gradients for dense `k × dim` weights (row-major).
pub fn objective(weights: &[f64], bias: &[f64], examples: &[Example], l2: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let k = bias.len();
    let dim = weights.len() / k;
    let n = examples.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = vec![0.0; k];
    let mut logits = vec![0.0; k];
    for ex in examples {
        for c in 0..k {
            let row = &weights[c * dim..(c + 1) * dim];
            logits[c] = bias[c] + ex.features.iter().map(|(j, v)| row[j] * v).sum::<f64>();
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + libm::log(logits.iter().map(|z| libm::exp(z - max)).sum::<f64>());
        for c in 0..k {
            let p = libm::exp(logits[c] - lse);
            let t = ex.target[c];
            if t > 0.0 {
                loss -= t * (logits[c] - lse);
            }
            let r = (p - t) / n;
            gb[c] += r;
            for (j, v) in ex.features.iter() {
                gw[c * dim + j] += r * v;
            }
        }
    }
    loss /= n;
    let mut sq = 0.0;
    for (g, &w) in gw.iter_mut().zip(weights) {
        sq += w * w;
        *g += l2 * w;
    }
    loss += 0.5 * l2 * sq;
    (loss, gw, gb)
}

/// Largest learning rate for which full-batch descent is guaranteed to
/// decrease the objective on `examples`.
pub fn stability_bound(examples: &[Example], l2: f64) -> f64 {
    let max_sq = examples.iter().map(|e| e.features.squared_norm() + 1.0).fold(0.0, f64::max);
    2.0 / (0.5 * max_sq + l2)
}

pub fn train(examples: &[Example], k: usize, dim: usize, config: &TrainConfig) -> Result<LinearModel> {
    if examples.is_empty() {
        return Err(Error::Empty("no training examples".into()));
    }
    for ex in examples {
        if ex.target.len() != k {
            return Err(Error::Shape("target length differs from k".into()));
        }
        if ex.features.dim != dim {
            return Err(Error::Shape("feature dimension differs from model".into()));
        }
    }

    // Compact the active columns.
    let mut active: BTreeMap<u32, usize> = BTreeMap::new();
    for ex in examples {
        for &j in &ex.features.indices {
            let next = active.len();
            active.entry(j).or_insert(next);
        }
    }
    let local: Vec<Example> = examples
        .iter()
        .map(|ex| {
            let mut pairs: Vec<(u32, f64)> = ex.features.iter().map(|(j, v)| (active[&(j as u32)] as u32, v)).collect();
            pairs.sort_by_key(|p| p.0);
            let (indices, values) = pairs.into_iter().unzip();
            Example { features: FeatureVector { dim: active.len(), indices, values }, target: ex.target.clone() }
        })
        .collect();

    let width = active.len().max(1);
    let mut w = vec![0.0; k * width];
    let mut b = vec![0.0; k];
    let mut trace = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..config.epochs {
        let (loss, gw, gb) = objective(&w, &b, &local, config.l2);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        trace.push(loss);
        for (x, g) in w.iter_mut().zip(&gw) {
            *x -= config.lr * g;
        }
        for (x, g) in b.iter_mut().zip(&gb) {
            *x -= config.lr * g;
        }
    }
    let (final_loss, _, _) = objective(&w, &b, &local, config.l2);
    if !final_loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: config.epochs });
    }
    trace.push(final_loss);

    let mut weights = vec![0.0; k * dim];
    for (&j, &col) in &active {
        for c in 0..k {
            weights[c * dim + j as usize] = w[c * width + col];
        }
    }
    Ok(LinearModel {
        k,
        dim,
        weights,
        bias: b,
        diagnostics: TrainDiagnostics {
            epochs: config.epochs,
            final_loss,
            loss_trace: trace,
            seed: config.seed,
            config: config.clone(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(pairs: &[(u32, f64)], dim: usize) -> FeatureVector {
        FeatureVector { dim, indices: pairs.iter().map(|p| p.0).collect(), values: pairs.iter().map(|p| p.1).collect() }
    }

    fn one_hot(c: usize, k: usize) -> Vec<f64> {
        let mut t = vec![0.0; k];
        t[c] = 1.0;
        t
    }

    fn separable() -> Vec<Example> {
        vec![
            Example { features: fv(&[(0, 1.0)], 4), target: one_hot(0, 2) },
            Example { features: fv(&[(0, 1.0), (2, 0.5)], 4), target: one_hot(0, 2) },
            Example { features: fv(&[(1, 1.0)], 4), target: one_hot(1, 2) },
            Example { features: fv(&[(1, 1.0), (3, 0.5)], 4), target: one_hot(1, 2) },
        ]
    }

    #[test]
    fn separable_toy_set() {
        let data = separable();
        let cfg = TrainConfig { lr: 0.5, l2: 0.0, epochs: 200, ..TrainConfig::default() };
        let model = train(&data, 2, 4, &cfg).unwrap();
        for ex in &data {
            let want = if ex.target[0] == 1.0 { 0 } else { 1 };
            assert_eq!(model.predict(&ex.features), want);
        }
        assert!(model.diagnostics.loss_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn heavy_l2_predicts_majority_class() {
        let mut data = separable();
        data.push(Example { features: fv(&[(1, 1.0), (2, 1.0)], 4), target: one_hot(1, 2) });
        let cfg = TrainConfig { lr: 1e-6, l2: 1e6, epochs: 200, ..TrainConfig::default() };
        let model = train(&data, 2, 4, &cfg).unwrap();
        assert!(model.weights.iter().all(|w| w.abs() < 1e-5));
        for ex in &data {
            assert_eq!(model.predict(&ex.features), 1);
        }
    }

    #[test]
    fn shift_invariance() {
        let model = train(&separable(), 2, 4, &TrainConfig::default()).unwrap();
        let mut shifted = model.clone();
        for c in 0..2 {
            for j in 0..4 {
                shifted.weights[c * 4 + j] += [0.3, -1.2, 2.0, 0.7][j];
            }
            shifted.bias[c] += 5.0;
        }
        for ex in separable() {
            assert_eq!(model.predict(&ex.features), shifted.predict(&ex.features));
        }
    }

    #[test]
    fn diverging_run_reports_epoch() {
        let data = vec![Example { features: fv(&[(0, 1e200)], 4), target: one_hot(0, 2) }];
        let err = train(&data, 2, 4, &TrainConfig { lr: 1e10, ..TrainConfig::default() }).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { .. }));
    }

    #[test]
    fn sparse_serialization() {
        let model = train(&separable(), 2, 4, &TrainConfig::default()).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: LinearModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn soft_targets_accepted() {
        let mut data = separable();
        data[0].target = vec![0.7, 0.3];
        let model = train(&data, 2, 4, &TrainConfig::default()).unwrap();
        assert!(model.diagnostics.final_loss.is_finite());
    }
}
