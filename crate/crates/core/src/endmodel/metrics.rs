use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// F1 of the positive class; present iff the class space names one.
    pub f1_binary: Option<f64>,
    pub f1_macro: f64,
    pub n_test: usize,
    pub per_class: Vec<ClassMetrics>,
}

impl EvalReport {
    /// The headline number: binary F1 when a positive class exists,
    /// accuracy otherwise.
    pub fn headline(&self) -> f64 {
        self.f1_binary.unwrap_or(self.accuracy)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, per-class precision/recall/F1 and macro F1. F1 is 0 whenever
/// precision + recall is 0.
pub fn evaluate_predictions(
    predicted: &[usize],
    gold: &[usize],
    k: usize,
    positive_class: Option<usize>,
) -> Result<EvalReport> {
    if predicted.len() != gold.len() {
        return Err(Error::Shape(format!("{} predictions for {} gold labels", predicted.len(), gold.len())));
    }
    if gold.is_empty() {
        return Err(Error::Empty("evaluation needs at least one labeled point".into()));
    }
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fneg = vec![0usize; k];
    let mut correct = 0;
    for (&p, &g) in predicted.iter().zip(gold) {
        if p >= k || g >= k {
            return Err(Error::VoteOutOfRange { vote: p.max(g) as i64, k });
        }
        if p == g {
            tp[p] += 1;
            correct += 1;
        } else {
            fp[p] += 1;
            fneg[g] += 1;
        }
    }
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let precision = ratio(tp[c], tp[c] + fp[c]);
            let recall = ratio(tp[c], tp[c] + fneg[c]);
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            ClassMetrics { precision, recall, f1, support: tp[c] + fneg[c] }
        })
        .collect();
    let f1_macro = per_class.iter().map(|m| m.f1).sum::<f64>() / k as f64;
    Ok(EvalReport {
        accuracy: ratio(correct, gold.len()),
        f1_binary: positive_class.map(|c| per_class[c].f1),
        f1_macro,
        n_test: gold.len(),
        per_class,
    })
}
