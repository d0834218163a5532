use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::{infer, DevSet, FitConfig, FitDiagnostics, NoiseModel, Params};
use crate::corpus::ClassSpace;
use crate::error::{Error, Result};
use crate::votes::{VoteMatrix, ABSTAIN};

const WEIGHT_FLOOR: f64 = 1e-6;

pub(super) fn mv_row(row: &[i32], k: usize, prior: &[f64]) -> Vec<f64> {
    let mut counts = vec![0.0; k];
    let mut total = 0.0;
    for &v in row.iter().filter(|&&v| v != ABSTAIN) {
        counts[v as usize] += 1.0;
        total += 1.0;
    }
    if total == 0.0 {
        return prior.to_vec();
    }
    counts.iter_mut().for_each(|c| *c /= total);
    counts
}

pub(super) fn wmv_row(row: &[i32], weights: &[f64], k: usize, prior: &[f64]) -> Vec<f64> {
    let mut scores = vec![0.0; k];
    for (&v, &w) in row.iter().zip(weights) {
        if v != ABSTAIN {
            scores[v as usize] += w;
        }
    }
    let total: f64 = scores.iter().sum();
    if total == 0.0 {
        return prior.to_vec();
    }
    scores.iter_mut().for_each(|s| *s /= total);
    scores
}

/// Dev-set weights `max(acc - 1/k, 0) + 1e-6`, or agreement with the MV
/// pseudolabel when no dev set is available.
pub(super) fn fit_weighted(
    matrix: &VoteMatrix,
    classes: &ClassSpace,
    dev: Option<DevSet<'_>>,
    config: &FitConfig,
) -> Result<NoiseModel> {
    let k = classes.k();
    let m = matrix.m();
    let (weights, source) = match dev {
        Some(dev) => {
            let chance = 1.0 / k as f64;
            let weights = (0..m)
                .map(|a| {
                    let (mut voted, mut correct) = (0usize, 0usize);
                    for (v, &g) in dev.votes.column(a).zip(dev.gold) {
                        if v != ABSTAIN {
                            voted += 1;
                            correct += usize::from(v as usize == g);
                        }
                    }
                    let acc = if voted == 0 { 0.0 } else { correct as f64 / voted as f64 };
                    (acc - chance).max(0.0) + WEIGHT_FLOOR
                })
                .collect();
            (weights, "dev")
        }
        None if config.wmv_fallback => {
            let mv = infer(&NoiseModel::majority(classes), matrix)?;
            let weights = (0..m)
                .map(|a| {
                    let (mut voted, mut agree) = (0usize, 0usize);
                    for (v, &h) in matrix.column(a).zip(&mv.hard) {
                        if v != ABSTAIN {
                            voted += 1;
                            agree += usize::from(v as usize == h);
                        }
                    }
                    if voted == 0 {
                        0.0
                    } else {
                        agree as f64 / voted as f64
                    }
                })
                .collect();
            (weights, "mv-agreement")
        }
        None => return Err(Error::LabelModel("WMV needs dev gold labels (fallback disabled)".to_string())),
    };
    Ok(NoiseModel {
        kind: super::ModelKind::Wmv,
        k,
        m: Some(m),
        prior: classes.prior_or_uniform(),
        params: Params::Wmv { weights, weight_source: source.to_string() },
        diagnostics: FitDiagnostics::default(),
    })
}
