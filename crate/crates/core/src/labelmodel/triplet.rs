//! Triplet method-of-moments accuracy estimation.
//!
//! Votes are coded `+1`/`-1` (abstain `0`). Under conditional independence
//! with symmetric accuracies, the agreement moment of two LFs factors as
//! `M_ab = â_a · â_b`, where `â = 2·acc - 1`. Any three LFs then give
//! `â_a = sqrt(|M_ab · M_ac / M_bc|)`. Moments here are taken over the points
//! where both LFs vote, so the recovered accuracy is conditional on voting.
//!
//! Multiclass problems are reduced one-vs-rest: for class `c`, a vote for `c`
//! codes `+1` and a vote for any other class codes `-1`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{infer, DevSet, FitConfig, FitDiagnostics, ModelKind, NoiseModel, Params};
use crate::corpus::{class_balance_of, ClassSpace};
use crate::error::{Error, Result};
use crate::votes::{VoteMatrix, ABSTAIN};

pub const ACCURACY_CEILING: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletEstimate {
    /// `â` on the ±1 scale, for `a`, `b`, `c` in order.
    pub signed: [f64; 3],
    /// `(1 + â) / 2`, clamped to `[0.5, 1 - 1e-6]`.
    pub probability: [f64; 3],
}

fn to_probability(signed: f64) -> f64 {
    ((1.0 + signed) / 2.0).clamp(0.5, ACCURACY_CEILING)
}

/// `sqrt(|m_ab · m_ac / m_bc|)`, or `None` when `|m_bc|` is not above `floor`.
pub fn triplet_estimate(m_ab: f64, m_ac: f64, m_bc: f64, floor: f64) -> Option<f64> {
    (m_bc.abs() > floor).then(|| libm::sqrt((m_ab * m_ac / m_bc).abs()))
}

/// Accuracy estimates for the three LFs of a triple from their second moments.
pub fn triplet_accuracy(moments: &[Vec<f64>], (a, b, c): (usize, usize, usize), floor: f64) -> Result<TripletEstimate> {
    let m = |i: usize, j: usize| moments[i][j];
    let reject = |value: f64| Error::MomentBelowFloor { value, floor };
    let sa = triplet_estimate(m(a, b), m(a, c), m(b, c), floor).ok_or_else(|| reject(m(b, c)))?;
    let sb = triplet_estimate(m(a, b), m(b, c), m(a, c), floor).ok_or_else(|| reject(m(a, c)))?;
    let sc = triplet_estimate(m(a, c), m(b, c), m(a, b), floor).ok_or_else(|| reject(m(a, b)))?;
    Ok(TripletEstimate {
        signed: [sa, sb, sc],
        probability: [to_probability(sa), to_probability(sb), to_probability(sc)],
    })
}

/// `+1`/`-1`/`0` coding of the class-`c` one-vs-rest problem.
fn code(v: i32, c: usize) -> i8 {
    if v == ABSTAIN {
        0
    } else if v as usize == c {
        1
    } else {
        -1
    }
}

/// Agreement moments over co-voting points; 0 where two LFs never co-vote.
pub fn second_moments(matrix: &VoteMatrix, class: usize) -> Vec<Vec<f64>> {
    let m = matrix.m();
    let mut sum = vec![vec![0i64; m]; m];
    let mut count = vec![vec![0i64; m]; m];
    let mut coded = vec![0i8; m];
    for row in matrix.rows() {
        for (slot, &v) in coded.iter_mut().zip(row) {
            *slot = code(v, class);
        }
        for a in 0..m {
            if coded[a] == 0 {
                continue;
            }
            for b in (a + 1)..m {
                if coded[b] != 0 {
                    sum[a][b] += (coded[a] * coded[b]) as i64;
                    count[a][b] += 1;
                }
            }
        }
    }
    let mut out = vec![vec![1.0; m]; m];
    for a in 0..m {
        for b in (a + 1)..m {
            let v = if count[a][b] == 0 { 0.0 } else { sum[a][b] as f64 / count[a][b] as f64 };
            out[a][b] = v;
            out[b][a] = v;
        }
    }
    out
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

pub(super) fn fit(
    matrix: &VoteMatrix,
    classes: &ClassSpace,
    dev: Option<DevSet<'_>>,
    config: &FitConfig,
) -> Result<NoiseModel> {
    let (k, m) = (classes.k(), matrix.m());
    if m < 3 {
        return Err(Error::LabelModel(format!("triplet method needs at least 3 LFs, got {m}")));
    }
    if matrix.n() == 0 {
        return Err(Error::LabelModel("triplet method needs a non-empty vote matrix".into()));
    }
    let balance = match (&config.class_balance, classes.prior(), dev) {
        (Some(b), _, _) => b.clone(),
        (None, Some(p), _) => p.to_vec(),
        (None, None, Some(dev)) if !dev.gold.is_empty() => class_balance_of(dev.gold, k)?,
        _ => classes.prior_or_uniform(),
    };
    if balance.len() != k {
        return Err(Error::LabelModel("class balance length differs from k".into()));
    }

    let mut fallback_lfs = Vec::new();
    let mut mv_agreement: Option<Vec<f64>> = None;
    let mut accuracies = Vec::with_capacity(k);
    for class in 0..k {
        let moments = second_moments(matrix, class);
        let mut row = Vec::with_capacity(m);
        for a in 0..m {
            let mut estimates: Vec<f64> = Vec::new();
            for b in 0..m {
                for c in (b + 1)..m {
                    if b == a || c == a {
                        continue;
                    }
                    if let Some(s) =
                        triplet_estimate(moments[a][b], moments[a][c], moments[b][c], config.fs_moment_floor)
                    {
                        estimates.push(to_probability(s));
                    }
                }
            }
            if estimates.is_empty() {
                let agreement = match &mv_agreement {
                    Some(v) => v,
                    None => mv_agreement.insert(agreement_with_mv(matrix, classes)?),
                };
                if !fallback_lfs.contains(&a) {
                    fallback_lfs.push(a);
                }
                row.push(agreement[a].clamp(0.5, ACCURACY_CEILING));
            } else {
                row.push(median(&mut estimates));
            }
        }
        accuracies.push(row);
    }
    fallback_lfs.sort_unstable();

    Ok(NoiseModel {
        kind: ModelKind::Fs,
        k,
        m: Some(m),
        prior: balance,
        params: Params::Fs { accuracies },
        diagnostics: FitDiagnostics { fs_fallback_lfs: fallback_lfs, ..FitDiagnostics::default() },
    })
}

fn agreement_with_mv(matrix: &VoteMatrix, classes: &ClassSpace) -> Result<Vec<f64>> {
    let mv = infer(&NoiseModel::majority(classes), matrix)?;
    Ok((0..matrix.m())
        .map(|a| {
            let (mut voted, mut agree) = (0usize, 0usize);
            for (v, &h) in matrix.column(a).zip(&mv.hard) {
                if v != ABSTAIN {
                    voted += 1;
                    agree += usize::from(v as usize == h);
                }
            }
            if voted == 0 {
                0.5
            } else {
                agree as f64 / voted as f64
            }
        })
        .collect())
}

/// One-vs-rest posteriors, renormalized across classes. Abstains contribute
/// likelihood 1.
pub(super) fn posterior_row(row: &[i32], balance: &[f64], accuracies: &[Vec<f64>]) -> Vec<f64> {
    let mut q: Vec<f64> = balance
        .iter()
        .enumerate()
        .map(|(c, &b)| {
            let b = b.clamp(1e-12, 1.0 - 1e-12);
            let mut log_odds = libm::log(b / (1.0 - b));
            for (a, &v) in row.iter().enumerate() {
                let s = code(v, c);
                if s != 0 {
                    let acc = accuracies[c][a];
                    log_odds += s as f64 * libm::log(acc / (1.0 - acc));
                }
            }
            1.0 / (1.0 + libm::exp(-log_odds))
        })
        .collect();
    let total: f64 = q.iter().sum();
    if total > 0.0 && total.is_finite() {
        q.iter_mut().for_each(|x| *x /= total);
        q
    } else {
        balance.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labelmodel::{fit as fit_model, infer};

    fn moments(ab: f64, ac: f64, bc: f64) -> Vec<Vec<f64>> {
        vec![vec![1.0, ab, ac], vec![ab, 1.0, bc], vec![ac, bc, 1.0]]
    }

    #[test]
    fn closed_form() {
        let est = triplet_accuracy(&moments(0.48, 0.48, 0.36), (0, 1, 2), 1e-3).unwrap();
        assert!((est.signed[0] - 0.8).abs() < 1e-12);
        assert!((est.probability[0] - 0.9).abs() < 1e-12);
        assert!((est.signed[1] - 0.6).abs() < 1e-12);
        assert!((est.probability[2] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn perfect_triple_is_clamped() {
        let est = triplet_accuracy(&moments(1.0, 1.0, 1.0), (0, 1, 2), 1e-3).unwrap();
        assert_eq!(est.signed, [1.0; 3]);
        assert_eq!(est.probability, [ACCURACY_CEILING; 3]);
    }

    #[test]
    fn tiny_moment_rejected() {
        let err = triplet_accuracy(&moments(0.5, 0.5, 1e-9), (0, 1, 2), 1e-3).unwrap_err();
        assert!(matches!(err, Error::MomentBelowFloor { .. }));
    }

    #[test]
    fn needs_three_lfs() {
        let m = VoteMatrix::from_rows(&[vec![0, 1], vec![1, 1]]).unwrap();
        let classes = ClassSpace::from_names(&["a", "b"]).unwrap();
        assert!(fit_model(ModelKind::Fs, &m, &classes, None, &FitConfig::default()).is_err());
    }

    #[test]
    fn binary_rows_are_complementary() {
        let rows = vec![
            vec![1, 1, 0, 1],
            vec![0, 0, 0, 1],
            vec![1, 1, 1, -1],
            vec![0, 1, 0, 0],
            vec![1, -1, 1, 1],
            vec![0, 0, -1, 0],
        ];
        let m = VoteMatrix::from_rows(&rows).unwrap();
        let classes = ClassSpace::from_names(&["a", "b"]).unwrap();
        let model = fit_model(ModelKind::Fs, &m, &classes, None, &FitConfig::default()).unwrap();
        let Params::Fs { accuracies } = &model.params else { panic!() };
        assert_eq!(accuracies[0], accuracies[1]);
        let post = infer(&model, &m).unwrap();
        for p in &post.probs {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn disjoint_lfs_fall_back() {
        // LF 2 never co-votes, so every triple for LFs 0 and 1 has a zero
        // denominator; LF 2 still gets an (uninformative) estimate.
        let rows = vec![vec![1, 1, -1], vec![0, 0, -1], vec![-1, -1, 1]];
        let m = VoteMatrix::from_rows(&rows).unwrap();
        let classes = ClassSpace::from_names(&["a", "b"]).unwrap();
        let model = fit_model(ModelKind::Fs, &m, &classes, None, &FitConfig::default()).unwrap();
        assert_eq!(model.diagnostics.fs_fallback_lfs, vec![0, 1]);
        let Params::Fs { accuracies } = &model.params else { panic!() };
        assert_eq!(accuracies[1][2], 0.5);
    }
}
