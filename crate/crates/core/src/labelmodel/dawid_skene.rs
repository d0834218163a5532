//! Dawid-Skene latent-class model fitted by EM.
//!
//! Each LF emits one of `k + 1` symbols (abstain or a class) with a
//! class-conditional distribution `confusion[a][c]`. The M-step adds a small
//! pseudocount to every count, so EM climbs the log-likelihood plus a
//! Dirichlet log-prior; that penalized objective is what the per-iteration
//! monotonicity check tracks.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::{infer, log_sum_exp, normalize, FitConfig, FitDiagnostics, ModelKind, NoiseModel, Params};
use crate::corpus::ClassSpace;
use crate::error::{Error, Result};
use crate::votes::{VoteMatrix, ABSTAIN};

fn emission(v: i32) -> usize {
    if v == ABSTAIN {
        0
    } else {
        v as usize + 1
    }
}

struct Estimate {
    prior: Vec<f64>,
    confusion: Vec<Vec<Vec<f64>>>,
    objective: f64,
    log_likelihood: f64,
    trace: Vec<f64>,
}

pub(super) fn fit(matrix: &VoteMatrix, classes: &ClassSpace, config: &FitConfig) -> Result<NoiseModel> {
    if matrix.n() == 0 || matrix.m() == 0 {
        return Err(Error::LabelModel("Dawid-Skene needs a non-empty vote matrix".into()));
    }
    if matrix.as_slice().iter().all(|&v| v == ABSTAIN) {
        return Err(Error::LabelModel("Dawid-Skene cannot fit an all-abstain matrix".into()));
    }
    let k = classes.k();
    let restarts = config.ds_restarts.max(1);

    let mv = infer(&NoiseModel::majority(classes), matrix)?;
    let smoothing = config.ds_init_smoothing;
    let mv_init: Vec<Vec<f64>> = mv
        .probs
        .iter()
        .map(|row| {
            let mut r: Vec<f64> = row.iter().map(|p| p + smoothing).collect();
            normalize(&mut r);
            r
        })
        .collect();

    let mut best = run_em(matrix, k, mv_init, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 1..restarts {
        let init = (0..matrix.n())
            .map(|_| {
                let mut r: Vec<f64> = (0..k).map(|_| (rng.next_u32() as f64 + 1.0) / 4294967297.0).collect();
                normalize(&mut r);
                r
            })
            .collect();
        let candidate = run_em(matrix, k, init, config)?;
        if candidate.objective > best.objective {
            best = candidate;
        }
    }

    Ok(NoiseModel {
        kind: ModelKind::Ds,
        k,
        m: Some(matrix.m()),
        prior: best.prior,
        params: Params::Ds { confusion: best.confusion },
        diagnostics: FitDiagnostics {
            iterations: best.trace.len(),
            log_likelihood: Some(best.log_likelihood),
            objective_trace: best.trace,
            restarts,
            fs_fallback_lfs: Vec::new(),
        },
    })
}

fn run_em(matrix: &VoteMatrix, k: usize, mut resp: Vec<Vec<f64>>, config: &FitConfig) -> Result<Estimate> {
    let (n, m) = (matrix.n(), matrix.m());
    let alpha = config.ds_pseudocount;
    let mut prior = vec![0.0; k];
    let mut confusion = vec![vec![vec![0.0; k + 1]; k]; m];
    let mut trace: Vec<f64> = Vec::new();
    let mut log_likelihood = f64::NEG_INFINITY;
    let mut joint = vec![0.0; k];

    for iter in 0..config.ds_max_iters.max(1) {
        // M-step
        let mut class_mass = vec![0.0; k];
        for row in &resp {
            for (c, &t) in row.iter().enumerate() {
                class_mass[c] += t;
            }
        }
        for c in 0..k {
            prior[c] = (class_mass[c] + alpha) / (n as f64 + k as f64 * alpha);
        }
        for (a, tensor) in confusion.iter_mut().enumerate() {
            for row in tensor.iter_mut() {
                row.iter_mut().for_each(|x| *x = alpha);
            }
            for (i, r) in resp.iter().enumerate() {
                let e = emission(matrix.get(i, a));
                for (c, &t) in r.iter().enumerate() {
                    tensor[c][e] += t;
                }
            }
            for (c, row) in tensor.iter_mut().enumerate() {
                let denom = class_mass[c] + (k + 1) as f64 * alpha;
                row.iter_mut().for_each(|x| *x /= denom);
            }
        }

        // E-step, which also scores the parameters just estimated.
        let log_prior: Vec<f64> = prior.iter().map(|&p| libm::log(p)).collect();
        let log_conf: Vec<Vec<Vec<f64>>> =
            confusion.iter().map(|t| t.iter().map(|r| r.iter().map(|&x| libm::log(x)).collect()).collect()).collect();
        let mut ll = 0.0;
        for (i, r) in resp.iter_mut().enumerate() {
            let row = matrix.row(i);
            for c in 0..k {
                joint[c] =
                    log_prior[c] + row.iter().enumerate().map(|(a, &v)| log_conf[a][c][emission(v)]).sum::<f64>();
            }
            let lse = log_sum_exp(&joint);
            ll += lse;
            for c in 0..k {
                r[c] = libm::exp(joint[c] - lse);
            }
        }
        let penalty: f64 = alpha * (log_prior.iter().sum::<f64>() + log_conf.iter().flatten().flatten().sum::<f64>());
        let objective = ll + penalty;
        if !objective.is_finite() {
            return Err(Error::LabelModel(format!("non-finite EM objective at iteration {iter}")));
        }
        log_likelihood = ll;

        if let Some(&prev) = trace.last() {
            if objective < prev - 1e-9 * prev.abs().max(1.0) {
                return Err(Error::LabelModel(format!(
                    "EM objective decreased at iteration {iter}: {prev} -> {objective}"
                )));
            }
            trace.push(objective);
            if objective - prev < config.ds_tol {
                break;
            }
        } else {
            trace.push(objective);
        }
    }

    Ok(Estimate { prior, confusion, objective: *trace.last().expect("at least one iteration"), log_likelihood, trace })
}

pub(super) fn posterior_row(row: &[i32], prior: &[f64], confusion: &[Vec<Vec<f64>>]) -> Vec<f64> {
    let mut joint: Vec<f64> = prior
        .iter()
        .enumerate()
        .map(|(c, &p)| {
            libm::log(p) + row.iter().enumerate().map(|(a, &v)| libm::log(confusion[a][c][emission(v)])).sum::<f64>()
        })
        .collect();
    let lse = log_sum_exp(&joint);
    joint.iter_mut().for_each(|x| *x = libm::exp(*x - lse));
    joint
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labelmodel::{fit as fit_model, ModelKind};

    fn classes() -> ClassSpace {
        ClassSpace::from_names(&["a", "b"]).unwrap()
    }

    #[test]
    fn rejects_degenerate_matrices() {
        let cfg = FitConfig::default();
        let empty = VoteMatrix::empty(alloc::vec!["x".into()]);
        assert!(fit_model(ModelKind::Ds, &empty, &classes(), None, &cfg).is_err());
        let silent = VoteMatrix::from_rows(&[vec![-1, -1], vec![-1, -1]]).unwrap();
        assert!(fit_model(ModelKind::Ds, &silent, &classes(), None, &cfg).is_err());
    }

    #[test]
    fn monotone_and_row_stochastic() {
        let rows: Vec<Vec<i32>> = (0..60)
            .map(|i| {
                (0..4)
                    .map(|a| match (i * 7 + a * 3) % 5 {
                        0 => -1,
                        1 | 2 => i % 2,
                        3 => (i / 3) % 2,
                        _ => 1 - i % 2,
                    })
                    .collect()
            })
            .collect();
        let m = VoteMatrix::from_rows(&rows).unwrap();
        let model = fit_model(ModelKind::Ds, &m, &classes(), None, &FitConfig::default()).unwrap();
        let trace = &model.diagnostics.objective_trace;
        assert!(!trace.is_empty());
        for w in trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
        let Params::Ds { confusion } = &model.params else { panic!() };
        for row in confusion.iter().flatten() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn restarts_are_seeded() {
        let m = VoteMatrix::from_rows(&[vec![0, 0, 1], vec![1, 1, 1], vec![0, -1, 0]]).unwrap();
        let cfg = FitConfig { ds_restarts: 3, seed: 9, ..FitConfig::default() };
        let a = fit_model(ModelKind::Ds, &m, &classes(), None, &cfg).unwrap();
        let b = fit_model(ModelKind::Ds, &m, &classes(), None, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.diagnostics.restarts, 3);
    }
}
