//! Label models, statistics and the end-model gradient checked against
//! independent brute-force computations.

#![allow(clippy::needless_range_loop)]

use scriptorium_core::endmodel::{objective, Example, FeatureVector};
use scriptorium_core::labelmodel::{self, FitDiagnostics, Params};
use scriptorium_core::{compute_stats, ClassSpace, ModelKind, NoiseModel, VoteMatrix};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn binary() -> ClassSpace {
    ClassSpace::from_names(&["ham", "spam"]).unwrap()
}

/// Every n×m matrix over {-1, 0, 1}, row-major, for n·m ≤ 8.
fn all_matrices(n: usize, m: usize) -> impl Iterator<Item = Vec<i32>> {
    let cells = n * m;
    (0..3usize.pow(cells as u32)).map(move |mut code| {
        (0..cells)
            .map(|_| {
                let v = (code % 3) as i32 - 1;
                code /= 3;
                v
            })
            .collect()
    })
}

fn oracle_weighted(row: &[i32], weights: &[f64], prior: &[f64]) -> Vec<f64> {
    let mut zero = 0.0;
    let mut one = 0.0;
    for a in 0..row.len() {
        if row[a] == 0 {
            zero += weights[a];
        }
        if row[a] == 1 {
            one += weights[a];
        }
    }
    if zero + one == 0.0 {
        prior.to_vec()
    } else {
        vec![zero / (zero + one), one / (zero + one)]
    }
}

fn oracle_hard(p: &[f64], prior: &[f64]) -> usize {
    if p[1] > p[0] || (p[1] == p[0] && prior[1] > prior[0]) {
        1
    } else {
        0
    }
}

#[test]
fn mv_and_wmv_match_enumeration() {
    let classes = binary();
    let prior = [0.5, 0.5];
    // Dyadic weights keep every sum exact, so equality is bitwise.
    let weights = [0.75, 0.5, 0.25];
    for n in 1..=4 {
        for m in 1..=3 {
            if n * m > 8 {
                continue;
            }
            for votes in all_matrices(n, m) {
                let names = (0..m).map(|a| format!("lf{a}")).collect();
                let matrix = VoteMatrix::new(n, names, votes.clone()).unwrap();
                let mv = labelmodel::infer(&NoiseModel::majority(&classes), &matrix).unwrap();
                let wmv_model = NoiseModel {
                    kind: ModelKind::Wmv,
                    k: 2,
                    m: Some(m),
                    prior: prior.to_vec(),
                    params: Params::Wmv { weights: weights[..m].to_vec(), weight_source: "test".into() },
                    diagnostics: FitDiagnostics::default(),
                };
                let wmv = labelmodel::infer(&wmv_model, &matrix).unwrap();
                for i in 0..n {
                    let row = &votes[i * m..(i + 1) * m];
                    let expect_mv = oracle_weighted(row, &[1.0; 3], &prior);
                    let expect_wmv = oracle_weighted(row, &weights, &prior);
                    assert_eq!(mv.probs[i], expect_mv, "{row:?}");
                    assert_eq!(wmv.probs[i], expect_wmv, "{row:?}");
                    assert_eq!(mv.hard[i], oracle_hard(&expect_mv, &prior));
                    assert_eq!(wmv.hard[i], oracle_hard(&expect_wmv, &prior));
                    assert_eq!(mv.covered[i], row.iter().any(|&v| v != -1));
                }
            }
        }
    }
}

#[test]
fn skewed_prior_breaks_ties() {
    let classes = ClassSpace::new(vec!["a".into(), "b".into()], None, Some(vec![0.3, 0.7])).unwrap();
    let matrix = VoteMatrix::from_rows(&[vec![0, 1], vec![-1, -1]]).unwrap();
    let post = labelmodel::infer(&NoiseModel::majority(&classes), &matrix).unwrap();
    assert_eq!(post.hard, vec![1, 1]);
    assert_eq!(post.probs[1], vec![0.3, 0.7]);
}

/// Direct Bayes rule for a hand-set DS model.
#[test]
fn ds_posterior_matches_bayes_enumeration() {
    let prior = vec![0.3, 0.7];
    let confusion =
        vec![vec![vec![0.2, 0.7, 0.1], vec![0.1, 0.2, 0.7]], vec![vec![0.5, 0.4, 0.1], vec![0.3, 0.3, 0.4]]];
    let model = NoiseModel {
        kind: ModelKind::Ds,
        k: 2,
        m: Some(2),
        prior: prior.clone(),
        params: Params::Ds { confusion: confusion.clone() },
        diagnostics: FitDiagnostics::default(),
    };
    let rows = vec![vec![0, 1], vec![-1, 0], vec![1, -1]];
    let post = labelmodel::infer(&model, &VoteMatrix::from_rows(&rows).unwrap()).unwrap();
    for (i, row) in rows.iter().enumerate() {
        let joint: Vec<f64> = (0..2)
            .map(|c| {
                let mut p = prior[c];
                for (a, &v) in row.iter().enumerate() {
                    p *= confusion[a][c][(v + 1) as usize];
                }
                p
            })
            .collect();
        let z: f64 = joint.iter().sum();
        for c in 0..2 {
            assert!((post.probs[i][c] - joint[c] / z).abs() < 1e-9);
        }
    }
}

/// With symmetric confusion (same abstain mass, one accuracy) and a uniform
/// prior, the DS posterior orders classes by vote count.
#[test]
fn symmetric_ds_agrees_with_mv() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..300 {
        let k = rng.random_range(2..=3);
        let n = rng.random_range(1..=6);
        let m = rng.random_range(1..=4);
        let rows: Vec<Vec<i32>> = (0..n).map(|_| (0..m).map(|_| rng.random_range(-1..k as i32)).collect()).collect();
        let matrix = VoteMatrix::from_rows(&rows).unwrap();
        let abstain = 0.2;
        let correct = 0.6;
        let wrong = (1.0 - abstain - correct) / (k - 1) as f64;
        let tensor: Vec<Vec<f64>> = (0..k)
            .map(|c| {
                let mut row = vec![abstain];
                row.extend((0..k).map(|j| if j == c { correct } else { wrong }));
                row
            })
            .collect();
        let ds = NoiseModel {
            kind: ModelKind::Ds,
            k,
            m: Some(m),
            prior: vec![1.0 / k as f64; k],
            params: Params::Ds { confusion: vec![tensor; m] },
            diagnostics: FitDiagnostics::default(),
        };
        let names: Vec<String> = (0..k).map(|c| format!("c{c}")).collect();
        let classes = ClassSpace::from_names(&names).unwrap();
        let ds_post = labelmodel::infer(&ds, &matrix).unwrap();
        let mv_post = labelmodel::infer(&NoiseModel::majority(&classes), &matrix).unwrap();
        for i in 0..n {
            if mv_post.covered[i] {
                assert_eq!(ds_post.hard[i], mv_post.hard[i], "{:?}", rows[i]);
            }
        }
    }
}

struct Tally {
    coverage: f64,
    overlap: f64,
    conflict: f64,
    accuracy: Option<f64>,
}

fn stats_oracle(rows: &[Vec<i32>], gold: &[usize], a: usize) -> Tally {
    let n = rows.len();
    let (mut cov, mut ovl, mut con, mut hit) = (0, 0, 0, 0);
    for i in 0..n {
        let v = rows[i][a];
        if v == -1 {
            continue;
        }
        cov += 1;
        let mut other_votes = false;
        let mut other_disagrees = false;
        for b in 0..rows[i].len() {
            if b != a && rows[i][b] != -1 {
                other_votes = true;
                if rows[i][b] != v {
                    other_disagrees = true;
                }
            }
        }
        ovl += other_votes as usize;
        con += other_disagrees as usize;
        hit += (v as usize == gold[i]) as usize;
    }
    Tally {
        coverage: cov as f64 / n as f64,
        overlap: ovl as f64 / n as f64,
        conflict: con as f64 / n as f64,
        accuracy: (cov > 0).then(|| hit as f64 / cov as f64),
    }
}

#[test]
fn stats_match_double_loop() {
    let mut rng = StdRng::seed_from_u64(5);
    for _ in 0..1000 {
        let n = rng.random_range(1..=9);
        let m = rng.random_range(1..=3);
        let k = rng.random_range(2..=3);
        let rows: Vec<Vec<i32>> = (0..n).map(|_| (0..m).map(|_| rng.random_range(-1..k as i32)).collect()).collect();
        let gold: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let stats = compute_stats(&VoteMatrix::from_rows(&rows).unwrap(), Some(&gold)).unwrap();
        for a in 0..m {
            let want = stats_oracle(&rows, &gold, a);
            let got = stats.per_lf[a];
            assert_eq!(got.coverage, want.coverage);
            assert_eq!(got.overlap, want.overlap);
            assert_eq!(got.conflict, want.conflict);
            assert_eq!(got.accuracy, want.accuracy);
            assert!(got.conflict <= got.overlap && got.overlap <= got.coverage);
        }
    }
}

fn random_instance(rng: &mut StdRng) -> (Vec<f64>, Vec<f64>, Vec<Example>) {
    let (k, dim, n) = (3, 6, 8);
    let weights = (0..k * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let bias = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let examples = (0..n)
        .map(|_| {
            let indices: Vec<u32> = (0..dim as u32).filter(|_| rng.random_bool(0.5)).collect();
            let values = indices.iter().map(|_| rng.random_range(0.0..2.0)).collect();
            let mut target = vec![0.0; k];
            target[rng.random_range(0..k)] = 1.0;
            Example { features: FeatureVector { dim, indices, values }, target }
        })
        .collect();
    (weights, bias, examples)
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = StdRng::seed_from_u64(3);
    let h = 1e-6;
    for _ in 0..12 {
        let (w, b, data) = random_instance(&mut rng);
        let l2 = 0.05;
        let (_, gw, gb) = objective(&w, &b, &data, l2);
        let mut analytic = gw.clone();
        analytic.extend(&gb);
        let mut numeric = Vec::new();
        for j in 0..w.len() {
            let (mut up, mut down) = (w.clone(), w.clone());
            up[j] += h;
            down[j] -= h;
            numeric.push((objective(&up, &b, &data, l2).0 - objective(&down, &b, &data, l2).0) / (2.0 * h));
        }
        for c in 0..b.len() {
            let (mut up, mut down) = (b.clone(), b.clone());
            up[c] += h;
            down[c] -= h;
            numeric.push((objective(&w, &up, &data, l2).0 - objective(&w, &down, &data, l2).0) / (2.0 * h));
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(diff / scale < 1e-4, "relative error {}", diff / scale);
    }
}
