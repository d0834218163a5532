//! Per-LF coverage, overlap, conflict and accuracy.
//!
//! Accuracy is measured over the points an LF votes on, not over all `n`
//! points; an LF that never votes has no accuracy and is left out of the
//! accuracy average.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::votes::{VoteMatrix, ABSTAIN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LfStat {
    pub coverage: f64,
    pub overlap: f64,
    pub conflict: f64,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfStatistics {
    pub n: usize,
    pub m: usize,
    pub lf_names: Vec<String>,
    pub per_lf: Vec<LfStat>,
    pub averages: LfStat,
}

pub fn compute_stats(matrix: &VoteMatrix, gold: Option<&[usize]>) -> Result<LfStatistics> {
    let (n, m) = (matrix.n(), matrix.m());
    if n == 0 {
        return Err(Error::Empty("statistics need at least one point".into()));
    }
    if let Some(g) = gold {
        if g.len() != n {
            return Err(Error::Shape(format!("{} gold labels for {n} points", g.len())));
        }
    }

    let mut covered = alloc::vec![0usize; m];
    let mut overlapped = alloc::vec![0usize; m];
    let mut conflicted = alloc::vec![0usize; m];
    let mut correct = alloc::vec![0usize; m];

    for i in 0..n {
        let row = matrix.row(i);
        let voters = row.iter().filter(|&&v| v != ABSTAIN).count();
        for (a, &v) in row.iter().enumerate() {
            if v == ABSTAIN {
                continue;
            }
            covered[a] += 1;
            if voters >= 2 {
                overlapped[a] += 1;
                if row.iter().any(|&w| w != ABSTAIN && w != v) {
                    conflicted[a] += 1;
                }
            }
            if gold.is_some_and(|g| g[i] as i32 == v) {
                correct[a] += 1;
            }
        }
    }

    let nf = n as f64;
    let per_lf: Vec<LfStat> = (0..m)
        .map(|a| LfStat {
            coverage: covered[a] as f64 / nf,
            overlap: overlapped[a] as f64 / nf,
            conflict: conflicted[a] as f64 / nf,
            accuracy: (gold.is_some() && covered[a] > 0).then(|| correct[a] as f64 / covered[a] as f64),
        })
        .collect();

    let mean = |f: fn(&LfStat) -> f64| {
        if m == 0 {
            0.0
        } else {
            per_lf.iter().map(f).sum::<f64>() / m as f64
        }
    };
    let accs: Vec<f64> = per_lf.iter().filter_map(|s| s.accuracy).collect();
    let averages = LfStat {
        coverage: mean(|s| s.coverage),
        overlap: mean(|s| s.overlap),
        conflict: mean(|s| s.conflict),
        accuracy: (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64),
    };

    Ok(LfStatistics { n, m, lf_names: matrix.lf_names().to_vec(), per_lf, averages })
}
