//! Label models: fit a noise model over a vote matrix, then infer per-point
//! class posteriors and hard pseudolabels.
//!
//! Four kinds are provided. Majority vote has no parameters. Weighted
//! majority vote learns one non-negative weight per LF. Dawid-Skene learns a
//! class prior and one `k × (k+1)` confusion matrix per LF by EM, with
//! abstain as an explicit emission. The triplet method estimates per-LF
//! accuracies in closed form from pairwise agreement moments.
//!
//! Hard labels take the argmax of the posterior. Ties go to the class with the
//! highest prior, then to the lowest class index.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::ClassSpace;
use crate::error::{Error, Result};
use crate::votes::VoteMatrix;

mod dawid_skene;
mod majority;
mod triplet;

pub use triplet::{triplet_accuracy, triplet_estimate, TripletEstimate};

/// Probabilities closer than this are treated as tied when picking hard labels.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mv,
    Wmv,
    Ds,
    Fs,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Mv, ModelKind::Wmv, ModelKind::Ds, ModelKind::Fs];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Mv => "mv",
            ModelKind::Wmv => "wmv",
            ModelKind::Ds => "ds",
            ModelKind::Fs => "fs",
        }
    }

    /// Column label used in report tables.
    pub fn table_name(self) -> &'static str {
        match self {
            ModelKind::Mv => "MV",
            ModelKind::Wmv => "WMV",
            ModelKind::Ds => "DS",
            ModelKind::Fs => "FS",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mv" => Ok(ModelKind::Mv),
            "wmv" => Ok(ModelKind::Wmv),
            "ds" => Ok(ModelKind::Ds),
            "fs" => Ok(ModelKind::Fs),
            other => Err(Error::LabelModel(format!("unknown label model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub ds_max_iters: usize,
    pub ds_tol: f64,
    /// Number of EM starts; the first starts from smoothed MV posteriors, the
    /// rest from seeded random responsibilities.
    pub ds_restarts: usize,
    pub ds_init_smoothing: f64,
    pub ds_pseudocount: f64,
    pub seed: u64,
    pub fs_moment_floor: f64,
    /// Overrides the class balance used by the triplet model.
    pub class_balance: Option<Vec<f64>>,
    /// Allow WMV to weight LFs by agreement with MV when no dev set is given.
    pub wmv_fallback: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            ds_max_iters: 100,
            ds_tol: 1e-6,
            ds_restarts: 1,
            ds_init_smoothing: 0.1,
            ds_pseudocount: 0.01,
            seed: 0,
            fs_moment_floor: 1e-3,
            class_balance: None,
            wmv_fallback: true,
        }
    }
}

/// Gold-labeled votes used by WMV weighting and, optionally, the triplet
/// model's class balance.
#[derive(Debug, Clone, Copy)]
pub struct DevSet<'a> {
    pub votes: &'a VoteMatrix,
    pub gold: &'a [usize],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Params {
    Mv,
    Wmv {
        weights: Vec<f64>,
        /// `dev` or `mv-agreement`.
        weight_source: String,
    },
    Ds {
        /// `confusion[a][c][e]`: P(emission e | class c) for LF a, with
        /// `e = 0` abstain and `e = j + 1` a vote for class j.
        confusion: Vec<Vec<Vec<f64>>>,
    },
    Fs {
        /// `accuracies[c][a]`: accuracy of LF a in the class-c one-vs-rest
        /// problem. For two classes both rows are equal.
        accuracies: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    /// Raw data log-likelihood of the final DS parameters.
    pub log_likelihood: Option<f64>,
    /// Objective EM maximizes (log-likelihood plus the pseudocount prior),
    /// one entry per iteration.
    pub objective_trace: Vec<f64>,
    pub restarts: usize,
    /// LFs whose triplet estimate fell back to agreement with MV.
    pub fs_fallback_lfs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: ModelKind,
    pub k: usize,
    /// Number of LFs the model was fitted on; `None` for MV.
    pub m: Option<usize>,
    /// Class prior: the declared/uniform prior for MV and WMV, the learned
    /// prior for DS, the class balance for FS. Also drives tie-breaking.
    pub prior: Vec<f64>,
    pub params: Params,
    pub diagnostics: FitDiagnostics,
}

impl NoiseModel {
    pub fn majority(classes: &ClassSpace) -> Self {
        Self {
            kind: ModelKind::Mv,
            k: classes.k(),
            m: None,
            prior: classes.prior_or_uniform(),
            params: Params::Mv,
            diagnostics: FitDiagnostics::default(),
        }
    }

    /// Checks the parameter invariants of the model kind.
    pub fn validate(&self) -> Result<()> {
        check_distribution(&self.prior, "prior")?;
        if self.prior.len() != self.k {
            return Err(Error::LabelModel("prior length differs from k".into()));
        }
        match &self.params {
            Params::Mv => Ok(()),
            Params::Wmv { weights, .. } => {
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::LabelModel("WMV weights must be finite and >= 0".into()));
                }
                if weights.iter().all(|&w| w == 0.0) {
                    return Err(Error::LabelModel("WMV weights are all zero".into()));
                }
                Ok(())
            }
            Params::Ds { confusion } => {
                for tensor in confusion {
                    if tensor.len() != self.k {
                        return Err(Error::LabelModel("confusion tensor has wrong rows".into()));
                    }
                    for row in tensor {
                        if row.len() != self.k + 1 {
                            return Err(Error::LabelModel("confusion row has wrong width".into()));
                        }
                        check_distribution(row, "confusion row")?;
                    }
                }
                Ok(())
            }
            Params::Fs { accuracies } => {
                if accuracies.iter().flatten().any(|&a| !(a > 0.0 && a <= 1.0)) {
                    return Err(Error::LabelModel("FS accuracies must lie in (0, 1]".into()));
                }
                Ok(())
            }
        }
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    let total: f64 = p.iter().sum();
    if p.iter().any(|&x| x.is_nan() || x < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::LabelModel(format!("{what} is not a probability vector")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub probs: Vec<Vec<f64>>,
    pub hard: Vec<usize>,
    pub covered: Vec<bool>,
}

impl Posterior {
    pub fn n(&self) -> usize {
        self.hard.len()
    }

    pub fn coverage(&self) -> f64 {
        if self.covered.is_empty() {
            0.0
        } else {
            self.covered.iter().filter(|&&c| c).count() as f64 / self.covered.len() as f64
        }
    }
}

/// Argmax with ties broken by highest prior, then lowest index.
pub fn argmax_with_prior(probs: &[f64], prior: &[f64]) -> usize {
    let best = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut choice = 0;
    let mut found = false;
    for (c, &p) in probs.iter().enumerate() {
        if p >= best - TIE_TOLERANCE {
            if !found || prior[c] > prior[choice] {
                choice = c;
            }
            found = true;
        }
    }
    choice
}

/// Fits a noise model of the requested kind.
pub fn fit(
    kind: ModelKind,
    matrix: &VoteMatrix,
    classes: &ClassSpace,
    dev: Option<DevSet<'_>>,
    config: &FitConfig,
) -> Result<NoiseModel> {
    matrix.validate(classes.k())?;
    if let Some(dev) = dev {
        dev.votes.validate(classes.k())?;
        if dev.votes.m() != matrix.m() {
            return Err(Error::Shape(format!("dev matrix has {} LFs, training matrix {}", dev.votes.m(), matrix.m())));
        }
        if dev.gold.len() != dev.votes.n() {
            return Err(Error::Shape("dev gold length differs from dev rows".into()));
        }
    }
    let model = match kind {
        ModelKind::Mv => NoiseModel::majority(classes),
        ModelKind::Wmv => majority::fit_weighted(matrix, classes, dev, config)?,
        ModelKind::Ds => dawid_skene::fit(matrix, classes, config)?,
        ModelKind::Fs => triplet::fit(matrix, classes, dev, config)?,
    };
    model.validate()?;
    Ok(model)
}

/// Posterior class probabilities and hard labels for every row of `matrix`.
pub fn infer(model: &NoiseModel, matrix: &VoteMatrix) -> Result<Posterior> {
    if let Some(m) = model.m {
        if matrix.m() != m {
            return Err(Error::Shape(format!("model was fitted on {m} LFs, matrix has {}", matrix.m())));
        }
    }
    matrix.validate(model.k)?;
    let probs: Vec<Vec<f64>> = match &model.params {
        Params::Mv => matrix.rows().map(|r| majority::mv_row(r, model.k, &model.prior)).collect(),
        Params::Wmv { weights, .. } => {
            matrix.rows().map(|r| majority::wmv_row(r, weights, model.k, &model.prior)).collect()
        }
        Params::Ds { confusion } => {
            matrix.rows().map(|r| dawid_skene::posterior_row(r, &model.prior, confusion)).collect()
        }
        Params::Fs { accuracies } => {
            matrix.rows().map(|r| triplet::posterior_row(r, &model.prior, accuracies)).collect()
        }
    };
    let hard = probs.iter().map(|p| argmax_with_prior(p, &model.prior)).collect();
    let covered = (0..matrix.n()).map(|i| matrix.is_covered(i)).collect();
    Ok(Posterior { probs, hard, covered })
}

pub(crate) fn normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= total;
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + libm::log(v.iter().map(|x| libm::exp(x - max)).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn classes() -> ClassSpace {
        ClassSpace::from_names(&["neg", "pos"]).unwrap()
    }

    #[test]
    fn mv_counts() {
        let m = VoteMatrix::from_rows(&[vec![0, 0, 1]]).unwrap();
        let model = fit(ModelKind::Mv, &m, &classes(), None, &FitConfig::default()).unwrap();
        let post = infer(&model, &m).unwrap();
        assert_eq!(post.hard, vec![0]);
        assert_eq!(post.probs[0], vec![2.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn mv_all_abstain() {
        let m = VoteMatrix::from_rows(&[vec![-1, -1, -1]]).unwrap();
        let model = NoiseModel::majority(&classes());
        let post = infer(&model, &m).unwrap();
        assert_eq!(post.probs[0], vec![0.5, 0.5]);
        assert_eq!(post.hard, vec![0]);
        assert_eq!(post.covered, vec![false]);
    }

    #[test]
    fn ties_prefer_prior_then_index() {
        assert_eq!(argmax_with_prior(&[0.5, 0.5], &[0.5, 0.5]), 0);
        assert_eq!(argmax_with_prior(&[0.5, 0.5], &[0.3, 0.7]), 1);
        assert_eq!(argmax_with_prior(&[0.2, 0.4, 0.4], &[0.1, 0.45, 0.45]), 1);
        assert_eq!(argmax_with_prior(&[0.6, 0.4], &[0.1, 0.9]), 0);
    }

    #[test]
    fn column_mismatch() {
        let m = VoteMatrix::from_rows(&[vec![0, 1, 1], vec![1, 1, 0], vec![0, 0, 0]]).unwrap();
        let model = fit(ModelKind::Ds, &m, &classes(), None, &FitConfig::default()).unwrap();
        let narrow = VoteMatrix::from_rows(&[vec![0, 1]]).unwrap();
        assert!(matches!(infer(&model, &narrow), Err(Error::Shape(_))));
    }

    #[test]
    fn kind_parsing() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.as_str().parse::<ModelKind>().unwrap(), kind);
        }
        assert!("snorkel".parse::<ModelKind>().is_err());
    }
}
