//! Stage-level operations shared by `run` and the individual CLI
//! subcommands, so both paths compute identical numbers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use scriptorium_core::corpus::gold_labels;
use scriptorium_core::endmodel::{
    evaluate_predictions, featurize, train, EvalReport, Example, FeaturizerConfig, LinearModel, TrainConfig,
};
use scriptorium_core::labelmodel::{self, DevSet};
use scriptorium_core::{ClassSpace, Document, FitConfig, ModelKind, NoiseModel, Origin, PseudoLabeledSet, VoteMatrix};

use crate::error::{Error, Result};

/// Gold labels when every document has one.
pub fn complete_gold(docs: &[Document]) -> Option<Vec<usize>> {
    gold_labels(docs).ok()
}

pub fn fit_label_model(
    kind: ModelKind,
    train_votes: &VoteMatrix,
    classes: &ClassSpace,
    dev: Option<(&VoteMatrix, &[usize])>,
    config: &FitConfig,
) -> Result<NoiseModel> {
    let dev = dev.map(|(votes, gold)| DevSet { votes, gold });
    Ok(labelmodel::fit(kind, train_votes, classes, dev, config)?)
}

/// Pseudolabels for the covered documents of a split.
pub fn pseudolabel(
    model: &NoiseModel,
    votes: &VoteMatrix,
    docs: &[Document],
    origin: Origin,
) -> Result<PseudoLabeledSet> {
    let posterior = labelmodel::infer(model, votes)?;
    let ids: Vec<String> = docs.iter().map(|d| d.id.clone()).collect();
    Ok(PseudoLabeledSet::from_posterior(&ids, &posterior, origin)?)
}

/// Pseudolabels from one model fitted over the human and synthesized votes
/// side by side. Points any human LF voted on are tagged human.
pub fn pseudolabel_refit(
    model: &NoiseModel,
    human: &VoteMatrix,
    synthesized: &VoteMatrix,
    docs: &[Document],
) -> Result<PseudoLabeledSet> {
    let joint = human.hstack(synthesized)?;
    let mut set = pseudolabel(model, &joint, docs, Origin::Synthesized)?;
    let index: std::collections::HashMap<&str, usize> =
        docs.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect();
    for entry in &mut set.entries {
        if human.is_covered(index[entry.id.as_str()]) {
            entry.origin = Origin::Human;
        }
    }
    Ok(set)
}

/// Headline metric of a label model on a gold-labeled split: hard labels on
/// every point, uncovered ones included.
pub fn score_label_model(
    model: &NoiseModel,
    votes: &VoteMatrix,
    gold: &[usize],
    classes: &ClassSpace,
) -> Result<EvalReport> {
    let posterior = labelmodel::infer(model, votes)?;
    Ok(evaluate_predictions(&posterior.hard, gold, classes.k(), classes.positive_class())?)
}

/// A trained end model with the featurizer it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndModel {
    pub k: usize,
    pub dim: usize,
    pub features: FeaturizerConfig,
    pub model: LinearModel,
}

fn featurize_all(texts: &[&str], config: &FeaturizerConfig) -> Vec<scriptorium_core::endmodel::FeatureVector> {
    texts.par_iter().map(|t| featurize(t, config)).collect()
}

pub fn train_end_model(
    set: &PseudoLabeledSet,
    docs: &[Document],
    classes: &ClassSpace,
    features: &FeaturizerConfig,
    config: &TrainConfig,
) -> Result<EndModel> {
    features.validate()?;
    let by_id: std::collections::HashMap<&str, &Document> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
    let texts: Vec<&str> = set
        .entries
        .iter()
        .map(|e| {
            by_id
                .get(e.id.as_str())
                .map(|d| d.text.as_str())
                .ok_or_else(|| Error::Core(scriptorium_core::Error::Provenance(e.id.clone())))
        })
        .collect::<Result<_>>()?;
    let vectors = featurize_all(&texts, features);
    let k = classes.k();
    let examples: Vec<Example> = set
        .entries
        .iter()
        .zip(vectors)
        .map(|(e, features)| {
            let target = if config.soft_labels {
                e.posterior.clone()
            } else {
                let mut t = vec![0.0; k];
                t[e.label] = 1.0;
                t
            };
            Example { features, target }
        })
        .collect();
    let model = train(&examples, k, features.dim, config)?;
    Ok(EndModel { k, dim: features.dim, features: features.clone(), model })
}

pub fn predict(model: &EndModel, docs: &[Document]) -> Vec<usize> {
    let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
    featurize_all(&texts, &model.features).iter().map(|x| model.model.predict(x)).collect()
}

pub fn evaluate_end_model(model: &EndModel, docs: &[Document], classes: &ClassSpace) -> Result<EvalReport> {
    let gold = gold_labels(docs)?;
    Ok(evaluate_predictions(&predict(model, docs), &gold, classes.k(), classes.positive_class())?)
}
