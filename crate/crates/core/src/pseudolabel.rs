//! Pseudolabeled training sets and the human-priority union.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelmodel::Posterior;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Human,
    Synthesized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub id: String,
    pub label: usize,
    pub posterior: Vec<f64>,
    pub origin: Origin,
}

/// Covered points of one split with their pseudolabels. `split_size` is the
/// number of documents in the split, covered or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabeledSet {
    pub entries: Vec<PseudoLabel>,
    pub split_size: usize,
    pub coverage: f64,
}

fn coverage(entries: usize, split_size: usize) -> f64 {
    if split_size == 0 {
        0.0
    } else {
        entries as f64 / split_size as f64
    }
}

impl PseudoLabeledSet {
    /// Keeps the covered rows of a posterior, pairing row `i` with `ids[i]`.
    pub fn from_posterior(ids: &[String], posterior: &Posterior, origin: Origin) -> Result<Self> {
        if ids.len() != posterior.n() {
            return Err(Error::Shape(format!("{} ids for {} posterior rows", ids.len(), posterior.n())));
        }
        let entries: Vec<PseudoLabel> = (0..ids.len())
            .filter(|&i| posterior.covered[i])
            .map(|i| PseudoLabel {
                id: ids[i].clone(),
                label: posterior.hard[i],
                posterior: posterior.probs[i].clone(),
                origin,
            })
            .collect();
        Self::new(entries, ids.len())
    }

    pub fn new(entries: Vec<PseudoLabel>, split_size: usize) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Shape(format!("duplicate pseudolabel id {:?}", e.id)));
            }
            let total: f64 = e.posterior.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Shape(format!("posterior of {:?} sums to {total}", e.id)));
            }
        }
        if entries.len() > split_size {
            return Err(Error::Shape("more entries than documents".into()));
        }
        let coverage = coverage(entries.len(), split_size);
        Ok(Self { entries, split_size, coverage })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&PseudoLabel> {
        self.entries.iter().find(|e| e.id == id)
    }
}

/// Human entries are kept unchanged; synthesized entries fill the points no
/// human LF covered. Entries come out in `all_ids` order.
pub fn combine_union(
    human: &PseudoLabeledSet,
    synthesized: &PseudoLabeledSet,
    all_ids: &[String],
) -> Result<PseudoLabeledSet> {
    let known: BTreeSet<&str> = all_ids.iter().map(String::as_str).collect();
    for e in human.entries.iter().chain(&synthesized.entries) {
        if !known.contains(e.id.as_str()) {
            return Err(Error::Provenance(e.id.clone()));
        }
    }
    let human_by_id: BTreeMap<&str, &PseudoLabel> = human.entries.iter().map(|e| (e.id.as_str(), e)).collect();
    let synth_by_id: BTreeMap<&str, &PseudoLabel> = synthesized.entries.iter().map(|e| (e.id.as_str(), e)).collect();

    let entries = all_ids
        .iter()
        .filter_map(|id| human_by_id.get(id.as_str()).or_else(|| synth_by_id.get(id.as_str())).map(|e| (*e).clone()))
        .collect();
    PseudoLabeledSet::new(entries, all_ids.len())
}
