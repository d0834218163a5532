//! Class spaces, documents and split bookkeeping.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PRIOR_TOLERANCE: f64 = 1e-9;

/// The label space: class names in index order, an optional positive class
/// for binary F1, and an optional class prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpace {
    names: Vec<String>,
    positive_class: Option<usize>,
    prior: Option<Vec<f64>>,
}

impl ClassSpace {
    pub fn new(names: Vec<String>, positive_class: Option<usize>, prior: Option<Vec<f64>>) -> Result<Self> {
        if names.len() < 2 {
            return Err(Error::ClassSpace(format!("need at least 2 classes, got {}", names.len())));
        }
        let mut seen = BTreeSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::ClassSpace("empty class name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::ClassSpace(format!("duplicate class name {name:?}")));
            }
        }
        if let Some(p) = positive_class {
            if p >= names.len() {
                return Err(Error::ClassSpace(format!("positive class {p} out of range")));
            }
        }
        if let Some(prior) = &prior {
            if prior.len() != names.len() {
                return Err(Error::ClassSpace(format!(
                    "prior has {} entries for {} classes",
                    prior.len(),
                    names.len()
                )));
            }
            if prior.iter().any(|&p| p.is_nan() || p < 0.0 || !p.is_finite()) {
                return Err(Error::ClassSpace("prior entries must be finite and >= 0".into()));
            }
            let total: f64 = prior.iter().sum();
            if (total - 1.0).abs() > PRIOR_TOLERANCE {
                return Err(Error::ClassSpace(format!("prior sums to {total}, not 1")));
            }
        }
        Ok(Self { names, positive_class, prior })
    }

    /// Convenience constructor for tests and fixtures.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        Self::new(names.iter().map(|s| s.as_ref().to_string()).collect(), None, None)
    }

    pub fn k(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, class: usize) -> Option<&str> {
        self.names.get(class).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names.iter().position(|n| n == name).ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }

    pub fn positive_class(&self) -> Option<usize> {
        self.positive_class
    }

    pub fn prior(&self) -> Option<&[f64]> {
        self.prior.as_deref()
    }

    /// The declared prior, or the uniform distribution when none is declared.
    pub fn prior_or_uniform(&self) -> Vec<f64> {
        match &self.prior {
            Some(p) => p.clone(),
            None => vec![1.0 / self.k() as f64; self.k()],
        }
    }

    pub fn with_positive_class(mut self, class: Option<usize>) -> Result<Self> {
        if matches!(class, Some(c) if c >= self.k()) {
            return Err(Error::ClassSpace("positive class out of range".into()));
        }
        self.positive_class = class;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub gold: Option<usize>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, gold: Option<usize>) -> Self {
        Self { id: id.into(), text: text.into(), gold }
    }
}

/// A class space plus named, ordered splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub classes: ClassSpace,
    splits: BTreeMap<String, Vec<Document>>,
}

impl Dataset {
    pub fn new(classes: ClassSpace) -> Self {
        Self { classes, splits: BTreeMap::new() }
    }

    /// Adds (or replaces) a split after checking id uniqueness and gold range.
    pub fn insert_split(&mut self, name: impl Into<String>, docs: Vec<Document>) -> Result<()> {
        let name = name.into();
        let mut ids = BTreeSet::new();
        for doc in &docs {
            if doc.id.is_empty() {
                return Err(Error::Shape(format!("empty document id in split {name:?}")));
            }
            if !ids.insert(doc.id.as_str()) {
                return Err(Error::Shape(format!("duplicate id {:?} in split {name:?}", doc.id)));
            }
            if let Some(g) = doc.gold {
                if g >= self.classes.k() {
                    return Err(Error::VoteOutOfRange { vote: g as i64, k: self.classes.k() });
                }
            }
        }
        self.splits.insert(name, docs);
        Ok(())
    }

    pub fn split(&self, name: &str) -> Result<&[Document]> {
        self.splits.get(name).map(Vec::as_slice).ok_or_else(|| Error::MissingSplit(name.to_string()))
    }

    pub fn split_names(&self) -> impl Iterator<Item = &str> {
        self.splits.keys().map(String::as_str)
    }

    /// Gold labels of a split; fails if any document lacks one.
    pub fn gold(&self, name: &str) -> Result<Vec<usize>> {
        gold_labels(self.split(name)?)
    }

    pub fn class_balance(&self, split: &str) -> Result<Vec<f64>> {
        class_balance(self.split(split)?, self.classes.k())
    }
}

pub fn gold_labels(docs: &[Document]) -> Result<Vec<usize>> {
    docs.iter().map(|d| d.gold.ok_or_else(|| Error::MissingGold(d.id.clone()))).collect()
}

/// Empirical class frequencies of a fully gold-labeled split.
pub fn class_balance(docs: &[Document], k: usize) -> Result<Vec<f64>> {
    if docs.is_empty() {
        return Err(Error::Empty("class balance of an empty split".into()));
    }
    class_balance_of(&gold_labels(docs)?, k)
}

/// Empirical class frequencies of a label vector.
pub fn class_balance_of(gold: &[usize], k: usize) -> Result<Vec<f64>> {
    if gold.is_empty() {
        return Err(Error::Empty("class balance of no labels".into()));
    }
    let mut counts = vec![0usize; k];
    for &g in gold {
        if g >= k {
            return Err(Error::VoteOutOfRange { vote: g as i64, k });
        }
        counts[g] += 1;
    }
    let n = gold.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}
