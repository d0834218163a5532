use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenPattern {
    /// Maximal runs of alphanumeric characters and `_`.
    #[default]
    Word,
    /// Whitespace-separated chunks.
    Whitespace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturizerConfig {
    pub dim: usize,
    pub lowercase: bool,
    pub token_pattern: TokenPattern,
    pub ngram_max: usize,
    /// Scale each vector to unit L2 norm (counts become tf weights).
    pub l2_normalize: bool,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        Self { dim: 1 << 18, lowercase: true, token_pattern: TokenPattern::Word, ngram_max: 1, l2_normalize: false }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.dim.is_power_of_two() || self.dim > u32::MAX as usize {
            return Err(Error::Shape(alloc::format!("hash dimension {} is not a power of two", self.dim)));
        }
        if !(1..=2).contains(&self.ngram_max) {
            return Err(Error::Shape("ngram_max must be 1 or 2".into()));
        }
        Ok(())
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub dim: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

fn tokens(text: &str, pattern: TokenPattern) -> impl Iterator<Item = &str> {
    let split: fn(char) -> bool = match pattern {
        TokenPattern::Word => |c: char| !(c.is_alphanumeric() || c == '_'),
        TokenPattern::Whitespace => char::is_whitespace,
    };
    text.split(split).filter(|t| !t.is_empty())
}

fn bucket(token: &str, dim: usize) -> u32 {
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    (h.finish() % dim as u64) as u32
}

/// Hashed n-gram counts. FNV-1a keeps indices stable across runs and
/// platforms.
pub fn featurize(text: &str, config: &FeaturizerConfig) -> FeatureVector {
    let lowered: String;
    let text = if config.lowercase {
        lowered = text.to_lowercase();
        lowered.as_str()
    } else {
        text
    };
    let toks: Vec<&str> = tokens(text, config.token_pattern).collect();
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for t in &toks {
        *counts.entry(bucket(t, config.dim)).or_default() += 1.0;
    }
    if config.ngram_max >= 2 {
        let mut joined = String::new();
        for pair in toks.windows(2) {
            joined.clear();
            joined.push_str(pair[0]);
            joined.push(' ');
            joined.push_str(pair[1]);
            *counts.entry(bucket(&joined, config.dim)).or_default() += 1.0;
        }
    }
    let (indices, mut values): (Vec<u32>, Vec<f64>) = counts.into_iter().unzip();
    if config.l2_normalize && !values.is_empty() {
        let norm = libm::sqrt(values.iter().map(|v| v * v).sum::<f64>());
        values.iter_mut().for_each(|v| *v /= norm);
    }
    FeatureVector { dim: config.dim, indices, values }
}
