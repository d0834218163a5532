//! Allocation-only building blocks for programmatic weak supervision.
//!
//! Everything here is pure: vote matrices and their statistics, the rule
//! DSL interpreter, the label models (majority vote, weighted majority vote,
//! Dawid-Skene EM and the triplet method of moments), prompt assembly, the
//! hashed bag-of-words logistic-regression end model, and the union
//! construction of pseudolabeled training sets. File formats, process
//! management and the CLI live in the `scriptorium` crate.
#![no_std]

extern crate alloc;

pub mod corpus;
pub mod endmodel;
mod error;
pub mod labelmodel;
pub mod prompt;
pub mod pseudolabel;
pub mod rules;
pub mod stats;
pub mod votes;

pub use corpus::{ClassSpace, Dataset, Document};
pub use error::{Error, Result};
pub use labelmodel::{FitConfig, ModelKind, NoiseModel, Posterior};
pub use pseudolabel::{combine_union, Origin, PseudoLabel, PseudoLabeledSet};
pub use rules::{Condition, Rule, RuleProgram};
pub use stats::{compute_stats, LfStatistics};
pub use votes::{Vote, VoteMatrix, ABSTAIN};
