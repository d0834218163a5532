//! The downstream classifier: hashed bag-of-words features, multinomial
//! logistic regression trained by full-batch gradient descent, and the
//! accuracy/F1 metrics used to score it.

mod features;
mod linear;
mod metrics;

pub use features::{featurize, FeatureVector, FeaturizerConfig, TokenPattern};
pub use linear::{objective, stability_bound, train, Example, LinearModel, TrainConfig, TrainDiagnostics};
pub use metrics::{evaluate_predictions, ClassMetrics, EvalReport};
