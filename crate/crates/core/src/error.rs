use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid class space: {0}")]
    ClassSpace(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("split {0:?} is missing")]
    MissingSplit(String),
    #[error("document {0:?} has no gold label")]
    MissingGold(String),
    #[error("vote {vote} out of range for {k} classes")]
    VoteOutOfRange { vote: i64, k: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("rule program: {0}")]
    RuleProgram(String),
    #[error("regex compile: {0}")]
    Regex(String),
    #[error("label model: {0}")]
    LabelModel(String),
    #[error("moment {value:e} below floor {floor:e}")]
    MomentBelowFloor { value: f64, floor: f64 },
    #[error("prompt: {0}")]
    Prompt(String),
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("inconsistent provenance: id {0:?} is not part of the split")]
    Provenance(String),
    #[error("empty input: {0}")]
    Empty(String),
}
