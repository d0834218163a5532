//! File formats, labeling-function execution, generation clients and the
//! end-to-end pipeline around `scriptorium-core`.
//!
//! Run directory layout, under `<out>/<run-id>/`:
//!
//! ```text
//! prompt.txt            rendered prompt
//! lfs/                  synthesized.json, human.json
//! votes/                <set>.<split>.votes
//! models/               <set>.<kind>.json label models, end.<set>.json end models
//! pseudolabels/         human.json, synthesized.json, combined.json
//! report.json           machine-readable report
//! report.txt            table rendering
//! config-echo.json      configuration as recorded in the report
//! timings.json          per-stage wall clock
//! ```

pub mod dataset;
mod error;
pub mod generate;
pub mod lf;
pub mod persist;
pub mod pipeline;
pub mod report;
pub mod runner;
pub mod stages;

pub use error::{Error, Result};
pub use scriptorium_core as core;
