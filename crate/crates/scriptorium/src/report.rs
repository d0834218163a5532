//! Run reports and their text and JSON renderings.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use scriptorium_core::endmodel::EvalReport;
use scriptorium_core::prompt::Strategy;
use scriptorium_core::{LfStatistics, ModelKind};

use crate::lf::ErrorTally;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMode {
    /// Human pseudolabels win; synthesized ones fill the uncovered points.
    Union,
    /// One label model over the human and synthesized LFs together.
    Refit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub lf_set: String,
    pub split: String,
    pub stats: LfStatistics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model: ModelKind,
    /// `None` when the model could not be fitted (reason in warnings).
    pub metric: Option<f64>,
    pub eval: Option<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelModelRow {
    pub lf_set: String,
    pub scores: Vec<ModelScore>,
    pub average: Option<f64>,
    /// Fraction of evaluation points with at least one vote.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndModelRow {
    pub training_set: String,
    /// LF count, written `human+synthesized` for combined sets.
    pub n_lfs: String,
    pub pseudolabel_coverage: f64,
    pub metric: f64,
    pub eval: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub lf_set: String,
    pub lf: String,
    pub split: String,
    pub tally: ErrorTally,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub prompt_hash: String,
    pub completions: usize,
    pub accepted: usize,
    pub rejection_reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub dataset: String,
    pub strategy: Strategy,
    pub label_model: ModelKind,
    /// `f1` (positive class declared) or `accuracy`.
    pub metric: String,
    pub combine_mode: Option<CombineMode>,
    pub generation: GenerationSummary,
    pub lf_stats: Vec<StatsRow>,
    pub label_models: Vec<LabelModelRow>,
    pub end_model: Vec<EndModelRow>,
    pub error_tallies: Vec<ErrorRow>,
    pub script_timeout_ms: u64,
    pub warnings: Vec<String>,
    pub config: serde_json::Value,
}

pub fn render_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}

pub fn parse_json(text: &str) -> serde_json::Result<RunReport> {
    serde_json::from_str(text)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

/// LF statistics table, one row per LF set.
pub fn render_stats(rows: &[StatsRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:>5} {:>13} {:>12} {:>13} {:>13}",
        "LF set", "#LFs", "Avg.Coverage", "Avg.Overlap", "Avg.Conflict", "Avg.Accuracy"
    );
    for row in rows {
        let s = &row.stats;
        let a = &s.averages;
        let _ = writeln!(
            out,
            "{:<28} {:>5} {:>13.3} {:>12.3} {:>13.3} {:>13}",
            row.lf_set,
            s.m,
            a.coverage,
            a.overlap,
            a.conflict,
            opt(a.accuracy)
        );
        if s.m == 0 {
            let _ = writeln!(out, "warning: LF set {:?} is empty", row.lf_set);
        }
    }
    out
}

pub fn render_text(report: &RunReport) -> String {
    let metric = if report.metric == "f1" { "F1" } else { "Accuracy" };
    let mut out = String::new();
    let _ = writeln!(out, "run {}", report.run_id);
    let _ = writeln!(
        out,
        "dataset {}  strategy {}  label model {}",
        report.dataset,
        report.strategy,
        report.label_model.table_name()
    );
    let g = &report.generation;
    let _ = writeln!(
        out,
        "prompt {}  completions {}  accepted {}  rejected {}",
        g.prompt_hash,
        g.completions,
        g.accepted,
        g.rejection_reasons.len()
    );

    let split = report.lf_stats.first().map_or("train", |r| r.split.as_str());
    let _ = writeln!(out, "\nLF statistics ({split} split)");
    out.push_str(&render_stats(&report.lf_stats));

    let _ = writeln!(out, "\nLabel models (test split, {metric})");
    let models: Vec<ModelKind> =
        report.label_models.first().map(|r| r.scores.iter().map(|s| s.model).collect()).unwrap_or_default();
    let _ = write!(out, "{:<28}", "Prompt");
    for m in &models {
        let _ = write!(out, " {:>7}", m.table_name());
    }
    let _ = writeln!(out, " {:>7} {:>9}", "Avg.", "Coverage");
    for row in &report.label_models {
        let _ = write!(out, "{:<28}", row.lf_set);
        for s in &row.scores {
            let _ = write!(out, " {:>7}", opt(s.metric));
        }
        let _ = writeln!(out, " {:>7} {:>9.3}", opt(row.average), row.coverage);
    }

    let _ = writeln!(out, "\nEnd model (test split, {metric})");
    let _ = writeln!(out, "{:<36} {:>6} {:>9} {:>9} {:>9}", "Training set", "#LFs", "Coverage", metric, "Accuracy");
    for row in &report.end_model {
        let _ = writeln!(
            out,
            "{:<36} {:>6} {:>9.3} {:>9.3} {:>9.3}",
            row.training_set, row.n_lfs, row.pseudolabel_coverage, row.metric, row.eval.accuracy
        );
    }
    if let Some(mode) = report.combine_mode {
        let name = match mode {
            CombineMode::Union => "union (human labels win)",
            CombineMode::Refit => "refit over concatenated LFs",
        };
        let _ = writeln!(out, "combination: {name}");
    }

    let failing: Vec<&ErrorRow> = report.error_tallies.iter().filter(|e| e.tally.total() > 0).collect();
    let _ = writeln!(out, "\nLF errors (script timeout {} ms)", report.script_timeout_ms);
    if failing.is_empty() {
        let _ = writeln!(out, "none");
    }
    for e in failing {
        let t = &e.tally;
        let _ = writeln!(
            out,
            "{} / {} on {}: launch {} timeout {} crash {} out-of-range {} protocol {}",
            e.lf_set, e.lf, e.split, t.launch, t.timeout, t.crash, t.out_of_range, t.protocol
        );
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    let _ = writeln!(
        out,
        "\nnote: LF accuracy is measured over the points each LF votes on; dividing by all points instead gives accuracy x coverage."
    );
    out
}
