//! Prompt assembly for labeling-function synthesis.
//!
//! Every prompt carries four general components: a programming-language
//! line, a task description, a function signature and labeling
//! instructions. The other strategies layer one extra block on top of that
//! skeleton. Rendered order:
//!
//! 1. language line
//! 2. mission statement (`mission_statement`)
//! 3. task description
//! 4. heuristics (`human_heuristic`)
//! 5. LF exemplars (`lf_exemplars`) or labeled data exemplars (`data_exemplars`)
//! 6. function signature
//! 7. labeling instructions

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write};
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAX_TEMPERATURE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    General,
    MissionStatement,
    HumanHeuristic,
    LfExemplars,
    DataExemplars,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::General,
        Strategy::MissionStatement,
        Strategy::HumanHeuristic,
        Strategy::LfExemplars,
        Strategy::DataExemplars,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::General => "general",
            Strategy::MissionStatement => "mission_statement",
            Strategy::HumanHeuristic => "human_heuristic",
            Strategy::LfExemplars => "lf_exemplars",
            Strategy::DataExemplars => "data_exemplars",
        }
    }

    /// Row label used in report tables.
    pub fn title(self) -> &'static str {
        match self {
            Strategy::General => "General Prompt",
            Strategy::MissionStatement => "+ Mission Statement",
            Strategy::HumanHeuristic => "+ Human Heuristic",
            Strategy::LfExemplars => "+ Labeling Function Exemplars",
            Strategy::DataExemplars => "+ Data Exemplars",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Prompt(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputForm {
    #[default]
    Script,
    RuleProgram,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataExemplar {
    pub text: String,
    pub label: String,
}

fn default_comment_prefix() -> String {
    "# ".to_string()
}

/// Everything a prompt may draw on, for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub language_line: String,
    pub task_description: String,
    pub function_signature: String,
    pub labeling_instructions: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mission: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heuristics: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lf_exemplars: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_exemplars: Option<Vec<DataExemplar>>,
    #[serde(default)]
    pub output_form: OutputForm,
    /// Prefix for the block headers and list lines the renderer adds.
    #[serde(default = "default_comment_prefix")]
    pub comment_prefix: String,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("language_line", &self.language_line),
            ("task_description", &self.task_description),
            ("function_signature", &self.function_signature),
            ("labeling_instructions", &self.labeling_instructions),
        ] {
            if value.trim().is_empty() {
                return Err(Error::Prompt(format!("{name} must not be empty")));
            }
        }
        let empty_list = |name: &str| Error::Prompt(format!("{name} must not be an empty list"));
        if self.heuristics.as_ref().is_some_and(Vec::is_empty) {
            return Err(empty_list("heuristics"));
        }
        if self.lf_exemplars.as_ref().is_some_and(Vec::is_empty) {
            return Err(empty_list("lf_exemplars"));
        }
        if self.data_exemplars.as_ref().is_some_and(Vec::is_empty) {
            return Err(empty_list("data_exemplars"));
        }
        Ok(())
    }

    /// The function name declared by the signature, e.g. `label_comment` for
    /// `def label_comment(comment):`.
    pub fn entrypoint(&self) -> Option<String> {
        entrypoint_of(&self.function_signature)
    }
}

fn entrypoint_of(signature: &str) -> Option<String> {
    let head = &signature[..signature.find('(')?];
    let name: String = head
        .trim_end()
        .chars()
        .rev()
        .take_while(|c| c.is_alphanumeric() || *c == '_')
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    (!name.is_empty()).then_some(name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub n_samples: u32,
    pub model_name: String,
    /// Permits temperatures outside `[0, 0.2]`.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub allow_any_temperature: bool,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 256,
            n_samples: 1,
            model_name: "code-davinci-002".to_string(),
            allow_any_temperature: false,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<()> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(Error::Prompt(format!("temperature {} is invalid", self.temperature)));
        }
        if self.temperature > MAX_TEMPERATURE && !self.allow_any_temperature {
            return Err(Error::Prompt(format!("temperature {} outside [0, {MAX_TEMPERATURE}]", self.temperature)));
        }
        if self.n_samples == 0 {
            return Err(Error::Prompt("n_samples must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub strategy: Strategy,
    pub text: String,
    pub params: GenerationParams,
    pub output_form: OutputForm,
    pub entrypoint: Option<String>,
    pub prompt_hash: String,
}

/// Renders the prompt for `strategy` and hashes it together with `params`.
pub fn build_prompt(strategy: Strategy, spec: &TaskSpec, params: GenerationParams) -> Result<PromptBundle> {
    spec.validate()?;
    params.validate()?;
    let prefix = spec.comment_prefix.as_str();
    let missing = |field: &str| Error::Prompt(format!("strategy {strategy} requires the {field} field"));

    let mut blocks: Vec<String> = Vec::new();
    blocks.push(spec.language_line.clone());
    if strategy == Strategy::MissionStatement {
        blocks.push(spec.mission.clone().ok_or_else(|| missing("mission"))?);
    }
    blocks.push(spec.task_description.clone());
    match strategy {
        Strategy::HumanHeuristic => {
            let heuristics = spec.heuristics.as_ref().ok_or_else(|| missing("heuristics"))?;
            let mut block = format!("{prefix}Heuristics:");
            for h in heuristics {
                let _ = write!(block, "\n{prefix}- {h}");
            }
            blocks.push(block);
        }
        Strategy::LfExemplars => {
            let exemplars = spec.lf_exemplars.as_ref().ok_or_else(|| missing("lf_exemplars"))?;
            let mut block = format!("{prefix}Example labeling functions:");
            for src in exemplars {
                let _ = write!(block, "\n{}", src.trim_end());
                block.push('\n');
            }
            blocks.push(block.trim_end().to_string());
        }
        Strategy::DataExemplars => {
            let exemplars = spec.data_exemplars.as_ref().ok_or_else(|| missing("data_exemplars"))?;
            let mut block = format!("{prefix}Labeled examples:");
            for ex in exemplars {
                let _ = write!(block, "\n{prefix}{:?} => {}", ex.text, ex.label);
            }
            blocks.push(block);
        }
        Strategy::General | Strategy::MissionStatement => {}
    }
    blocks.push(format!("{}\n{}", spec.function_signature, spec.labeling_instructions));

    let mut text = blocks.join("\n\n");
    text.push('\n');
    let prompt_hash = prompt_hash(&text, &params, spec.output_form);
    Ok(PromptBundle {
        strategy,
        text,
        params,
        output_form: spec.output_form,
        entrypoint: spec.entrypoint(),
        prompt_hash,
    })
}

/// SHA-256 over the rendered text, the generation parameters and the output
/// form, as lowercase hex.
pub fn prompt_hash(text: &str, params: &GenerationParams, form: OutputForm) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hasher.update([0u8]);
    hasher.update(serde_json::to_vec(params).expect("params serialize"));
    hasher.update([0u8]);
    hasher.update(serde_json::to_vec(&form).expect("form serializes"));
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest.iter() {
        let _ = write!(out, "{byte:02x}");
    }
    out
}

/// Pulls the code out of a raw completion: the first fenced block if there is
/// one, otherwise the whole text, with trailing prose after the last closing
/// brace (rule programs) or the last `return` line (scripts) removed.
pub fn extract_code(completion: &str, form: OutputForm) -> String {
    let body = fenced_block(completion).unwrap_or(completion);
    let trimmed = match form {
        OutputForm::RuleProgram => match body.rfind('}') {
            Some(end) => &body[..=end],
            None => body,
        },
        OutputForm::Script => {
            let mut end = None;
            let mut offset = 0;
            for line in body.split_inclusive('\n') {
                let t = line.trim_start();
                if t.starts_with("return") || t.contains(" return ") {
                    end = Some(offset + line.len());
                }
                offset += line.len();
            }
            end.map_or(body, |e| &body[..e])
        }
    };
    let trimmed = trimmed.trim_matches('\n');
    let mut out = trimmed.trim_end().to_string();
    out.push('\n');
    out
}

fn fenced_block(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let end = body.find("```")?;
    Some(&body[..end])
}

/// Whitespace-collapsed source, used to deduplicate completions.
pub fn normalized_source(code: &str) -> String {
    code.split_whitespace().collect::<Vec<_>>().join(" ")
}
