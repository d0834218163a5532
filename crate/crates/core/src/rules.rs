//! The rule DSL: an in-process form for labeling functions.
//!
//! A program is an ordered list of `if condition then emit vote` rules plus a
//! default vote. Evaluation is first-match-wins. Conditions are boolean trees
//! over four predicates:
//!
//! * `keyword_any`: case-insensitive substring match against any keyword
//! * `regex`: unanchored regular-expression search (case-sensitive unless the
//!   pattern says otherwise, e.g. `(?i)`)
//! * `length`: character count compared against a threshold
//! * `fraction_upper`: uppercase letters over all letters (0 when the text has
//!   no letters) compared against a threshold in `[0, 1]`
//!
//! On disk a program is JSON:
//!
//! ```json
//! {"name": "urls", "rules": [{"if": {"keyword_any": ["http", "www"]}, "emit": 1}], "default": -1}
//! ```

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use regex_automata::meta::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::votes::{Vote, ABSTAIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=", alias = "≤")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=", alias = "≥")]
    Ge,
}

impl CmpOp {
    fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Threshold {
    pub op: CmpOp,
    pub value: f64,
}

/// A compiled regular expression that remembers its source.
#[derive(Debug, Clone)]
pub struct Pattern {
    source: String,
    regex: Regex,
}

impl Pattern {
    pub fn new(source: &str) -> Result<Self> {
        let regex = Regex::new(source).map_err(|e| Error::Regex(e.to_string()))?;
        Ok(Self { source: source.to_string(), regex })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    pub fn is_match(&self, text: &str) -> bool {
        self.regex.is_match(text)
    }
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl Serialize for Pattern {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Pattern {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let source = String::deserialize(d)?;
        Pattern::new(&source).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    KeywordAny(Vec<String>),
    Regex(Pattern),
    Length(Threshold),
    FractionUpper(Threshold),
    And(Vec<Condition>),
    Or(Vec<Condition>),
    Not(Box<Condition>),
}

/// Per-document views computed at most once per evaluation.
struct Subject<'a> {
    text: &'a str,
    lower: Option<String>,
}

impl<'a> Subject<'a> {
    fn lower(&mut self) -> &str {
        let text = self.text;
        self.lower.get_or_insert_with(|| text.to_lowercase())
    }
}

impl Condition {
    fn eval(&self, subject: &mut Subject<'_>) -> bool {
        match self {
            Condition::KeywordAny(words) => {
                let lower = subject.lower();
                words.iter().any(|w| lower.contains(w.to_lowercase().as_str()))
            }
            Condition::Regex(p) => p.is_match(subject.text),
            Condition::Length(t) => t.op.holds(subject.text.chars().count() as f64, t.value),
            Condition::FractionUpper(t) => t.op.holds(fraction_upper(subject.text), t.value),
            Condition::And(cs) => cs.iter().all(|c| c.eval(subject)),
            Condition::Or(cs) => cs.iter().any(|c| c.eval(subject)),
            Condition::Not(c) => !c.eval(subject),
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            Condition::KeywordAny(words) if words.is_empty() => {
                Err(Error::RuleProgram("keyword_any needs at least one keyword".into()))
            }
            Condition::KeywordAny(_) | Condition::Regex(_) => Ok(()),
            Condition::Length(t) if !t.value.is_finite() => {
                Err(Error::RuleProgram("length threshold must be finite".into()))
            }
            Condition::FractionUpper(t) if !(0.0..=1.0).contains(&t.value) => {
                Err(Error::RuleProgram(format!("fraction_upper threshold {} outside [0, 1]", t.value)))
            }
            Condition::Length(_) | Condition::FractionUpper(_) => Ok(()),
            Condition::And(cs) | Condition::Or(cs) => cs.iter().try_for_each(Condition::check),
            Condition::Not(c) => c.check(),
        }
    }
}

/// Uppercase letters over alphabetic characters.
pub fn fraction_upper(text: &str) -> f64 {
    let (mut letters, mut upper) = (0usize, 0usize);
    for ch in text.chars().filter(|c| c.is_alphabetic()) {
        letters += 1;
        if ch.is_uppercase() {
            upper += 1;
        }
    }
    if letters == 0 {
        0.0
    } else {
        upper as f64 / letters as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    #[serde(rename = "if")]
    pub condition: Condition,
    pub emit: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleProgram {
    pub rules: Vec<Rule>,
    #[serde(default = "abstain")]
    pub default: i32,
}

fn abstain() -> i32 {
    ABSTAIN
}

impl RuleProgram {
    /// Parses a JSON rule-program document and checks it against `k` classes.
    /// Extra top-level fields (`name`, provenance, ...) are ignored.
    pub fn parse(text: &str, k: usize) -> Result<Self> {
        let program: RuleProgram = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            if let Some(detail) = msg.strip_prefix("regex compile: ") {
                Error::Regex(detail.to_string())
            } else {
                Error::RuleProgram(msg)
            }
        })?;
        program.validate(k)?;
        Ok(program)
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.rules.is_empty() && self.default == ABSTAIN {
            return Err(Error::RuleProgram("no rules and an abstaining default".into()));
        }
        for rule in &self.rules {
            rule.condition.check()?;
            Vote::checked(rule.emit as i64, k)?;
        }
        Vote::checked(self.default as i64, k)?;
        Ok(())
    }

    /// First matching rule wins; otherwise the default.
    pub fn apply(&self, text: &str) -> Vote {
        let mut subject = Subject { text, lower: None };
        let raw = self.rules.iter().find(|r| r.condition.eval(&mut subject)).map_or(self.default, |r| r.emit);
        // Emissions are range-checked when the program is built.
        Vote(raw)
    }

    /// Every vote the program can emit.
    pub fn emissions(&self) -> impl Iterator<Item = i32> + '_ {
        self.rules.iter().map(|r| r.emit).chain(core::iter::once(self.default))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("rule programs serialize")
    }
}
