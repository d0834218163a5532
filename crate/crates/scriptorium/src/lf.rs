//! Labeling functions, LF-set files, and applying LFs to documents.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use scriptorium_core::{ClassSpace, Document, Origin, RuleProgram, Vote, VoteMatrix, ABSTAIN};

use crate::error::{Error, Result};
use crate::runner::{CallError, RunnerRegistry, RunnerSession, DEFAULT_TIMEOUT};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptHandle {
    pub path: PathBuf,
    pub entrypoint: String,
    pub runtime_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LfBody {
    Rules(RuleProgram),
    Script(ScriptHandle),
}

/// On disk an LF is one JSON object: `name`, optional `source`
/// (`human` | `synthesized`, default human), `strategy_tag` and
/// `provenance`, plus either the rule-program fields `rules`/`default` or a
/// `script` object.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelingFunction {
    pub name: String,
    pub source: Origin,
    pub strategy_tag: Option<String>,
    pub provenance: Option<String>,
    pub body: LfBody,
}

impl LabelingFunction {
    pub fn rules(name: impl Into<String>, program: RuleProgram) -> Self {
        Self {
            name: name.into(),
            source: Origin::Human,
            strategy_tag: None,
            provenance: None,
            body: LfBody::Rules(program),
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("labeling function with an empty name".into()));
        }
        if self.source == Origin::Synthesized && self.provenance.is_none() {
            return Err(Error::Config(format!("synthesized LF {:?} has no provenance hash", self.name)));
        }
        if let LfBody::Rules(p) = &self.body {
            p.validate(k)?;
        }
        Ok(())
    }

    fn to_value(&self) -> Value {
        let mut map = Map::new();
        map.insert("name".into(), Value::String(self.name.clone()));
        map.insert("source".into(), serde_json::to_value(self.source).expect("origin serializes"));
        if let Some(tag) = &self.strategy_tag {
            map.insert("strategy_tag".into(), Value::String(tag.clone()));
        }
        if let Some(hash) = &self.provenance {
            map.insert("provenance".into(), Value::String(hash.clone()));
        }
        match &self.body {
            LfBody::Rules(p) => {
                let Value::Object(fields) = serde_json::to_value(p).expect("program serializes") else {
                    unreachable!("rule programs serialize to objects")
                };
                map.extend(fields);
            }
            LfBody::Script(s) => {
                map.insert("script".into(), serde_json::to_value(s).expect("handle serializes"));
            }
        }
        Value::Object(map)
    }

    fn from_value(value: Value) -> std::result::Result<Self, String> {
        let Value::Object(mut map) = value else {
            return Err("labeling function must be a JSON object".into());
        };
        let take_str = |map: &mut Map<String, Value>, key: &str| -> std::result::Result<Option<String>, String> {
            match map.remove(key) {
                None | Some(Value::Null) => Ok(None),
                Some(Value::String(s)) => Ok(Some(s)),
                Some(other) => Err(format!("{key} must be a string, got {other}")),
            }
        };
        let name = take_str(&mut map, "name")?.ok_or("missing field `name`")?;
        let source = match map.remove("source") {
            None => Origin::Human,
            Some(v) => serde_json::from_value(v).map_err(|e| format!("source: {e}"))?,
        };
        let strategy_tag = take_str(&mut map, "strategy_tag")?;
        let provenance = take_str(&mut map, "provenance")?;
        let body = match map.remove("script") {
            Some(script) => LfBody::Script(serde_json::from_value(script).map_err(|e| format!("script: {e}"))?),
            None => LfBody::Rules(serde_json::from_value(Value::Object(map)).map_err(|e| e.to_string())?),
        };
        Ok(Self { name, source, strategy_tag, provenance, body })
    }
}

impl Serialize for LabelingFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabelingFunction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Self::from_value(Value::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

fn check_names(lfs: &[LabelingFunction]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for lf in lfs {
        if !seen.insert(lf.name.as_str()) {
            return Err(Error::Config(format!("duplicate LF name {:?}", lf.name)));
        }
    }
    Ok(())
}

fn parse_lf(value: Value, path: &Path, k: usize) -> Result<LabelingFunction> {
    let mut lf = LabelingFunction::from_value(value).map_err(|e| Error::format(path, e))?;
    lf.validate(k).map_err(|e| Error::format(path, e))?;
    if let LfBody::Script(handle) = &mut lf.body {
        if handle.path.is_relative() {
            if let Some(dir) = path.parent() {
                handle.path = dir.join(&handle.path);
            }
        }
    }
    Ok(lf)
}

/// Loads an LF set from a JSON file (one object or an array of objects) or
/// from a directory of `*.json` files taken in name order. Relative script
/// paths resolve against the file that names them.
pub fn load_lf_set(path: &Path, k: usize) -> Result<Vec<LabelingFunction>> {
    let mut lfs = Vec::new();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        for file in files {
            lfs.extend(load_lf_file(&file, k)?);
        }
    } else {
        lfs = load_lf_file(path, k)?;
    }
    check_names(&lfs)?;
    Ok(lfs)
}

fn load_lf_file(path: &Path, k: usize) -> Result<Vec<LabelingFunction>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
    match value {
        Value::Array(items) => items.into_iter().map(|v| parse_lf(v, path, k)).collect(),
        other => Ok(vec![parse_lf(other, path, k)?]),
    }
}

pub fn save_lf_set(path: &Path, lfs: &[LabelingFunction]) -> Result<()> {
    let mut json = serde_json::to_string_pretty(lfs).expect("LFs serialize");
    json.push('\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Per-LF counts of votes lost to errors. Each lost vote is an abstain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorTally {
    pub launch: usize,
    pub timeout: usize,
    pub crash: usize,
    pub out_of_range: usize,
    pub protocol: usize,
}

impl ErrorTally {
    pub fn total(&self) -> usize {
        self.launch + self.timeout + self.crash + self.out_of_range + self.protocol
    }

    pub fn add(&mut self, other: &ErrorTally) {
        self.launch += other.launch;
        self.timeout += other.timeout;
        self.crash += other.crash;
        self.out_of_range += other.out_of_range;
        self.protocol += other.protocol;
    }
}

#[derive(Debug, Clone)]
pub struct ApplyOptions {
    pub runners: RunnerRegistry,
    pub timeout: Duration,
}

impl Default for ApplyOptions {
    fn default() -> Self {
        Self { runners: RunnerRegistry::new(), timeout: DEFAULT_TIMEOUT }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    pub matrix: VoteMatrix,
    /// One tally per LF, in column order.
    pub errors: Vec<ErrorTally>,
}

/// Votes of one LF on one document.
pub fn apply_lf(
    lf: &LabelingFunction,
    doc: &Document,
    classes: &ClassSpace,
    options: &ApplyOptions,
) -> Result<(Vote, ErrorTally)> {
    let (column, tally) = apply_column(lf, std::slice::from_ref(doc), classes.k(), options)?;
    let vote = if column[0] == ABSTAIN { Vote::ABSTAIN } else { Vote::class(column[0] as usize) };
    Ok((vote, tally))
}

/// One LF over a split. Script LFs run in a single runner session; when a
/// call times out or the runner dies, the session is restarted for the
/// remaining documents.
pub fn apply_column(
    lf: &LabelingFunction,
    docs: &[Document],
    k: usize,
    options: &ApplyOptions,
) -> Result<(Vec<i32>, ErrorTally)> {
    let mut tally = ErrorTally::default();
    match &lf.body {
        LfBody::Rules(program) => Ok((docs.iter().map(|d| program.apply(&d.text).raw()).collect(), tally)),
        LfBody::Script(handle) => {
            let command = options.runners.get(&handle.runtime_id)?.to_vec();
            let start = || RunnerSession::start(&command, &handle.path, &handle.entrypoint, k, options.timeout);
            let mut votes = vec![ABSTAIN; docs.len()];
            let mut session = None;
            for (i, doc) in docs.iter().enumerate() {
                if session.is_none() {
                    match start() {
                        Ok(s) => session = Some(s),
                        Err(_) => {
                            tally.launch += docs.len() - i;
                            break;
                        }
                    }
                }
                let s = session.as_mut().expect("session started above");
                match s.call(&doc.id, &doc.text) {
                    Ok(label) if label == ABSTAIN as i64 => {}
                    Ok(label) => match Vote::checked(label, k) {
                        Ok(v) => votes[i] = v.raw(),
                        Err(_) => tally.out_of_range += 1,
                    },
                    Err(CallError::Script(_)) => tally.crash += 1,
                    Err(err) => {
                        match err {
                            CallError::Timeout => tally.timeout += 1,
                            CallError::Died => tally.crash += 1,
                            _ => tally.protocol += 1,
                        }
                        if let Some(mut dead) = session.take() {
                            dead.kill();
                        }
                    }
                }
            }
            if let Some(s) = session {
                s.close();
            }
            Ok((votes, tally))
        }
    }
}

/// Applies every LF to every document; columns are evaluated in parallel
/// and assembled in LF order.
pub fn apply_all(
    lfs: &[LabelingFunction],
    docs: &[Document],
    classes: &ClassSpace,
    options: &ApplyOptions,
) -> Result<Applied> {
    let k = classes.k();
    for lf in lfs {
        if let LfBody::Script(handle) = &lf.body {
            options.runners.get(&handle.runtime_id)?;
        }
    }
    let columns: Vec<(Vec<i32>, ErrorTally)> =
        lfs.par_iter().map(|lf| apply_column(lf, docs, k, options)).collect::<Result<_>>()?;
    let n = docs.len();
    let mut votes = vec![ABSTAIN; n * lfs.len()];
    for (a, (column, _)) in columns.iter().enumerate() {
        for (i, &v) in column.iter().enumerate() {
            votes[i * lfs.len() + a] = v;
        }
    }
    let names = lfs.iter().map(|lf| lf.name.clone()).collect();
    let matrix = VoteMatrix::new(n, names, votes)?;
    Ok(Applied { matrix, errors: columns.into_iter().map(|(_, t)| t).collect() })
}
