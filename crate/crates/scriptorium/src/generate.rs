//! Generation clients, the completion cache and LF synthesis.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use scriptorium_core::prompt::{extract_code, normalized_source, OutputForm, PromptBundle, Strategy};
use scriptorium_core::{ClassSpace, Document, Error as CoreError, Origin, RuleProgram};

use crate::error::{Error, Result};
use crate::lf::{LabelingFunction, LfBody, ScriptHandle};
use crate::runner::{dry_run, RunnerRegistry, DEFAULT_TIMEOUT};

pub const TOKEN_ENV: &str = "SCRIPTORIUM_API_TOKEN";

pub trait GenerationClient: Send + Sync {
    /// Up to `bundle.params.n_samples` raw completions for the prompt.
    fn complete(&self, bundle: &PromptBundle) -> Result<Vec<String>>;
}

/// Replays canned completions. For a bundle it looks in
/// `<dir>/<prompt_hash>/`, then `<dir>/<strategy>/`, then `<dir>/default/`,
/// and returns the first `n_samples` files of the first directory found, in
/// name order.
#[derive(Debug)]
pub struct MockClient {
    dir: PathBuf,
    calls: AtomicUsize,
}

impl MockClient {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl GenerationClient for MockClient {
    fn complete(&self, bundle: &PromptBundle) -> Result<Vec<String>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let candidates = [bundle.prompt_hash.as_str(), bundle.strategy.as_str(), "default"];
        let dir = candidates
            .iter()
            .map(|c| self.dir.join(c))
            .find(|d| d.is_dir())
            .ok_or_else(|| Error::Transport(format!("no canned completions under {}", self.dir.display())))?;
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        files
            .iter()
            .take(bundle.params.n_samples as usize)
            .map(|p| fs::read_to_string(p).map_err(|e| Error::io(p, e)))
            .collect()
    }
}

/// Bounded retries with fixed backoff steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Pause before each retry; its length is the retry count.
    pub backoff: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { backoff: vec![Duration::from_secs(1), Duration::from_secs(2), Duration::from_secs(4)] }
    }
}

/// Completion-endpoint client.
///
/// Request: `POST <endpoint>` with JSON
/// `{"model", "prompt", "temperature", "max_tokens", "n"}` and, when the
/// token variable is set, `Authorization: Bearer <token>`.
/// Response: `{"choices": [{"text": "..."}, ...]}`.
/// Connection errors, 429 and 5xx are retried; other statuses fail at once.
pub struct HttpClient {
    endpoint: String,
    token: Option<String>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
    n: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
}

impl HttpClient {
    pub fn new(endpoint: impl Into<String>, token: Option<String>, retry: RetryPolicy, timeout: Duration) -> Self {
        let agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        Self { endpoint: endpoint.into(), token, retry, agent }
    }

    /// Reads the token from `SCRIPTORIUM_API_TOKEN`.
    pub fn from_env(endpoint: impl Into<String>) -> Self {
        Self::new(endpoint, std::env::var(TOKEN_ENV).ok(), RetryPolicy::default(), Duration::from_secs(60))
    }

    fn attempt(&self, body: &CompletionRequest<'_>) -> std::result::Result<Vec<String>, (bool, String)> {
        let mut request = self.agent.post(&self.endpoint);
        if let Some(token) = &self.token {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = request.send_json(body).map_err(|e| (true, e.to_string()))?;
        let status = response.status().as_u16();
        if status != 200 {
            let retryable = status == 429 || status >= 500;
            return Err((retryable, format!("HTTP {status}")));
        }
        let parsed: CompletionResponse =
            response.body_mut().read_json().map_err(|e| (false, format!("bad response body: {e}")))?;
        Ok(parsed.choices.into_iter().map(|c| c.text).collect())
    }
}

impl GenerationClient for HttpClient {
    fn complete(&self, bundle: &PromptBundle) -> Result<Vec<String>> {
        let body = CompletionRequest {
            model: &bundle.params.model_name,
            prompt: &bundle.text,
            temperature: bundle.params.temperature,
            max_tokens: bundle.params.max_tokens,
            n: bundle.params.n_samples,
        };
        let mut last = String::new();
        for attempt in 0..=self.retry.backoff.len() {
            if attempt > 0 {
                thread::sleep(self.retry.backoff[attempt - 1]);
            }
            match self.attempt(&body) {
                Ok(texts) => return Ok(texts),
                Err((retryable, message)) => {
                    last = message;
                    if !retryable {
                        break;
                    }
                }
            }
        }
        Err(Error::Transport(last))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub completion: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub prompt_hash: String,
    pub strategy: Strategy,
    pub output_form: OutputForm,
    pub params: scriptorium_core::prompt::GenerationParams,
    pub raw_completions: Vec<String>,
    pub accepted: Vec<LabelingFunction>,
    pub rejected: Vec<Rejection>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub prompt_hash: String,
    pub strategy: Strategy,
    pub timestamp: u64,
    pub completions: usize,
    pub accepted: usize,
    pub rejected: usize,
}

/// `<dir>/<prompt_hash>.json` records, written atomically. Work on one hash
/// is serialized by an in-process mutex plus an advisory file lock, so
/// concurrent runs sharing a cache do not race.
#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
    locks: Arc<Mutex<BTreeMap<String, Arc<Mutex<()>>>>>,
}

impl Cache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir, locks: Arc::default() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn record_path(&self, prompt_hash: &str) -> PathBuf {
        self.dir.join(format!("{prompt_hash}.json"))
    }

    pub fn load(&self, prompt_hash: &str) -> Result<Option<GenerationRecord>> {
        let path = self.record_path(prompt_hash);
        match fs::read_to_string(&path) {
            Ok(text) => Ok(Some(serde_json::from_str(&text).map_err(|e| Error::format(&path, e))?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    pub fn store(&self, record: &GenerationRecord) -> Result<()> {
        let path = self.record_path(&record.prompt_hash);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let mut json = serde_json::to_vec_pretty(record).expect("records serialize");
        json.push(b'\n');
        tmp.write_all(&json).map_err(|e| Error::io(tmp.path(), e))?;
        tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
        Ok(())
    }

    fn with_lock<T>(&self, prompt_hash: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let slot = {
            let mut locks = self.locks.lock().expect("lock table poisoned");
            locks.entry(prompt_hash.to_string()).or_default().clone()
        };
        let _guard = slot.lock().expect("hash lock poisoned");
        let lock_path = self.dir.join(format!("{prompt_hash}.lock"));
        let file = fs::OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(|e| Error::io(&lock_path, e))?;
        file.lock().map_err(|e| Error::io(&lock_path, e))?;
        let out = f();
        let _ = file.unlock();
        out
    }
}

/// Summaries of every readable record, sorted by timestamp then hash,
/// together with a warning per unreadable record file.
pub fn list_cached(dir: &Path) -> Result<(Vec<RecordSummary>, Vec<String>)> {
    let mut summaries = Vec::new();
    let mut warnings = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries.filter_map(|e| e.ok()) {
        let path = entry.path();
        if path.extension().is_none_or(|x| x != "json") {
            continue;
        }
        let parsed = fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<GenerationRecord>(&t).map_err(|e| e.to_string()));
        match parsed {
            Ok(r) => summaries.push(RecordSummary {
                prompt_hash: r.prompt_hash,
                strategy: r.strategy,
                timestamp: r.timestamp,
                completions: r.raw_completions.len(),
                accepted: r.accepted.len(),
                rejected: r.rejected.len(),
            }),
            Err(e) => warnings.push(format!("skipping {}: {e}", path.display())),
        }
    }
    summaries.sort_by(|a, b| (a.timestamp, &a.prompt_hash).cmp(&(b.timestamp, &b.prompt_hash)));
    warnings.sort();
    Ok((summaries, warnings))
}

/// How script-form completions are vetted and stored.
#[derive(Debug, Clone)]
pub struct ScriptSettings {
    pub runtime_id: String,
    pub runners: RunnerRegistry,
    pub timeout: Duration,
}

impl Default for ScriptSettings {
    fn default() -> Self {
        Self { runtime_id: "python".into(), runners: RunnerRegistry::new(), timeout: DEFAULT_TIMEOUT }
    }
}

fn smoke_documents() -> Vec<Document> {
    ["", "hello", "CHECK OUT http://example.com", "a much longer sentence with several words in it", "123 !!"]
        .iter()
        .enumerate()
        .map(|(i, t)| Document::new(format!("smoke-{i}"), *t, None))
        .collect()
}

fn rule_reason(err: &CoreError) -> String {
    match err {
        CoreError::VoteOutOfRange { .. } => format!("vote out of range: {err}"),
        other => other.to_string(),
    }
}

fn vet(
    code: &str,
    bundle: &PromptBundle,
    classes: &ClassSpace,
    scripts: &ScriptSettings,
    script_path: &Path,
) -> std::result::Result<LfBody, String> {
    match bundle.output_form {
        OutputForm::RuleProgram => {
            let program = RuleProgram::parse(code, classes.k()).map_err(|e| rule_reason(&e))?;
            for doc in smoke_documents() {
                let v = program.apply(&doc.text).raw();
                if v < -1 || v >= classes.k() as i32 {
                    return Err(format!("vote out of range on smoke document {:?}", doc.text));
                }
            }
            Ok(LfBody::Rules(program))
        }
        OutputForm::Script => {
            if code.trim().is_empty() {
                return Err("empty completion".into());
            }
            let entrypoint = bundle.entrypoint.as_deref().ok_or("prompt declares no entrypoint")?;
            if !code.contains(entrypoint) {
                return Err(format!("entrypoint {entrypoint:?} not found"));
            }
            let command = scripts.runners.get(&scripts.runtime_id).map_err(|e| e.to_string())?;
            fs::write(script_path, code).map_err(|e| format!("cannot store script: {e}"))?;
            dry_run(command, script_path, entrypoint, classes.k(), scripts.timeout).map_err(|e| e.to_string())?;
            Ok(LfBody::Script(ScriptHandle {
                path: script_path.to_path_buf(),
                entrypoint: entrypoint.to_string(),
                runtime_id: scripts.runtime_id.clone(),
            }))
        }
    }
}

/// Returns the cached record for the bundle, or asks the client, vets every
/// completion and caches the outcome. Duplicate completions (same source up
/// to whitespace) are rejected. A record with no accepted LF is still
/// cached, and reported as [`Error::AllRejected`].
pub fn synthesize(
    client: &dyn GenerationClient,
    bundle: &PromptBundle,
    classes: &ClassSpace,
    cache: &Cache,
    scripts: &ScriptSettings,
) -> Result<GenerationRecord> {
    let record = cache.with_lock(&bundle.prompt_hash, || {
        if let Some(record) = cache.load(&bundle.prompt_hash)? {
            return Ok(record);
        }
        let completions = client.complete(bundle)?;
        let script_dir = cache.dir().join("scripts");
        if bundle.output_form == OutputForm::Script {
            fs::create_dir_all(&script_dir).map_err(|e| Error::io(&script_dir, e))?;
        }
        let short = &bundle.prompt_hash[..bundle.prompt_hash.len().min(8)];
        let mut accepted = Vec::new();
        let mut rejected = Vec::new();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (i, completion) in completions.iter().enumerate() {
            let code = extract_code(completion, bundle.output_form);
            let key = normalized_source(&code);
            if let Some(&first) = seen.get(&key) {
                rejected
                    .push(Rejection { completion: completion.clone(), reason: format!("duplicate of sample {first}") });
                continue;
            }
            seen.insert(key, i);
            let script_path = script_dir.join(format!("{}-{i}.py", bundle.prompt_hash));
            match vet(&code, bundle, classes, scripts, &script_path) {
                Ok(body) => accepted.push(LabelingFunction {
                    name: format!("{}_{short}_{i}", bundle.strategy),
                    source: Origin::Synthesized,
                    strategy_tag: Some(bundle.strategy.as_str().to_string()),
                    provenance: Some(bundle.prompt_hash.clone()),
                    body,
                }),
                Err(reason) => rejected.push(Rejection { completion: completion.clone(), reason }),
            }
        }
        let record = GenerationRecord {
            prompt_hash: bundle.prompt_hash.clone(),
            strategy: bundle.strategy,
            output_form: bundle.output_form,
            params: bundle.params.clone(),
            raw_completions: completions,
            accepted,
            rejected,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        };
        cache.store(&record)?;
        Ok(record)
    })?;
    if record.accepted.is_empty() {
        return Err(Error::AllRejected { prompt_hash: record.prompt_hash, count: record.raw_completions.len() });
    }
    Ok(record)
}
