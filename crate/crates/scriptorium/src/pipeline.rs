//! End-to-end runs. Every stage reads its inputs from and writes its outputs
//! to the run directory `<out>/<run-id>/`, so `run` and the per-stage CLI
//! subcommands share one code path and every report number is recomputed
//! from persisted intermediates.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use scriptorium_core::endmodel::{FeaturizerConfig, TrainConfig};
use scriptorium_core::prompt::{build_prompt, GenerationParams, Strategy, TaskSpec};
use scriptorium_core::{
    combine_union, compute_stats, ClassSpace, Dataset, Document, FitConfig, ModelKind, NoiseModel, Origin,
    PseudoLabeledSet, VoteMatrix,
};

use crate::dataset::load_data_dir;
use crate::error::{Error, Result};
use crate::generate::{synthesize, Cache, GenerationClient, HttpClient, MockClient, ScriptSettings};
use crate::lf::{apply_all, load_lf_set, save_lf_set, ApplyOptions, LabelingFunction, LfBody};
use crate::persist::{read_json, read_votes, write_json, write_text, write_votes};
use crate::report::{
    render_json, render_stats, render_text, CombineMode, EndModelRow, ErrorRow, GenerationSummary, LabelModelRow,
    ModelScore, RunReport, StatsRow,
};
use crate::runner::RunnerRegistry;
use crate::stages::{
    complete_gold, evaluate_end_model, fit_label_model, pseudolabel, pseudolabel_refit, score_label_model,
    train_end_model, EndModel,
};

pub const HUMAN: &str = "human";
pub const SYNTHESIZED: &str = "synthesized";
pub const COMBINED: &str = "combined";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClientConfig {
    /// Canned completions; see [`MockClient`].
    Mock { dir: PathBuf },
    /// Completion endpoint; the token comes from `SCRIPTORIUM_API_TOKEN`.
    Http { endpoint: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    /// Defaults to the last component of `data_dir`.
    #[serde(default)]
    pub dataset: Option<String>,
    /// Directory holding one `<strategy>.json` task spec per strategy.
    pub prompts_dir: PathBuf,
    pub strategy: Strategy,
    /// Model whose pseudolabels train the end models.
    #[serde(default = "default_label_model")]
    pub label_model: ModelKind,
    /// Models compared in the label-model table.
    #[serde(default = "default_table_models")]
    pub table_models: Vec<ModelKind>,
    pub client: ClientConfig,
    #[serde(default)]
    pub generation: GenerationParams,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub combine: bool,
    #[serde(default = "default_combine_mode")]
    pub combine_mode: CombineMode,
    #[serde(default)]
    pub human_lfs: Option<PathBuf>,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default = "default_features")]
    pub features: FeaturizerConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_script_timeout_ms")]
    pub script_timeout_ms: u64,
    #[serde(default = "default_script_runtime")]
    pub script_runtime: String,
    #[serde(default)]
    pub runners: RunnerRegistry,
}

fn default_label_model() -> ModelKind {
    ModelKind::Mv
}
fn default_table_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}
fn default_combine_mode() -> CombineMode {
    CombineMode::Union
}
fn default_cache_dir() -> PathBuf {
    PathBuf::from("cache")
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_features() -> FeaturizerConfig {
    FeaturizerConfig { l2_normalize: true, ..FeaturizerConfig::default() }
}
fn default_script_timeout_ms() -> u64 {
    5000
}
fn default_script_runtime() -> String {
    "python".into()
}

impl RunConfig {
    pub fn new(data_dir: impl Into<PathBuf>, prompts_dir: impl Into<PathBuf>, client: ClientConfig) -> Self {
        Self {
            data_dir: data_dir.into(),
            dataset: None,
            prompts_dir: prompts_dir.into(),
            strategy: Strategy::General,
            label_model: default_label_model(),
            table_models: default_table_models(),
            client,
            generation: GenerationParams::default(),
            seed: 0,
            combine: false,
            combine_mode: default_combine_mode(),
            human_lfs: None,
            cache_dir: default_cache_dir(),
            out_dir: default_out_dir(),
            fit: FitConfig::default(),
            features: default_features(),
            train: TrainConfig::default(),
            script_timeout_ms: default_script_timeout_ms(),
            script_runtime: default_script_runtime(),
            runners: RunnerRegistry::new(),
        }
    }

    /// Reads a JSON config; relative input paths resolve against the
    /// file's directory, output and cache paths against the working
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut config: RunConfig = read_json(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.data_dir = base.join(&config.data_dir);
        config.prompts_dir = base.join(&config.prompts_dir);
        config.human_lfs = config.human_lfs.map(|p| base.join(p));
        if let ClientConfig::Mock { dir } = &mut config.client {
            *dir = base.join(&*dir);
        }
        Ok(config)
    }

    pub fn task_spec_path(&self) -> PathBuf {
        self.prompts_dir.join(format!("{}.json", self.strategy))
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.combine && self.human_lfs.is_none() {
            return Err("human LF set required when combine is set".into());
        }
        let must_exist = |p: &Path, what: &str| {
            if p.exists() {
                Ok(())
            } else {
                Err(format!("{what} {} does not exist", p.display()))
            }
        };
        must_exist(&self.data_dir, "data dir")?;
        must_exist(&self.task_spec_path(), "task spec")?;
        if let Some(h) = &self.human_lfs {
            must_exist(h, "human LF set")?;
        }
        if let ClientConfig::Mock { dir } = &self.client {
            must_exist(dir, "mock completion dir")?;
        }
        self.generation.validate().map_err(|e| e.to_string())?;
        self.features.validate().map_err(|e| e.to_string())?;
        if self.table_models.is_empty() {
            return Err("at least one label model is needed for the comparison table".into());
        }
        Ok(())
    }

    /// The configuration as recorded in reports. Output and cache locations
    /// are left out so they change neither results nor the run id.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let map = v.as_object_mut().expect("config is an object");
        map.remove("out_dir");
        map.remove("cache_dir");
        v
    }

    pub fn run_id(&self) -> String {
        let bytes = serde_json::to_vec(&self.echo()).expect("echo serializes");
        Sha256::digest(&bytes).iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(self.run_id())
    }

    fn fit_config(&self) -> FitConfig {
        FitConfig { seed: self.seed, ..self.fit.clone() }
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Synthesize,
    Apply,
    Stats,
    Fit,
    Pseudolabel,
    Combine,
    Train,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Load,
        Stage::Synthesize,
        Stage::Apply,
        Stage::Stats,
        Stage::Fit,
        Stage::Pseudolabel,
        Stage::Combine,
        Stage::Train,
        Stage::Evaluate,
    ];
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Load => "load",
            Stage::Synthesize => "synthesize",
            Stage::Apply => "apply",
            Stage::Stats => "stats",
            Stage::Fit => "fit",
            Stage::Pseudolabel => "pseudolabel",
            Stage::Combine => "combine",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {source}")]
    Stage { stage: Stage, source: Error },
}

impl RunError {
    /// 2 for configuration errors, 3 for stage failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Stage { .. } => 3,
        }
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, RunError>;
}

impl<T, E: Into<Error>> AtStage<T> for std::result::Result<T, E> {
    fn at(self, stage: Stage) -> std::result::Result<T, RunError> {
        self.map_err(|e| RunError::Stage { stage, source: e.into() })
    }
}

/// A validated configuration with its dataset loaded.
#[derive(Debug)]
pub struct RunContext {
    pub config: RunConfig,
    pub run_dir: PathBuf,
    pub dataset: Dataset,
}

impl RunContext {
    pub fn open(config: RunConfig) -> std::result::Result<Self, RunError> {
        config.validate().map_err(RunError::Config)?;
        let dataset = load_data_dir(&config.data_dir).at(Stage::Load)?;
        for split in ["train", "test"] {
            dataset.split(split).at(Stage::Load)?;
        }
        let run_dir = config.run_dir();
        Ok(Self { config, run_dir, dataset })
    }

    pub fn classes(&self) -> &ClassSpace {
        &self.dataset.classes
    }

    fn docs(&self, split: &str) -> Result<&[Document]> {
        Ok(self.dataset.split(split)?)
    }

    fn splits(&self) -> Vec<&'static str> {
        ["train", "valid", "test"].into_iter().filter(|s| self.dataset.split(s).is_ok()).collect()
    }

    /// LF sets of this run: human (when configured) then synthesized.
    fn lf_sets(&self) -> Vec<&'static str> {
        let mut sets = Vec::new();
        if self.config.human_lfs.is_some() {
            sets.push(HUMAN);
        }
        sets.push(SYNTHESIZED);
        sets
    }

    pub fn path(&self, relative: impl AsRef<Path>) -> PathBuf {
        self.run_dir.join(relative)
    }

    fn lfs_path(&self, set: &str) -> PathBuf {
        self.path("lfs").join(format!("{set}.json"))
    }

    fn votes_path(&self, set: &str, split: &str) -> PathBuf {
        self.path("votes").join(format!("{set}.{split}.votes"))
    }

    fn model_path(&self, set: &str, kind: ModelKind) -> PathBuf {
        self.path("models").join(format!("{set}.{kind}.json"))
    }

    fn end_model_path(&self, set: &str) -> PathBuf {
        self.path("models").join(format!("end.{set}.json"))
    }

    fn pseudolabel_path(&self, set: &str) -> PathBuf {
        self.path("pseudolabels").join(format!("{set}.json"))
    }

    fn read_lfs(&self, set: &str) -> Result<Vec<LabelingFunction>> {
        load_lf_set(&self.lfs_path(set), self.classes().k())
    }

    fn set_title(&self, set: &str) -> String {
        match set {
            HUMAN => "Human-designed".into(),
            SYNTHESIZED => self.config.strategy.title().into(),
            _ => format!("Human-designed + {}", self.config.strategy.title()),
        }
    }

    fn dataset_name(&self) -> String {
        self.config.dataset.clone().unwrap_or_else(|| {
            let dir = fs::canonicalize(&self.config.data_dir).unwrap_or_else(|_| self.config.data_dir.clone());
            dir.file_name().map_or_else(|| "dataset".into(), |n| n.to_string_lossy().into_owned())
        })
    }
}

/// Copies script files next to the saved LF set so the run directory is
/// self-contained, rewriting handles to relative paths.
fn save_lfs_with_scripts(path: &Path, lfs: &[LabelingFunction]) -> Result<()> {
    let dir = path.parent().expect("LF files live in a directory");
    let scripts = dir.join("scripts");
    let mut saved = lfs.to_vec();
    for lf in &mut saved {
        if let LfBody::Script(handle) = &mut lf.body {
            fs::create_dir_all(&scripts).map_err(|e| Error::io(&scripts, e))?;
            let file = format!("{}.py", lf.name);
            let dest = scripts.join(&file);
            fs::copy(&handle.path, &dest).map_err(|e| Error::io(&handle.path, e))?;
            handle.path = PathBuf::from("scripts").join(file);
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_lf_set(path, &saved)
}

fn stage_warnings_path(ctx: &RunContext, stage: Stage) -> PathBuf {
    ctx.path("warnings").join(format!("{stage}.json"))
}

fn write_warnings(ctx: &RunContext, stage: Stage, warnings: &[String]) -> Result<()> {
    write_json(&stage_warnings_path(ctx, stage), warnings)
}

fn make_client(config: &ClientConfig) -> Box<dyn GenerationClient> {
    match config {
        ClientConfig::Mock { dir } => Box::new(MockClient::new(dir.clone())),
        ClientConfig::Http { endpoint } => Box::new(HttpClient::from_env(endpoint.clone())),
    }
}

/// Builds the prompt, obtains vetted LFs (from the cache when possible) and
/// writes `prompt.txt`, `generation.json` and `lfs/synthesized.json`.
pub fn stage_synthesize(ctx: &RunContext, client: &dyn GenerationClient) -> std::result::Result<(), RunError> {
    let s = Stage::Synthesize;
    let config = &ctx.config;
    let spec: TaskSpec = read_json(&config.task_spec_path()).at(s)?;
    let bundle = build_prompt(config.strategy, &spec, config.generation.clone()).at(s)?;
    write_text(&ctx.path("prompt.txt"), &bundle.text).at(s)?;
    let cache = Cache::open(&config.cache_dir).at(s)?;
    let scripts = ScriptSettings {
        runtime_id: config.script_runtime.clone(),
        runners: config.runners.clone(),
        timeout: Duration::from_millis(config.script_timeout_ms),
    };
    let record = synthesize(client, &bundle, ctx.classes(), &cache, &scripts).at(s)?;
    let summary = GenerationSummary {
        prompt_hash: record.prompt_hash.clone(),
        completions: record.raw_completions.len(),
        accepted: record.accepted.len(),
        rejection_reasons: record.rejected.iter().map(|r| r.reason.clone()).collect(),
    };
    write_json(&ctx.path("generation.json"), &summary).at(s)?;
    save_lfs_with_scripts(&ctx.lfs_path(SYNTHESIZED), &record.accepted).at(s)
}

/// Applies every LF set to every split, writing `votes/` and `errors.json`.
/// The human set is first copied into `lfs/human.json`.
pub fn stage_apply(ctx: &RunContext) -> std::result::Result<(), RunError> {
    let s = Stage::Apply;
    if let Some(path) = &ctx.config.human_lfs {
        let human = load_lf_set(path, ctx.classes().k()).at(s)?;
        save_lfs_with_scripts(&ctx.lfs_path(HUMAN), &human).at(s)?;
    }
    let options = ApplyOptions {
        runners: ctx.config.runners.clone(),
        timeout: Duration::from_millis(ctx.config.script_timeout_ms),
    };
    let mut errors = Vec::new();
    for set in ctx.lf_sets() {
        let lfs = ctx.read_lfs(set).at(s)?;
        for split in ctx.splits() {
            let applied = apply_all(&lfs, ctx.docs(split).at(s)?, ctx.classes(), &options).at(s)?;
            write_votes(&ctx.votes_path(set, split), &applied.matrix).at(s)?;
            for (lf, tally) in lfs.iter().zip(&applied.errors) {
                errors.push(ErrorRow { lf_set: set.into(), lf: lf.name.clone(), split: split.into(), tally: *tally });
            }
        }
    }
    write_json(&ctx.path("errors.json"), &errors).at(s)
}

fn stats_rows(ctx: &RunContext) -> Result<Vec<StatsRow>> {
    let gold = complete_gold(ctx.docs("train")?);
    let mut rows = Vec::new();
    for set in ctx.lf_sets() {
        let votes = read_votes(&ctx.votes_path(set, "train"))?;
        let stats = compute_stats(&votes, gold.as_deref())?;
        rows.push(StatsRow { lf_set: ctx.set_title(set), split: "train".into(), stats });
    }
    Ok(rows)
}

/// LF statistics on the training split; writes `stats.json` and returns the
/// rendered table.
pub fn stage_stats(ctx: &RunContext) -> std::result::Result<String, RunError> {
    let rows = stats_rows(ctx).at(Stage::Stats)?;
    write_json(&ctx.path("stats.json"), &rows).at(Stage::Stats)?;
    Ok(render_stats(&rows))
}

fn dev_set(ctx: &RunContext, set: &str) -> Result<Option<(VoteMatrix, Vec<usize>)>> {
    let Ok(docs) = ctx.dataset.split("valid") else { return Ok(None) };
    let Some(gold) = complete_gold(docs) else { return Ok(None) };
    Ok(Some((read_votes(&ctx.votes_path(set, "valid"))?, gold)))
}

fn fit_and_save(ctx: &RunContext, set: &str, kind: ModelKind) -> Result<NoiseModel> {
    let train = read_votes(&ctx.votes_path(set, "train"))?;
    let dev = dev_set(ctx, set)?;
    let model = fit_label_model(
        kind,
        &train,
        ctx.classes(),
        dev.as_ref().map(|(v, g)| (v, g.as_slice())),
        &ctx.config.fit_config(),
    )?;
    write_json(&ctx.model_path(set, kind), &model)?;
    Ok(model)
}

fn table_kinds(config: &RunConfig) -> Vec<ModelKind> {
    let mut kinds = config.table_models.clone();
    if !kinds.contains(&config.label_model) {
        kinds.push(config.label_model);
    }
    kinds
}

/// Fits the comparison models on the synthesized votes and the chosen model
/// on the human votes. A comparison model that cannot be fitted (the
/// triplet method with fewer than three LFs, say) is skipped with a warning.
pub fn stage_fit(ctx: &RunContext) -> std::result::Result<(), RunError> {
    let s = Stage::Fit;
    let primary = ctx.config.label_model;
    let mut warnings = Vec::new();
    for kind in table_kinds(&ctx.config) {
        match fit_and_save(ctx, SYNTHESIZED, kind) {
            Ok(_) => {}
            Err(e) if kind != primary => {
                let stale = ctx.model_path(SYNTHESIZED, kind);
                if stale.exists() {
                    fs::remove_file(&stale).map_err(|e| Error::io(&stale, e)).at(s)?;
                }
                warnings.push(format!("{} not fitted on the synthesized LFs: {e}", kind.table_name()));
            }
            Err(e) => return Err(RunError::Stage { stage: s, source: e }),
        }
    }
    if ctx.config.human_lfs.is_some() {
        fit_and_save(ctx, HUMAN, primary).at(s)?;
    }
    write_warnings(ctx, s, &warnings).at(s)
}

/// Pseudolabels the training split with the chosen model of each LF set.
pub fn stage_pseudolabel(ctx: &RunContext) -> std::result::Result<(), RunError> {
    let s = Stage::Pseudolabel;
    let docs = ctx.docs("train").at(s)?;
    for set in ctx.lf_sets() {
        let model: NoiseModel = read_json(&ctx.model_path(set, ctx.config.label_model)).at(s)?;
        let votes = read_votes(&ctx.votes_path(set, "train")).at(s)?;
        let origin = if set == HUMAN { Origin::Human } else { Origin::Synthesized };
        let labels = pseudolabel(&model, &votes, docs, origin).at(s)?;
        write_json(&ctx.pseudolabel_path(set), &labels).at(s)?;
    }
    Ok(())
}

/// Builds `pseudolabels/combined.json` when the run combines LF sets.
pub fn stage_combine(ctx: &RunContext) -> std::result::Result<(), RunError> {
    let s = Stage::Combine;
    if !ctx.config.combine {
        return Ok(());
    }
    let docs = ctx.docs("train").at(s)?;
    let combined = match ctx.config.combine_mode {
        CombineMode::Union => {
            let human: PseudoLabeledSet = read_json(&ctx.pseudolabel_path(HUMAN)).at(s)?;
            let synth: PseudoLabeledSet = read_json(&ctx.pseudolabel_path(SYNTHESIZED)).at(s)?;
            let ids: Vec<String> = docs.iter().map(|d| d.id.clone()).collect();
            combine_union(&human, &synth, &ids).at(s)?
        }
        CombineMode::Refit => {
            for split in ctx.splits() {
                let human = read_votes(&ctx.votes_path(HUMAN, split)).at(s)?;
                let synth = read_votes(&ctx.votes_path(SYNTHESIZED, split)).at(s)?;
                write_votes(&ctx.votes_path(COMBINED, split), &human.hstack(&synth).at(s)?).at(s)?;
            }
            let model = fit_and_save(ctx, COMBINED, ctx.config.label_model).at(s)?;
            let human = read_votes(&ctx.votes_path(HUMAN, "train")).at(s)?;
            let synth = read_votes(&ctx.votes_path(SYNTHESIZED, "train")).at(s)?;
            pseudolabel_refit(&model, &human, &synth, docs).at(s)?
        }
    };
    write_json(&ctx.pseudolabel_path(COMBINED), &combined).at(s)
}

fn training_sets(ctx: &RunContext) -> Vec<&'static str> {
    let mut sets = ctx.lf_sets();
    if ctx.config.combine {
        sets.push(COMBINED);
    }
    sets
}

/// Trains one end model per pseudolabeled set.
pub fn stage_train(ctx: &RunContext) -> std::result::Result<(), RunError> {
    let s = Stage::Train;
    let docs = ctx.docs("train").at(s)?;
    for set in training_sets(ctx) {
        let labels: PseudoLabeledSet = read_json(&ctx.pseudolabel_path(set)).at(s)?;
        if labels.is_empty() {
            return Err(RunError::Stage {
                stage: s,
                source: Error::Config(format!("{set} pseudolabels cover no training document")),
            });
        }
        let model =
            train_end_model(&labels, docs, ctx.classes(), &ctx.config.features, &ctx.config.train_config()).at(s)?;
        write_json(&ctx.end_model_path(set), &model).at(s)?;
    }
    Ok(())
}

fn coverage(votes: &VoteMatrix) -> f64 {
    if votes.n() == 0 {
        return 0.0;
    }
    (0..votes.n()).filter(|&i| votes.is_covered(i)).count() as f64 / votes.n() as f64
}

fn label_model_rows(ctx: &RunContext) -> Result<LabelModelRow> {
    let test = ctx.docs("test")?;
    let gold = scriptorium_core::corpus::gold_labels(test)?;
    let votes = read_votes(&ctx.votes_path(SYNTHESIZED, "test"))?;
    let mut scores = Vec::new();
    for &kind in &ctx.config.table_models {
        let path = ctx.model_path(SYNTHESIZED, kind);
        if !path.exists() {
            scores.push(ModelScore { model: kind, metric: None, eval: None });
            continue;
        }
        let model: NoiseModel = read_json(&path)?;
        let eval = score_label_model(&model, &votes, &gold, ctx.classes())?;
        scores.push(ModelScore { model: kind, metric: Some(eval.headline()), eval: Some(eval) });
    }
    let defined: Vec<f64> = scores.iter().filter_map(|s| s.metric).collect();
    let average = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(LabelModelRow { lf_set: ctx.set_title(SYNTHESIZED), scores, average, coverage: coverage(&votes) })
}

fn end_model_rows(ctx: &RunContext) -> Result<Vec<EndModelRow>> {
    let test = ctx.docs("test")?;
    let mut counts = BTreeMap::new();
    for set in ctx.lf_sets() {
        counts.insert(set, ctx.read_lfs(set)?.len());
    }
    let mut rows = Vec::new();
    for set in training_sets(ctx) {
        let labels: PseudoLabeledSet = read_json(&ctx.pseudolabel_path(set))?;
        let model: EndModel = read_json(&ctx.end_model_path(set))?;
        let eval = evaluate_end_model(&model, test, ctx.classes())?;
        let n_lfs = match set {
            COMBINED => format!("{}+{}", counts[HUMAN], counts[SYNTHESIZED]),
            _ => counts[set].to_string(),
        };
        rows.push(EndModelRow {
            training_set: ctx.set_title(set),
            n_lfs,
            pseudolabel_coverage: labels.coverage,
            metric: eval.headline(),
            eval,
        });
    }
    Ok(rows)
}

/// Assembles the report from the run directory and writes `report.json`,
/// `report.txt` and `config-echo.json`.
pub fn stage_evaluate(ctx: &RunContext) -> std::result::Result<RunReport, RunError> {
    let s = Stage::Evaluate;
    let config = &ctx.config;
    let mut warnings = Vec::new();
    for stage in Stage::ALL {
        let path = stage_warnings_path(ctx, stage);
        if path.exists() {
            warnings.extend(read_json::<Vec<String>>(&path).at(s)?);
        }
    }
    let report = RunReport {
        run_id: config.run_id(),
        dataset: ctx.dataset_name(),
        strategy: config.strategy,
        label_model: config.label_model,
        metric: if ctx.classes().positive_class().is_some() { "f1".into() } else { "accuracy".into() },
        combine_mode: config.combine.then_some(config.combine_mode),
        generation: read_json(&ctx.path("generation.json")).at(s)?,
        lf_stats: stats_rows(ctx).at(s)?,
        label_models: vec![label_model_rows(ctx).at(s)?],
        end_model: end_model_rows(ctx).at(s)?,
        error_tallies: read_json(&ctx.path("errors.json")).at(s)?,
        script_timeout_ms: config.script_timeout_ms,
        warnings,
        config: config.echo(),
    };
    write_text(&ctx.path("report.json"), &render_json(&report)).at(s)?;
    write_text(&ctx.path("report.txt"), &render_text(&report)).at(s)?;
    write_json(&ctx.path("config-echo.json"), &report.config).at(s)?;
    Ok(report)
}

#[derive(Debug)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub report: RunReport,
    /// Wall-clock seconds per stage, also written to `timings.json`. Kept
    /// out of the report so reports are byte-identical across runs.
    pub timings: BTreeMap<String, f64>,
}

pub fn run(config: &RunConfig) -> std::result::Result<RunOutcome, RunError> {
    run_with_client(config, make_client(&config.client).as_ref())
}

pub fn run_with_client(config: &RunConfig, client: &dyn GenerationClient) -> std::result::Result<RunOutcome, RunError> {
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |stage: Stage| {
        let now = Instant::now();
        timings.insert(stage.to_string(), now.duration_since(clock).as_secs_f64());
        clock = now;
    };
    let ctx = RunContext::open(config.clone())?;
    lap(Stage::Load);
    stage_synthesize(&ctx, client)?;
    lap(Stage::Synthesize);
    stage_apply(&ctx)?;
    lap(Stage::Apply);
    stage_stats(&ctx)?;
    lap(Stage::Stats);
    stage_fit(&ctx)?;
    lap(Stage::Fit);
    stage_pseudolabel(&ctx)?;
    lap(Stage::Pseudolabel);
    stage_combine(&ctx)?;
    lap(Stage::Combine);
    stage_train(&ctx)?;
    lap(Stage::Train);
    let report = stage_evaluate(&ctx)?;
    lap(Stage::Evaluate);
    write_json(&ctx.path("timings.json"), &timings).at(Stage::Evaluate)?;
    Ok(RunOutcome { run_dir: ctx.run_dir, report, timings })
}

/// Opens a context and builds the client named by the configuration.
pub fn client_for(config: &RunConfig) -> Box<dyn GenerationClient> {
    make_client(&config.client)
}
