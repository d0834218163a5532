use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use scriptorium::core::prompt::Strategy;
use scriptorium::core::ModelKind;
use scriptorium::generate::list_cached;
use scriptorium::pipeline::{self, ClientConfig, RunConfig, RunContext, RunError};
use scriptorium::report::{render_text, CombineMode};

#[derive(Parser)]
#[command(name = "scriptorium", version, about = "Weak supervision with synthesized labeling functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage end to end.
    Run(RunArgs),
    /// Generate and vet labeling functions for the configured prompt.
    Synthesize(RunArgs),
    /// Apply the human and synthesized LF sets to every split.
    Apply(RunArgs),
    /// Print LF statistics on the training split.
    Stats(RunArgs),
    /// Fit label models on the persisted votes.
    Fit(RunArgs),
    /// Pseudolabel the training split with the chosen label model.
    Pseudolabel(RunArgs),
    /// Combine human and synthesized pseudolabels.
    Combine(RunArgs),
    /// Train end models on the persisted pseudolabels.
    Train(RunArgs),
    /// Score everything on the test split and write the report.
    Evaluate(RunArgs),
    /// Inspect the completion cache.
    Cache {
        #[command(subcommand)]
        command: CacheCommand,
    },
}

#[derive(Subcommand)]
enum CacheCommand {
    /// List cached generation records.
    Ls {
        #[arg(long, default_value = "cache")]
        cache_dir: PathBuf,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory with classes.json and train/valid/test.jsonl.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Directory with one task spec per strategy, `<strategy>.json`.
    #[arg(long)]
    prompts_dir: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    human_lfs: Option<PathBuf>,
    #[arg(long)]
    combine: bool,
    #[arg(long, value_parser = parse_combine_mode)]
    combine_mode: Option<CombineMode>,
    #[arg(long)]
    label_model: Option<ModelKind>,
    #[arg(long)]
    ds_max_iters: Option<usize>,
    #[arg(long)]
    ds_tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    fs_moment_floor: Option<f64>,
    /// Completion endpoint URL; the token is read from SCRIPTORIUM_API_TOKEN.
    #[arg(long, conflicts_with = "mock_dir")]
    endpoint: Option<String>,
    /// Directory of canned completions.
    #[arg(long)]
    mock_dir: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    allow_any_temperature: bool,
    #[arg(long)]
    n_samples: Option<u32>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    end_model_lr: Option<f64>,
    #[arg(long)]
    end_model_epochs: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    hash_dim: Option<usize>,
    #[arg(long)]
    soft_labels: bool,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    script_timeout_ms: Option<u64>,
    /// Script runner as RUNTIME=COMMAND, e.g. python="python3 runner.py".
    #[arg(long = "runner", value_parser = parse_runner)]
    runners: Vec<(String, Vec<String>)>,
}

fn parse_combine_mode(s: &str) -> Result<CombineMode, String> {
    match s {
        "union" => Ok(CombineMode::Union),
        "refit" => Ok(CombineMode::Refit),
        other => Err(format!("unknown combine mode {other:?} (expected union or refit)")),
    }
}

fn parse_runner(s: &str) -> Result<(String, Vec<String>), String> {
    let (id, command) = s.split_once('=').ok_or("expected RUNTIME=COMMAND")?;
    let argv: Vec<String> = command.split_whitespace().map(str::to_string).collect();
    if id.is_empty() || argv.is_empty() {
        return Err("expected RUNTIME=COMMAND".into());
    }
    Ok((id.to_string(), argv))
}

impl RunArgs {
    fn into_config(self) -> anyhow::Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path).with_context(|| format!("reading config {}", path.display()))?,
            None => {
                let data_dir = self.data_dir.clone().ok_or_else(|| anyhow!("--data-dir or --config is required"))?;
                let prompts_dir =
                    self.prompts_dir.clone().ok_or_else(|| anyhow!("--prompts-dir or --config is required"))?;
                let client = match (&self.endpoint, &self.mock_dir) {
                    (Some(url), _) => ClientConfig::Http { endpoint: url.clone() },
                    (None, Some(dir)) => ClientConfig::Mock { dir: dir.clone() },
                    (None, None) => return Err(anyhow!("--endpoint, --mock-dir or --config is required")),
                };
                RunConfig::new(data_dir, prompts_dir, client)
            }
        };
        if let Some(v) = self.data_dir {
            config.data_dir = v;
        }
        if let Some(v) = self.prompts_dir {
            config.prompts_dir = v;
        }
        if let Some(v) = self.strategy {
            config.strategy = v;
        }
        if let Some(v) = self.human_lfs {
            config.human_lfs = Some(v);
        }
        config.combine |= self.combine;
        if let Some(v) = self.combine_mode {
            config.combine_mode = v;
        }
        if let Some(v) = self.label_model {
            config.label_model = v;
        }
        if let Some(v) = self.ds_max_iters {
            config.fit.ds_max_iters = v;
        }
        if let Some(v) = self.ds_tol {
            config.fit.ds_tol = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.fs_moment_floor {
            config.fit.fs_moment_floor = v;
        }
        if let Some(v) = self.endpoint {
            config.client = ClientConfig::Http { endpoint: v };
        }
        if let Some(v) = self.mock_dir {
            config.client = ClientConfig::Mock { dir: v };
        }
        if let Some(v) = self.model {
            config.generation.model_name = v;
        }
        if let Some(v) = self.temperature {
            config.generation.temperature = v;
        }
        config.generation.allow_any_temperature |= self.allow_any_temperature;
        if let Some(v) = self.n_samples {
            config.generation.n_samples = v;
        }
        if let Some(v) = self.max_tokens {
            config.generation.max_tokens = v;
        }
        if let Some(v) = self.end_model_lr {
            config.train.lr = v;
        }
        if let Some(v) = self.end_model_epochs {
            config.train.epochs = v;
        }
        if let Some(v) = self.l2 {
            config.train.l2 = v;
        }
        if let Some(v) = self.hash_dim {
            config.features.dim = v;
        }
        config.train.soft_labels |= self.soft_labels;
        if let Some(v) = self.cache_dir {
            config.cache_dir = v;
        }
        if let Some(v) = self.out_dir {
            config.out_dir = v;
        }
        if let Some(v) = self.script_timeout_ms {
            config.script_timeout_ms = v;
        }
        for (id, command) in self.runners {
            config.runners.register(id, command);
        }
        Ok(config)
    }
}

enum Failure {
    Config(anyhow::Error),
    Run(RunError),
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Failure::Run(e)
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    let (args, stage) = match command {
        Command::Cache { command: CacheCommand::Ls { cache_dir } } => {
            let (records, warnings) = list_cached(&cache_dir).map_err(|e| Failure::Config(e.into()))?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{:<64}  {:<18}  {:>11}  {:>8}  {:>9}",
                "prompt_hash", "strategy", "completions", "accepted", "timestamp"
            );
            for r in records {
                println!(
                    "{:<64}  {:<18}  {:>11}  {:>8}  {:>9}",
                    r.prompt_hash, r.strategy, r.completions, r.accepted, r.timestamp
                );
            }
            return Ok(());
        }
        Command::Run(args) => (args, None),
        Command::Synthesize(args) => (args, Some("synthesize")),
        Command::Apply(args) => (args, Some("apply")),
        Command::Stats(args) => (args, Some("stats")),
        Command::Fit(args) => (args, Some("fit")),
        Command::Pseudolabel(args) => (args, Some("pseudolabel")),
        Command::Combine(args) => (args, Some("combine")),
        Command::Train(args) => (args, Some("train")),
        Command::Evaluate(args) => (args, Some("evaluate")),
    };
    let config = args.into_config().map_err(Failure::Config)?;
    let Some(stage) = stage else {
        let outcome = pipeline::run(&config)?;
        print!("{}", render_text(&outcome.report));
        println!("artifacts: {}", outcome.run_dir.display());
        return Ok(());
    };
    let ctx = RunContext::open(config)?;
    match stage {
        "synthesize" => pipeline::stage_synthesize(&ctx, pipeline::client_for(&ctx.config).as_ref())?,
        "apply" => pipeline::stage_apply(&ctx)?,
        "stats" => print!("{}", pipeline::stage_stats(&ctx)?),
        "fit" => pipeline::stage_fit(&ctx)?,
        "pseudolabel" => pipeline::stage_pseudolabel(&ctx)?,
        "combine" => pipeline::stage_combine(&ctx)?,
        "train" => pipeline::stage_train(&ctx)?,
        _ => print!("{}", render_text(&pipeline::stage_evaluate(&ctx)?)),
    }
    println!("artifacts: {}", ctx.run_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
