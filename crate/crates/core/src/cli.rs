//! `codepair` command surface.
//!
//! Subcommands: `ingest`, `split`, `embed`, `run`, `report`, `analyze`.
//! Every flag can also come from a TOML file passed with `--config`; keys
//! are the flag names with dashes or underscores, and flags given on the
//! command line win.
//!
//! Exit codes: 0 success, 1 validation error, 2 provider failure, 64 usage.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    load_corpus, split_corpus, BugType, Corpus, DatasetSplit, LengthBuckets, DEFAULT_BOUNDARIES,
};
use crate::embedding::{
    cache_load_or_default, EmbeddingCache, EmbeddingProvider, LocalProvider, RemoteProvider,
};
use crate::eval::{aggregate_runs, emit_breakdown, emit_table, read_results, write_results, percent};
use crate::eval::{MetricsReport, RunManifest, TableFormat};
use crate::llm::{Backend, RemoteChatBackend, ReplayLog, ResponseLog, ScriptedBackend};
use crate::pipeline::{self, PipelineError, RunOptions};
use crate::prompting::{
    PromptSpec, Task, DEFAULT_CONTEXT_LIMIT, DEFAULT_K, DEFAULT_SAFETY_FACTOR,
    DEFAULT_TOKEN_BUDGET,
};
use crate::retry::RetryPolicy;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_PROVIDER: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "codepair", version, about = "Few-shot code-pair bug classification harness")]
pub struct Cli {
    /// TOML file with default values for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a dataset file and print a summary.
    Ingest(IngestArgs),
    /// Write a seeded train/valid/test split.
    Split(SplitArgs),
    /// Populate the embedding cache for a split.
    Embed(EmbedArgs),
    /// Evaluate a backend on the test split.
    Run(Box<RunArgs>),
    /// Render results files as a table.
    Report(ReportArgs),
    /// Length-bucket and bug-type breakdowns.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path for the split file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Train,valid,test ratios.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub ratios: Option<Vec<f64>>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct EmbedderArgs {
    /// `local` (trigram hashing) or `remote`.
    #[arg(long)]
    pub embedder: Option<String>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub embed_api_base: Option<String>,
    #[arg(long)]
    pub embed_model: Option<String>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    /// Also write a snapshot of the training index.
    #[arg(long)]
    pub index_out: Option<PathBuf>,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<Task>,
    /// oracle | fixed:<answer> | random:<seed> | replay:<log> | remote
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub boundaries: Option<Vec<usize>>,
    #[arg(long)]
    pub token_budget: Option<usize>,
    #[arg(long)]
    pub safety_factor: Option<f64>,
    #[arg(long)]
    pub context_limit: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_output_tokens: Option<u32>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    /// Requests per minute across all workers; 0 disables the limit.
    #[arg(long)]
    pub rpm: Option<u32>,
    #[arg(long)]
    pub api_base: Option<String>,
    #[arg(long)]
    pub results: Option<PathBuf>,
    /// Append every raw response here (enables later replay).
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub repeat_index: Option<u32>,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// One or more results files; several are summarized as repeats.
    #[arg(long, num_args = 1.., required = false)]
    pub results: Vec<PathBuf>,
    /// md | csv | latex
    #[arg(long)]
    pub format: Option<String>,
    /// Append the published reference rows.
    #[arg(long)]
    pub reference: bool,
    #[arg(long, value_delimiter = ',')]
    pub boundaries: Option<Vec<usize>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub boundaries: Option<Vec<usize>>,
    /// md | json
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Pipeline(e) if e.is_provider_failure() => EXIT_PROVIDER,
            _ => EXIT_VALIDATION,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

macro_rules! from_validation {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Pipeline(PipelineError::from(e))
            }
        }
    )*};
}

from_validation!(
    crate::corpus::CorpusError,
    crate::embedding::EmbeddingError,
    crate::eval::EvalError,
    crate::llm::LlmError,
    crate::prompting::PromptError,
    crate::retrieval::RetrievalError
);

/// Values loaded from `--config`.
#[derive(Debug, Default)]
struct ConfigFile {
    table: toml::Table,
}

impl ConfigFile {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| invalid(format!("reading config {}: {e}", path.display())))?;
        let table: toml::Table =
            toml::from_str(&text).map_err(|e| invalid(format!("parsing config: {e}")))?;
        Ok(Self { table })
    }

    fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, CliError> {
        let value = self
            .table
            .get(key)
            .or_else(|| self.table.get(&key.replace('_', "-")));
        match value {
            None => Ok(None),
            Some(v) => v
                .clone()
                .try_into()
                .map(Some)
                .map_err(|e| invalid(format!("config key `{key}`: {e}"))),
        }
    }

    /// Flag value if given, else config value, else `default`.
    fn pick<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        Ok(match flag {
            Some(v) => v,
            None => self.get(key)?.unwrap_or(default),
        })
    }

    fn pick_opt<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        Ok(match flag {
            Some(v) => Some(v),
            None => self.get(key)?,
        })
    }

    fn require<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<T, CliError> {
        self.pick_opt(flag, key)?
            .ok_or_else(|| invalid(format!("missing required --{}", key.replace('_', "-"))))
    }
}

/// Embedding provider settings after merging flags and config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub kind: String,
    pub dim: usize,
    pub api_base: Option<String>,
    pub model: Option<String>,
    pub cache: Option<PathBuf>,
}

impl EmbedderConfig {
    fn resolve(args: &EmbedderArgs, cfg: &ConfigFile) -> Result<Self, CliError> {
        let resolved = Self {
            kind: cfg.pick(args.embedder.clone(), "embedder", "local".to_string())?,
            dim: cfg.pick(args.embed_dim, "embed_dim", LocalProvider::DEFAULT_DIM)?,
            api_base: cfg.pick_opt(args.embed_api_base.clone(), "embed_api_base")?,
            model: cfg.pick_opt(args.embed_model.clone(), "embed_model")?,
            cache: cfg.pick_opt(args.cache.clone(), "cache")?,
        };
        match resolved.kind.as_str() {
            "local" if resolved.dim < 16 => Err(invalid("--embed-dim must be at least 16")),
            "local" => Ok(resolved),
            "remote" if resolved.api_base.is_none() => {
                Err(invalid("--embedder remote needs --embed-api-base"))
            }
            "remote" => Ok(resolved),
            other => Err(invalid(format!("unknown embedder `{other}` (expected local or remote)"))),
        }
    }

    fn provider(&self) -> Box<dyn EmbeddingProvider> {
        match self.kind.as_str() {
            "remote" => {
                let base = self.api_base.as_deref().expect("validated");
                let model = self.model.clone().unwrap_or_else(|| "text-embedding-ada-002".into());
                Box::new(RemoteProvider::from_env(endpoint(base, "embeddings"), model))
            }
            _ => Box::new(LocalProvider::new(self.dim)),
        }
    }

    fn load_cache(&self) -> Result<EmbeddingCache, CliError> {
        Ok(match &self.cache {
            Some(path) => cache_load_or_default(path)?,
            None => EmbeddingCache::new(),
        })
    }

    fn save_cache(&self, cache: &EmbeddingCache) -> Result<(), CliError> {
        if let Some(path) = &self.cache {
            cache.persist(path)?;
        }
        Ok(())
    }
}

/// Appends `/<suffix>` unless the base already ends with it.
fn endpoint(base: &str, suffix: &str) -> String {
    let base = base.trim_end_matches('/');
    if base.ends_with(suffix) {
        base.to_string()
    } else {
        format!("{base}/{suffix}")
    }
}

/// Fully resolved `run` configuration; serialized verbatim into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    pub backend: String,
    pub model_name: String,
    pub k: usize,
    pub seed: u64,
    pub boundaries: Vec<usize>,
    pub token_budget: usize,
    pub safety_factor: f64,
    pub context_limit: usize,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub max_in_flight: usize,
    pub rpm: u32,
    pub api_base: Option<String>,
    pub corpus: PathBuf,
    pub split: Option<PathBuf>,
    pub results: PathBuf,
    pub log: Option<PathBuf>,
    pub repeat_index: u32,
    pub embedder: EmbedderConfig,
}

impl RunConfig {
    fn resolve(args: RunArgs, cfg: &ConfigFile) -> Result<Self, CliError> {
        let rc = Self {
            task: cfg.pick(args.task, "task", Task::Pair)?,
            backend: cfg.pick(args.backend, "backend", "oracle".to_string())?,
            model_name: cfg.pick(args.model, "model", "gpt-3.5-turbo".to_string())?,
            k: cfg.pick(args.k, "k", DEFAULT_K)?,
            seed: cfg.pick(args.seed, "seed", 42)?,
            boundaries: cfg.pick(args.boundaries, "boundaries", DEFAULT_BOUNDARIES.to_vec())?,
            token_budget: cfg.pick(args.token_budget, "token_budget", DEFAULT_TOKEN_BUDGET)?,
            safety_factor: cfg.pick(args.safety_factor, "safety_factor", DEFAULT_SAFETY_FACTOR)?,
            context_limit: cfg.pick(args.context_limit, "context_limit", DEFAULT_CONTEXT_LIMIT)?,
            temperature: cfg.pick(args.temperature, "temperature", 0.0)?,
            max_output_tokens: cfg.pick(args.max_output_tokens, "max_output_tokens", 64)?,
            max_in_flight: cfg.pick(args.max_in_flight, "max_in_flight", 4)?,
            rpm: cfg.pick(args.rpm, "rpm", 0)?,
            api_base: cfg.pick_opt(args.api_base, "api_base")?,
            corpus: cfg.require(args.corpus, "corpus")?,
            split: cfg.pick_opt(args.split, "split")?,
            results: cfg.pick(args.results, "results", PathBuf::from("results.jsonl"))?,
            log: cfg.pick_opt(args.log, "log")?,
            repeat_index: cfg.pick(args.repeat_index, "repeat_index", 0)?,
            embedder: EmbedderConfig::resolve(&args.embedder, cfg)?,
        };
        rc.validate()?;
        Ok(rc)
    }

    fn prompt_spec(&self) -> PromptSpec {
        PromptSpec {
            task: self.task,
            k: self.k,
            seed: self.seed,
            token_budget: self.token_budget,
            safety_factor: self.safety_factor,
        }
    }

    /// Checks everything that can be checked before touching the network.
    pub fn validate(&self) -> Result<(), CliError> {
        self.prompt_spec().validate(self.context_limit)?;
        LengthBuckets::new(&self.boundaries)?;
        if self.max_in_flight == 0 {
            return Err(invalid("--max-in-flight must be positive"));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(invalid("--temperature must be >= 0"));
        }
        if self.max_output_tokens == 0 {
            return Err(invalid("--max-output-tokens must be positive"));
        }
        parse_backend_spec(&self.backend)?;
        if self.backend == "remote" && self.api_base.is_none() {
            return Err(invalid("--backend remote needs --api-base"));
        }
        Ok(())
    }

    fn run_options(&self, scripted: bool) -> RunOptions {
        let mut opts = RunOptions::new(self.prompt_spec());
        opts.model_name = self.model_name.clone();
        opts.temperature = self.temperature;
        opts.max_output_tokens = self.max_output_tokens;
        opts.max_in_flight = self.max_in_flight;
        opts.rpm = (self.rpm > 0).then_some(self.rpm);
        opts.boundaries = self.boundaries.clone();
        opts.repeat_index = self.repeat_index;
        if scripted && self.embedder.kind == "local" {
            opts.retry = RetryPolicy::immediate(1);
        }
        opts
    }
}

/// Parsed `--backend` value.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Oracle,
    Fixed(String),
    Random(u64),
    Replay(PathBuf),
    Remote,
}

pub fn parse_backend_spec(s: &str) -> Result<BackendSpec, CliError> {
    let (kind, arg) = match s.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (s, None),
    };
    match (kind, arg) {
        ("oracle", None) => Ok(BackendSpec::Oracle),
        ("remote", None) => Ok(BackendSpec::Remote),
        ("fixed", Some(a)) if !a.is_empty() => Ok(BackendSpec::Fixed(a.to_string())),
        ("random", Some(a)) => a
            .parse()
            .map(BackendSpec::Random)
            .map_err(|_| invalid(format!("bad random seed in `{s}`"))),
        ("replay", Some(a)) if !a.is_empty() => Ok(BackendSpec::Replay(PathBuf::from(a))),
        _ => Err(invalid(format!(
            "unknown backend `{s}` (expected oracle, fixed:<answer>, random:<seed>, replay:<log> or remote)"
        ))),
    }
}

fn build_backend(rc: &RunConfig) -> Result<Backend, CliError> {
    Ok(match parse_backend_spec(&rc.backend)? {
        BackendSpec::Oracle => Backend::Scripted(ScriptedBackend::Oracle),
        BackendSpec::Fixed(c) => Backend::Scripted(ScriptedBackend::FixedChoice(c)),
        BackendSpec::Random(seed) => Backend::Scripted(ScriptedBackend::RandomChoice(seed)),
        BackendSpec::Replay(path) => Backend::Scripted(ScriptedBackend::Replay(ReplayLog::load(need_file(&path)?)?)),
        BackendSpec::Remote => {
            let base = rc.api_base.as_deref().expect("validated");
            Backend::Remote(Box::new(RemoteChatBackend::from_env(endpoint(base, "chat/completions"))))
        }
    })
}

fn load_split(corpus: &Corpus, split: Option<&Path>, seed: u64) -> Result<DatasetSplit, CliError> {
    let split = match split {
        Some(path) => DatasetSplit::read(need_file(path)?)?,
        None => split_corpus(corpus, seed, crate::corpus::DEFAULT_RATIOS)?,
    };
    split.validate_against(corpus)?;
    Ok(split)
}

fn need_file(path: &Path) -> Result<&Path, CliError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(invalid(format!("no such file: {}", path.display())))
    }
}

fn manifest_path(results: &Path) -> PathBuf {
    let mut name = results.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn cmd_ingest(args: IngestArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let path: PathBuf = cfg.require(args.corpus, "corpus")?;
    let corpus = load_corpus(need_file(&path)?)?;
    println!("{}: {} pairs, corpus hash {}", path.display(), corpus.len(), corpus.content_hash());
    for t in BugType::ALL {
        let n = corpus.pairs().iter().filter(|p| p.bug_type == t).count();
        println!("  {t:<22} {n}");
    }
    let grouped = crate::corpus::bucket_by_length(
        corpus.pairs().iter().map(|p| (p.pair_id.clone(), p.token_count_pair())),
        &DEFAULT_BOUNDARIES,
    )?;
    let buckets = LengthBuckets::new(&DEFAULT_BOUNDARIES)?;
    for label in buckets.labels() {
        println!("  pair tokens {label:<10} {}", grouped[&label].len());
    }
    Ok(())
}

fn cmd_split(args: SplitArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let corpus = load_corpus(need_file(&cfg.require::<PathBuf>(args.corpus, "corpus")?)?)?;
    let seed = cfg.pick(args.seed, "seed", 42)?;
    let out = cfg.pick(args.out, "out", PathBuf::from("split.json"))?;
    let ratios = cfg.pick(args.ratios, "ratios", vec![0.8, 0.1, 0.1])?;
    let [tr, va, te] = ratios[..] else {
        return Err(invalid("--ratios takes exactly three values"));
    };
    let split = split_corpus(&corpus, seed, (tr, va, te))?;
    split.write(&out)?;
    let (a, b, c) = split.sizes();
    println!("wrote {} (train {a}, valid {b}, test {c})", out.display());
    Ok(())
}

fn cmd_embed(args: EmbedArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let corpus = load_corpus(need_file(&cfg.require::<PathBuf>(args.corpus, "corpus")?)?)?;
    let seed = cfg.pick(args.seed, "seed", 42)?;
    let split_path: Option<PathBuf> = cfg.pick_opt(args.split, "split")?;
    let split = load_split(&corpus, split_path.as_deref(), seed)?;
    let max_in_flight = cfg.pick(args.max_in_flight, "max_in_flight", 4)?.max(1);
    let embedder = EmbedderConfig::resolve(&args.embedder, cfg)?;
    if embedder.cache.is_none() {
        return Err(invalid("embed needs --cache to store the vectors"));
    }
    let tasks = match cfg.pick_opt(args.task, "task")? {
        Some(t) => vec![t],
        None => vec![Task::Pair, Task::Binary],
    };
    let provider = embedder.provider();
    let cache = embedder.load_cache()?;
    let before = cache.len();
    let retry = RetryPolicy::default();
    let test: Vec<_> = split.test.iter().filter_map(|id| corpus.get(id)).collect();
    let mut result = Ok(());
    for task in &tasks {
        let queries: Vec<String> = crate::prompting::targets_for(*task, &test)
            .iter()
            .map(|t| t.query_text())
            .collect();
        let step = crate::embedding::embed_batch(&queries, provider.as_ref(), &cache, &retry, max_in_flight)
            .map_err(CliError::from)
            .and_then(|_| {
                pipeline::build_demo_index(&corpus, &split, *task, provider.as_ref(), &cache, &retry, max_in_flight)
                    .map_err(CliError::from)
            });
        match step {
            Ok(index) => {
                if let (Some(path), Task::Pair) = (&args.index_out, task) {
                    index.index.save(path)?;
                }
            }
            Err(e) => {
                result = Err(e);
                break;
            }
        }
    }
    // partial progress is kept even when the provider gave up midway
    embedder.save_cache(&cache)?;
    println!("cache now holds {} vectors ({} new)", cache.len(), cache.len() - before);
    result
}

fn cmd_run(args: RunArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let rc = RunConfig::resolve(args, cfg)?;
    let corpus = load_corpus(need_file(&rc.corpus)?)?;
    let split = load_split(&corpus, rc.split.as_deref(), rc.seed)?;
    let backend = build_backend(&rc)?;
    let provider = rc.embedder.provider();
    let cache = rc.embedder.load_cache()?;
    let opts = rc.run_options(backend.is_scripted());

    let prepared = pipeline::prepare(&corpus, &split, provider.as_ref(), &cache, &opts);
    rc.embedder.save_cache(&cache)?;
    let prepared = prepared?;
    let log = rc.log.as_deref().map(ResponseLog::append_to).transpose()?;
    let artifacts = pipeline::execute(&prepared, &backend, &opts, log.as_ref())?;

    write_results(&rc.results, &artifacts.records)?;
    let config = serde_json::to_value(&rc).map_err(|e| invalid(e.to_string()))?;
    let manifest = pipeline::manifest_for(&corpus, &split, &prepared, &backend, provider.as_ref(), &opts, config);
    let manifest_text = serde_json::to_string_pretty(&manifest).map_err(|e| invalid(e.to_string()))?;
    fs::write(manifest_path(&rc.results), manifest_text + "\n")
        .map_err(|e| invalid(format!("writing manifest: {e}")))?;

    let report = artifacts.report.with_manifest(manifest);
    print!("{}", emit_table(std::slice::from_ref(&report), TableFormat::Markdown, false));
    println!(
        "n = {}, skipped = {}, results -> {}",
        report.n,
        prepared.skipped.len(),
        rc.results.display()
    );
    Ok(())
}

fn load_report(path: &Path, boundaries: Option<&[usize]>) -> Result<MetricsReport, CliError> {
    let outcomes = read_results(need_file(path)?)?;
    let manifest: Option<RunManifest> = match fs::read_to_string(manifest_path(path)) {
        Ok(text) => Some(serde_json::from_str(&text).map_err(|e| invalid(format!("manifest: {e}")))?),
        Err(_) => None,
    };
    let bounds = boundaries
        .map(<[usize]>::to_vec)
        .or_else(|| manifest.as_ref().map(|m| m.boundaries.clone()))
        .unwrap_or_else(|| DEFAULT_BOUNDARIES.to_vec());
    let report = outcomes.metrics(&bounds)?;
    Ok(match manifest {
        Some(m) => report.with_manifest(RunManifest { boundaries: bounds, ..m }),
        None => report,
    })
}

fn cmd_report(args: ReportArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let paths: Vec<PathBuf> = if args.results.is_empty() {
        cfg.get("results")?.map(|p: PathBuf| vec![p]).unwrap_or_default()
    } else {
        args.results
    };
    if paths.is_empty() {
        return Err(invalid("report needs at least one --results file"));
    }
    let format: TableFormat = cfg
        .pick(args.format, "format", "md".to_string())?
        .parse()
        .map_err(invalid)?;
    let boundaries: Option<Vec<usize>> = cfg.pick_opt(args.boundaries, "boundaries")?;
    let reports = paths
        .iter()
        .map(|p| load_report(p, boundaries.as_deref()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = emit_table(&reports, format, args.reference);
    // repeats of one configuration get a spread line; mixed tables do not
    if let (true, Ok(s)) = (reports.len() > 1, aggregate_runs(&reports)) {
        out.push_str(&format!(
            "\n{} runs: accuracy mean {} range [{}, {}]; F1 mean {} range [{}, {}]\n",
            s.runs,
            percent(s.accuracy.mean),
            percent(s.accuracy.min),
            percent(s.accuracy.max),
            percent(s.f1.mean),
            percent(s.f1.min),
            percent(s.f1.max)
        ));
    }
    match cfg.pick_opt(args.out, "out")? {
        Some(path) => fs::write(&path, out).map_err(|e| invalid(format!("writing report: {e}")))?,
        None => print!("{out}"),
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let path: PathBuf = cfg.require(args.results, "results")?;
    let boundaries: Option<Vec<usize>> = cfg.pick_opt(args.boundaries, "boundaries")?;
    let report = load_report(&path, boundaries.as_deref())?;
    match cfg.pick(args.format, "format", "md".to_string())?.as_str() {
        "md" => print!("{}", emit_breakdown(&report)),
        "json" => {
            let v = serde_json::json!({
                "n": report.n,
                "accuracy": report.accuracy,
                "per_bucket": report.per_bucket,
                "per_bug_type": report.per_bug_type,
            });
            println!("{}", serde_json::to_string_pretty(&v).map_err(|e| invalid(e.to_string()))?);
        }
        other => return Err(invalid(format!("unknown format `{other}` (expected md or json)"))),
    }
    Ok(())
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let cfg = ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a, &cfg),
        Command::Split(a) => cmd_split(a, &cfg),
        Command::Embed(a) => cmd_embed(a, &cfg),
        Command::Run(a) => cmd_run(*a, &cfg),
        Command::Report(a) => cmd_report(a, &cfg),
        Command::Analyze(a) => cmd_analyze(a, &cfg),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backend_specs() {
        assert_eq!(parse_backend_spec("oracle").unwrap(), BackendSpec::Oracle);
        assert_eq!(parse_backend_spec("random:7").unwrap(), BackendSpec::Random(7));
        assert_eq!(parse_backend_spec("fixed:A").unwrap(), BackendSpec::Fixed("A".into()));
        assert_eq!(
            parse_backend_spec("replay:log.jsonl").unwrap(),
            BackendSpec::Replay("log.jsonl".into())
        );
        assert!(parse_backend_spec("random:x").is_err());
        assert!(parse_backend_spec("gpt").is_err());
        assert!(parse_backend_spec("fixed:").is_err());
    }

    #[test]
    fn endpoints() {
        assert_eq!(endpoint("https://h/v1/", "chat/completions"), "https://h/v1/chat/completions");
        assert_eq!(endpoint("https://h/v1/embeddings", "embeddings"), "https://h/v1/embeddings");
    }

    #[test]
    fn config_merge_flags_win() {
        let cfg = ConfigFile {
            table: toml::from_str("k = 2\nseed = 9\ntoken-budget = 900").unwrap(),
        };
        assert_eq!(cfg.pick(None, "k", 4usize).unwrap(), 2);
        assert_eq!(cfg.pick(Some(6usize), "k", 4).unwrap(), 6);
        assert_eq!(cfg.pick(None, "token_budget", 14_000usize).unwrap(), 900);
        assert_eq!(cfg.pick(None, "rpm", 0u32).unwrap(), 0);
        assert!(cfg.pick::<String>(None, "seed", String::new()).is_err());
    }

    #[test]
    fn manifest_sits_next_to_results() {
        assert_eq!(manifest_path(Path::new("out/r.jsonl")), PathBuf::from("out/r.jsonl.manifest.json"));
    }
}
