//! End-to-end evaluation: split → embeddings → flat index → prompts →
//! backend → scored results.
//!
//! [`prepare`] does everything up to the rendered prompts so callers can
//! inspect them (and their hidden truth) before anything is sent;
//! [`execute`] dispatches them and scores the answers.

use thiserror::Error;

use crate::corpus::{BugPair, Corpus, CorpusError, DatasetSplit};
use crate::embedding::{embed_batch, EmbeddingCache, EmbeddingError, EmbeddingProvider};
use crate::eval::{
    BinaryOutcome, EvalError, MetricsReport, Outcomes, PairOutcome, ResultRecord, RunManifest,
};
use crate::exec::bounded_map;
use crate::llm::{ask, Backend, Dispatch, LlmError, ResponseLog, Verdict};
use crate::prompting::{
    select_demonstrations, targets_for, trim_to_budget, DemoIndex, EvalTarget, PromptError,
    PromptSpec, RenderedPrompt, Task, Truth,
};
use crate::retrieval::{build_index, RetrievalError};
use crate::retry::{RateLimiter, RetryPolicy};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Config(String),
}

impl PipelineError {
    /// True when a remote service (or a replay log standing in for one)
    /// failed, as opposed to bad input.
    pub fn is_provider_failure(&self) -> bool {
        matches!(
            self,
            PipelineError::Embedding(
                EmbeddingError::ProviderUnavailable { .. } | EmbeddingError::AuthFailure(_)
            ) | PipelineError::Llm(
                LlmError::ProviderUnavailable { .. }
                    | LlmError::AuthFailure(_)
                    | LlmError::MissingLogEntry(_)
            )
        )
    }
}

/// Knobs shared by [`prepare`] and [`execute`].
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub spec: PromptSpec,
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub max_in_flight: usize,
    pub rpm: Option<u32>,
    pub retry: RetryPolicy,
    pub boundaries: Vec<usize>,
    pub repeat_index: u32,
}

impl RunOptions {
    pub fn new(spec: PromptSpec) -> Self {
        Self {
            spec,
            model_name: "gpt-3.5-turbo".into(),
            temperature: 0.0,
            max_output_tokens: 64,
            max_in_flight: 4,
            rpm: None,
            retry: RetryPolicy::default(),
            boundaries: crate::corpus::DEFAULT_BOUNDARIES.to_vec(),
            repeat_index: 0,
        }
    }
}

/// Rendered prompts for one run, in test-split order.
pub struct PreparedRun {
    pub task: Task,
    pub targets: Vec<EvalTarget>,
    pub prompts: Vec<RenderedPrompt>,
    /// Items skipped because even the zero-shot prompt exceeded the budget.
    pub skipped: Vec<String>,
}

fn pairs_for<'c>(corpus: &'c Corpus, ids: &[String]) -> Result<Vec<&'c BugPair>, CorpusError> {
    ids.iter()
        .map(|id| corpus.get(id).ok_or_else(|| CorpusError::UnknownPairId(id.clone())))
        .collect()
}

/// Embeds the training split into a task-shaped flat index.
pub fn build_demo_index(
    corpus: &Corpus,
    split: &DatasetSplit,
    task: Task,
    provider: &dyn EmbeddingProvider,
    cache: &EmbeddingCache,
    retry: &RetryPolicy,
    max_in_flight: usize,
) -> Result<DemoIndex, PipelineError> {
    let train = pairs_for(corpus, &split.train)?;
    let entries = DemoIndex::entry_texts(task, &train);
    let texts: Vec<String> = entries.iter().map(|(_, t)| t.clone()).collect();
    let vectors = embed_batch(&texts, provider, cache, retry, max_in_flight)?;
    let index = build_index(
        entries
            .into_iter()
            .zip(vectors)
            .map(|((id, _), v)| (id, v.into_values())),
    )
    .map_err(|e| match e {
        RetrievalError::EmptyInput => PipelineError::Prompt(PromptError::IndexEmpty),
        other => other.into(),
    })?;
    Ok(DemoIndex { task, index })
}

pub fn prepare(
    corpus: &Corpus,
    split: &DatasetSplit,
    provider: &dyn EmbeddingProvider,
    cache: &EmbeddingCache,
    opts: &RunOptions,
) -> Result<PreparedRun, PipelineError> {
    let spec = &opts.spec;
    let task = spec.task;
    let test = pairs_for(corpus, &split.test)?;
    let targets = targets_for(task, &test);

    let query_vectors = if spec.k > 0 {
        let texts: Vec<String> = targets.iter().map(EvalTarget::query_text).collect();
        embed_batch(&texts, provider, cache, &opts.retry, opts.max_in_flight)?
    } else {
        Vec::new()
    };
    let index = if spec.k > 0 {
        Some(build_demo_index(
            corpus,
            split,
            task,
            provider,
            cache,
            &opts.retry,
            opts.max_in_flight,
        )?)
    } else {
        None
    };

    let mut prompts = Vec::with_capacity(targets.len());
    let mut kept = Vec::with_capacity(targets.len());
    let mut skipped = Vec::new();
    for (i, target) in targets.into_iter().enumerate() {
        let demos = match &index {
            Some(index) => {
                select_demonstrations(&target, query_vectors[i].values(), index, corpus, spec.k)?
            }
            None => Vec::new(),
        };
        match trim_to_budget(&target, &demos, spec) {
            Ok(prompt) => {
                prompts.push(prompt);
                kept.push(target);
            }
            Err(PromptError::TestItemTooLarge { item_id, estimate, budget }) => {
                log::warn!("skipping {item_id}: {estimate} tokens > budget {budget}");
                skipped.push(item_id);
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(PreparedRun {
        task,
        targets: kept,
        prompts,
        skipped,
    })
}

/// Scored output of one run.
pub struct RunArtifacts {
    pub records: Vec<ResultRecord>,
    pub outcomes: Outcomes,
    pub report: MetricsReport,
}

pub fn execute(
    prepared: &PreparedRun,
    backend: &Backend,
    opts: &RunOptions,
    log: Option<&ResponseLog>,
) -> Result<RunArtifacts, PipelineError> {
    let limiter = opts.rpm.map(RateLimiter::per_minute);
    let dispatch = Dispatch {
        model_name: &opts.model_name,
        temperature: opts.temperature,
        max_output_tokens: opts.max_output_tokens,
        retry: &opts.retry,
        limiter: limiter.as_ref(),
        log,
        repeat_index: opts.repeat_index,
    };
    let answers = bounded_map(&prepared.prompts, opts.max_in_flight, |_, prompt| {
        ask(prompt, backend, &dispatch)
    });

    let mut records = Vec::with_capacity(answers.len());
    let mut pair_outcomes = Vec::new();
    let mut binary_outcomes = Vec::new();
    for ((target, prompt), answer) in prepared.targets.iter().zip(&prepared.prompts).zip(answers) {
        let answer = answer?;
        let raw_ref = log.map(|_| answer.prompt_hash.clone());
        match (prompt.truth, answer.verdict, target) {
            (Truth::Pair(truth), Verdict::Pair(predicted), EvalTarget::Pair(pair)) => {
                let o = PairOutcome::new(
                    pair.pair_id.clone(),
                    predicted,
                    truth,
                    pair.token_count_pair(),
                    pair.bug_type,
                );
                records.push(ResultRecord::from_pair(&o, prompt.prompt_hash(), raw_ref));
                pair_outcomes.push(o);
            }
            (Truth::Binary(actual), Verdict::Binary(predicted), EvalTarget::Function { pair, role }) => {
                let o = BinaryOutcome {
                    fn_id: pair.function(*role).fn_id.clone(),
                    predicted,
                    actual,
                    token_count: pair.function(*role).token_count,
                    bug_type: pair.bug_type,
                };
                records.push(ResultRecord::from_binary(&o, prompt.prompt_hash(), raw_ref));
                binary_outcomes.push(o);
            }
            _ => unreachable!("verdict kind always follows the prompt's task"),
        }
    }
    let outcomes = match prepared.task {
        Task::Pair => Outcomes::Pair(pair_outcomes),
        Task::Binary => Outcomes::Binary(binary_outcomes),
    };
    let report = outcomes.metrics(&opts.boundaries)?.with_model(opts.model_name.clone());
    Ok(RunArtifacts {
        records,
        outcomes,
        report,
    })
}

/// Fills in the reproducibility record for a finished run.
pub fn manifest_for(
    corpus: &Corpus,
    split: &DatasetSplit,
    prepared: &PreparedRun,
    backend: &Backend,
    provider: &dyn EmbeddingProvider,
    opts: &RunOptions,
    config: serde_json::Value,
) -> RunManifest {
    RunManifest {
        task: opts.spec.task,
        model_name: opts.model_name.clone(),
        backend_id: backend.id(),
        embedder_id: provider.model_id().to_string(),
        seed: opts.spec.seed,
        k: opts.spec.k,
        temperature: opts.temperature,
        token_budget: opts.spec.token_budget,
        safety_factor: opts.spec.safety_factor,
        boundaries: opts.boundaries.clone(),
        corpus_hash: corpus.content_hash(),
        split_hash: split.content_hash(),
        repeat_index: opts.repeat_index,
        timestamp: chrono::Utc::now().to_rfc3339(),
        skipped: prepared.skipped.clone(),
        config,
    }
}
