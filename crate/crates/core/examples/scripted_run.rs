//! Full offline evaluation with the scripted backends.
//!
//! cargo run --example scripted_run -- [N_PAIRS]

use codepair::corpus::{split_corpus, DEFAULT_RATIOS};
use codepair::embedding::{EmbeddingCache, LocalProvider};
use codepair::eval::{emit_table, TableFormat};
use codepair::llm::{Backend, ScriptedBackend};
use codepair::pipeline::{execute, prepare, RunOptions};
use codepair::prompting::{PromptSpec, Task};
use codepair::retry::RetryPolicy;
use codepair::synthetic::generate_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(400);
    let corpus = generate_corpus(n, 42);
    let split = split_corpus(&corpus, 42, DEFAULT_RATIOS)?;
    let provider = LocalProvider::new(256);
    let cache = EmbeddingCache::new();

    let mut reports = Vec::new();
    for task in [Task::Pair, Task::Binary] {
        let mut opts = RunOptions::new(PromptSpec::new(task, 4, 42));
        opts.retry = RetryPolicy::immediate(1);
        let prepared = prepare(&corpus, &split, &provider, &cache, &opts)?;
        for scripted in [
            ScriptedBackend::Oracle,
            ScriptedBackend::RandomChoice(7),
            ScriptedBackend::FixedChoice(if task == Task::Pair { "Function A" } else { "buggy" }.into()),
        ] {
            let backend = Backend::Scripted(scripted);
            opts.model_name = backend.id();
            let run = execute(&prepared, &backend, &opts, None)?;
            reports.push(run.report);
        }
    }
    print!("{}", emit_table(&reports, TableFormat::Markdown, false));
    Ok(())
}
