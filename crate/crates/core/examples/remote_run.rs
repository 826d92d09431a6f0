//! Sends a handful of prompts to an OpenAI-compatible chat endpoint.
//!
//! LLM_API_KEY=... cargo run --example remote_run -- https://api.openai.com/v1 [MODEL]

use codepair::corpus::{split_corpus, DEFAULT_RATIOS};
use codepair::embedding::{EmbeddingCache, LocalProvider};
use codepair::llm::{Backend, RemoteChatBackend, ResponseLog};
use codepair::pipeline::{execute, prepare, RunOptions};
use codepair::prompting::{PromptSpec, Task};
use codepair::synthetic::generate_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let Some(base) = args.next() else {
        eprintln!("usage: remote_run <API_BASE> [MODEL]");
        std::process::exit(64);
    };
    let corpus = generate_corpus(120, 1);
    let split = split_corpus(&corpus, 42, DEFAULT_RATIOS)?;
    let mut opts = RunOptions::new(PromptSpec::new(Task::Pair, 4, 42));
    opts.model_name = args.next().unwrap_or_else(|| "gpt-3.5-turbo".into());
    opts.rpm = Some(60);
    opts.max_in_flight = 2;

    let prepared = prepare(&corpus, &split, &LocalProvider::new(256), &EmbeddingCache::new(), &opts)?;
    let url = format!("{}/chat/completions", base.trim_end_matches('/'));
    let backend = Backend::Remote(Box::new(RemoteChatBackend::from_env(url)));
    let log = ResponseLog::append_to(&std::env::temp_dir().join("codepair-remote.log.jsonl"))?;
    let run = execute(&prepared, &backend, &opts, Some(&log))?;
    println!("accuracy {:.4}, F1 {:.4} over {}", run.report.accuracy, run.report.f1, run.report.n);
    Ok(())
}
