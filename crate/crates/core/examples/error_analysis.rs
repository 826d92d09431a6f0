//! Accuracy by pair length and by bug type for a seeded random baseline.

use codepair::corpus::{split_corpus, DEFAULT_RATIOS};
use codepair::embedding::{EmbeddingCache, LocalProvider};
use codepair::eval::{emit_breakdown, rank_by_accuracy};
use codepair::llm::{Backend, ScriptedBackend};
use codepair::pipeline::{execute, prepare, RunOptions};
use codepair::prompting::{PromptSpec, Task};
use codepair::retry::RetryPolicy;
use codepair::synthetic::generate_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_corpus(1200, 9);
    let split = split_corpus(&corpus, 42, DEFAULT_RATIOS)?;
    let mut opts = RunOptions::new(PromptSpec::new(Task::Pair, 2, 42));
    opts.retry = RetryPolicy::immediate(1);
    opts.boundaries = vec![60, 250];

    let prepared = prepare(&corpus, &split, &LocalProvider::new(128), &EmbeddingCache::new(), &opts)?;
    let run = execute(&prepared, &Backend::Scripted(ScriptedBackend::RandomChoice(3)), &opts, None)?;

    print!("{}", emit_breakdown(&run.report));
    println!("\nhardest bug type first:");
    for (t, stat) in rank_by_accuracy(&run.report.per_bug_type) {
        println!("  {:<22} {}/{}", t.as_str(), stat.correct, stat.n);
    }
    Ok(())
}
