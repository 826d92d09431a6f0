//! Retrieves demonstrations for one test pair and prints both prompt kinds.

use codepair::corpus::{split_corpus, Role, DEFAULT_RATIOS};
use codepair::embedding::{embed, EmbeddingCache, LocalProvider};
use codepair::pipeline::build_demo_index;
use codepair::prompting::{select_demonstrations, trim_to_budget, EvalTarget, PromptSpec, Task};
use codepair::retry::RetryPolicy;
use codepair::synthetic::generate_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_corpus(60, 5);
    let split = split_corpus(&corpus, 42, DEFAULT_RATIOS)?;
    let provider = LocalProvider::new(256);
    let cache = EmbeddingCache::new();
    let retry = RetryPolicy::immediate(1);
    let pair = corpus.get(&split.test[0]).expect("test id in corpus").clone();

    for (task, target) in [
        (Task::Pair, EvalTarget::Pair(pair.clone())),
        (Task::Binary, EvalTarget::Function { pair: pair.clone(), role: Role::Fixed }),
    ] {
        let spec = PromptSpec::new(task, 2, 42);
        let index = build_demo_index(&corpus, &split, task, &provider, &cache, &retry, 2)?;
        let q = embed(&target.query_text(), &provider, &cache, &retry)?;
        let demos = select_demonstrations(&target, q.values(), &index, &corpus, spec.k)?;
        let prompt = trim_to_budget(&target, &demos, &spec)?;
        println!("===== {} prompt for {} (~{} tokens)", task.as_str(), prompt.item_id, prompt.token_estimate);
        println!("[system] {}", prompt.system_text);
        println!("{}", prompt.user_text);
        println!("[hidden truth] {:?}, demos {:?}\n", prompt.truth, prompt.demo_ids);
    }
    Ok(())
}
