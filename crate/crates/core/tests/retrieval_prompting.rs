use std::path::PathBuf;

use codepair::corpus::{load_corpus, BugPair, BugType, Corpus, DatasetSplit, Role};
use codepair::embedding::{local_embed, EmbeddingCache, LocalProvider};
use codepair::llm::{ask, Backend, ChatBackend, BackendFailure, ChatRequest, Dispatch, PairChoice, ScriptedBackend, Verdict};
use codepair::pipeline::{build_demo_index, execute, prepare, RunOptions};
use codepair::prompting::{
    buggy_position, render, select_demonstrations, trim_to_budget, Demonstration, EvalTarget, PromptError,
    PromptSpec, Task, SYSTEM_TEXT,
};
use codepair::retrieval::l2_distance;
use codepair::retry::RetryPolicy;
use codepair::synthetic::generate_pairs;

fn fixture() -> Corpus {
    load_corpus(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/pairs10.jsonl")).unwrap()
}

fn split(train: &[&str], test: &[&str]) -> DatasetSplit {
    let own = |ids: &[&str]| ids.iter().map(|s| s.to_string()).collect();
    DatasetSplit {
        seed: 0,
        train: own(train),
        valid: Vec::new(),
        test: own(test),
    }
}

#[test]
fn demonstrations_match_brute_force_nearest_pairs() {
    let corpus = fixture();
    let train = ["vm-002", "vm-003", "sa-001", "sa-002", "op-001", "ot-001"];
    let sp = split(&train, &["listing1", "op-002"]);
    let provider = LocalProvider::new(128);
    let cache = EmbeddingCache::new();
    let retry = RetryPolicy::immediate(1);
    let index = build_demo_index(&corpus, &sp, Task::Pair, &provider, &cache, &retry, 2).unwrap();

    for test_id in &sp.test {
        let target = EvalTarget::Pair(corpus.get(test_id).unwrap().clone());
        let q = local_embed(&target.query_text(), 128);
        for k in 1..=6 {
            let got = select_demonstrations(&target, &q, &index, &corpus, k).unwrap();
            // oracle: distances to every training pair, sorted, ties by train order
            let mut all: Vec<(f64, usize, &str)> = train
                .iter()
                .enumerate()
                .map(|(i, id)| {
                    let v = local_embed(&corpus.get(id).unwrap().pair_text(), 128);
                    (l2_distance(&q, &v).unwrap(), i, *id)
                })
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let want: Vec<&str> = all.iter().take(k).map(|t| t.2).collect();
            let got_ids: Vec<&str> = got.iter().map(|d| d.pair.pair_id.as_str()).collect();
            assert_eq!(got_ids, want, "{test_id} k={k}");
            for (d, o) in got.iter().zip(&all) {
                assert_eq!(d.distance.to_bits(), o.0.to_bits());
            }
        }
    }
}

#[test]
fn own_pair_is_never_a_demonstration() {
    let corpus = fixture();
    let ids: Vec<&str> = corpus.ids().collect();
    let sp = split(&ids, &["listing1"]);
    let provider = LocalProvider::new(64);
    let cache = EmbeddingCache::new();
    let retry = RetryPolicy::immediate(1);
    for task in [Task::Pair, Task::Binary] {
        let index = build_demo_index(&corpus, &sp, task, &provider, &cache, &retry, 1).unwrap();
        let pair = corpus.get("listing1").unwrap().clone();
        let target = match task {
            Task::Pair => EvalTarget::Pair(pair),
            Task::Binary => EvalTarget::Function { pair, role: Role::Buggy },
        };
        let q = local_embed(&target.query_text(), 64);
        let demos = select_demonstrations(&target, &q, &index, &corpus, 9).unwrap();
        assert_eq!(demos.len(), 9);
        assert!(demos.iter().all(|d| d.pair.pair_id != "listing1"));
        let mut ids: Vec<_> = demos.iter().map(|d| d.pair.pair_id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 9);
    }
}

#[test]
fn empty_training_split_is_an_error() {
    let corpus = fixture();
    let sp = split(&[], &["listing1"]);
    let r = build_demo_index(
        &corpus,
        &sp,
        Task::Pair,
        &LocalProvider::new(64),
        &EmbeddingCache::new(),
        &RetryPolicy::immediate(1),
        1,
    );
    assert!(matches!(r, Err(codepair::pipeline::PipelineError::Prompt(PromptError::IndexEmpty))));
}

#[test]
fn pair_prompt_layout() {
    let corpus = fixture();
    let test = corpus.get("ot-001").unwrap().clone();
    let demo = Demonstration { pair: corpus.get("op-003").unwrap().clone(), distance: 0.5 };
    let spec = PromptSpec::new(Task::Pair, 1, 42);
    let p = render(&EvalTarget::Pair(test.clone()), std::slice::from_ref(&demo), &spec);

    let (da, db) = match buggy_position(42, "op-003") {
        PairChoice::A => (&demo.pair.buggy.code, &demo.pair.fixed.code),
        _ => (&demo.pair.fixed.code, &demo.pair.buggy.code),
    };
    let truth = buggy_position(42, "ot-001");
    let (ta, tb) = match truth {
        PairChoice::A => (&test.buggy.code, &test.fixed.code),
        _ => (&test.fixed.code, &test.buggy.code),
    };
    let expected = format!(
        "You will see two versions of the same function. Exactly one contains a bug.\n\
         [Example 1]\nFunction A:\n{}\nFunction B:\n{}\nAnswer: {}\n\
         [Task]\nFunction A:\n{}\nFunction B:\n{}\n\
         Which function contains the bug? Answer with exactly 'Function A' or 'Function B'.",
        da.trim_end(),
        db.trim_end(),
        buggy_position(42, "op-003").answer_text(),
        ta.trim_end(),
        tb.trim_end()
    );
    assert_eq!(p.system_text, SYSTEM_TEXT);
    assert_eq!(p.user_text, expected);
    assert_eq!(p.demo_ids, ["op-003"]);
}

#[test]
fn binary_prompt_shows_both_demo_functions() {
    let corpus = fixture();
    let demo = Demonstration { pair: corpus.get("op-003").unwrap().clone(), distance: 0.1 };
    let target = EvalTarget::Function { pair: corpus.get("ot-001").unwrap().clone(), role: Role::Fixed };
    let p = render(&target, &[demo], &PromptSpec::new(Task::Binary, 1, 42));
    assert_eq!(p.item_id, "ot-001#fixed");
    assert!(p.user_text.starts_with("You will see a function. Decide whether it contains a bug.\n[Example 1]\nFunction:\n"));
    assert!(p.user_text.contains("Answer: buggy\n"));
    assert!(p.user_text.contains("Answer: not buggy\n"));
    assert!(p.user_text.contains("[Example 2]"));
    assert!(p.user_text.ends_with("Does this function contain a bug? Answer with exactly 'buggy' or 'not buggy'."));
}

#[test]
fn budget_trimming_drops_farthest_first() {
    let pairs = generate_pairs(12, 4);
    let target = EvalTarget::Pair(pairs[0].clone());
    let demos: Vec<Demonstration> = pairs[1..5]
        .iter()
        .zip([0.4, 0.1, 0.3, 0.2])
        .map(|(p, d)| Demonstration { pair: p.clone(), distance: d })
        .collect();
    let mut spec = PromptSpec::new(Task::Pair, 4, 1);
    let id = |i: usize| pairs[i].pair_id.clone();
    let full = trim_to_budget(&target, &demos, &spec).unwrap();
    assert_eq!(full.demo_ids, [id(2), id(4), id(3), id(1)]);

    let two = render(&target, &[demos[1].clone(), demos[3].clone()], &spec).token_estimate;
    spec.token_budget = two;
    let trimmed = trim_to_budget(&target, &demos, &spec).unwrap();
    assert_eq!(trimmed.demo_ids, [id(2), id(4)]);
    assert_eq!(trimmed.dropped_demo_ids, [id(1), id(3)]);
    assert!(trimmed.token_estimate <= spec.token_budget);

    spec.token_budget = render(&target, &[], &spec).token_estimate - 1;
    assert!(matches!(
        trim_to_budget(&target, &demos, &spec),
        Err(PromptError::TestItemTooLarge { .. })
    ));
}

#[test]
fn buggy_slot_is_balanced_for_seed_42() {
    let pairs = generate_pairs(200, 0);
    let at_a = pairs.iter().filter(|p| buggy_position(42, &p.pair_id) == PairChoice::A).count();
    let frac = at_a as f64 / 200.0;
    assert!((0.4..=0.6).contains(&frac), "{frac}");
}

#[test]
fn oversized_test_items_are_skipped_not_fatal() {
    let mut pairs = generate_pairs(30, 6);
    let huge = "x = 1\n".repeat(3000);
    pairs.push(BugPair::new("huge", huge.clone(), huge + "y = 2\n", BugType::Other).unwrap());
    let corpus = Corpus::from_pairs(pairs).unwrap();
    let mut ids: Vec<&str> = corpus.ids().filter(|id| *id != "huge" && *id != "syn-00000").collect();
    ids.sort();
    let sp = split(&ids, &["huge", "syn-00000"]);
    let mut opts = RunOptions::new(PromptSpec::new(Task::Pair, 2, 42));
    opts.spec.token_budget = 2000;
    opts.retry = RetryPolicy::immediate(1);
    let prepared = prepare(&corpus, &sp, &LocalProvider::new(64), &EmbeddingCache::new(), &opts).unwrap();
    assert_eq!(prepared.skipped, ["huge"]);
    let run = execute(&prepared, &Backend::Scripted(ScriptedBackend::Oracle), &opts, None).unwrap();
    assert_eq!(run.report.n, 1);
}

/// Answers nonsense first, then a valid verdict.
struct Stubborn(std::sync::atomic::AtomicU32);

impl ChatBackend for Stubborn {
    fn id(&self) -> String {
        "stubborn".into()
    }
    fn send(&self, request: &ChatRequest) -> Result<String, BackendFailure> {
        let n = self.0.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        Ok(if n == 0 {
            "hard to say".into()
        } else {
            assert!(request.user_text.ends_with("Respond with exactly one of: Function A, Function B."));
            "Function B".into()
        })
    }
}

#[test]
fn unparseable_answer_is_reasked_once() {
    let corpus = fixture();
    let prompt = render(&EvalTarget::Pair(corpus.get("sa-002").unwrap().clone()), &[], &PromptSpec::new(Task::Pair, 0, 1));
    let backend = Backend::Remote(Box::new(Stubborn(Default::default())));
    let retry = RetryPolicy::immediate(1);
    let d = Dispatch {
        model_name: "m",
        temperature: 0.0,
        max_output_tokens: 64,
        retry: &retry,
        limiter: None,
        log: None,
        repeat_index: 0,
    };
    let a = ask(&prompt, &backend, &d).unwrap();
    assert!(a.reasked);
    assert_eq!(a.verdict, Verdict::Pair(PairChoice::B));
    assert_eq!(a.attempts, 2);
    let Backend::Remote(b) = &backend else { unreachable!() };
    assert_eq!(b.id(), "stubborn");

    // a scripted backend that never parses is still asked only twice
    let never = Backend::Scripted(ScriptedBackend::FixedChoice("no idea".into()));
    let a = ask(&prompt, &never, &d).unwrap();
    assert!(a.reasked);
    assert_eq!(a.verdict, Verdict::Pair(PairChoice::Unparseable));
}
