//! Demonstration selection and few-shot prompt rendering for the binary and
//! code-pair tasks.
//!
//! Every random choice here (which function lands in slot A, the order of a
//! binary demonstration's two examples) comes from a fresh RNG seeded with
//! `spec.seed ^ fnv1a64(pair_id)`, so a pair is rendered the same way no
//! matter which other demonstrations survive trimming.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{count_tokens, BugPair, Corpus, Role};
use crate::embedding::fnv1a64;
use crate::llm::{BinaryLabel, PairChoice};
use crate::retrieval::{FlatIndex, RetrievalError};

pub const DEFAULT_K: usize = 4;
pub const MAX_K: usize = 16;
pub const DEFAULT_TOKEN_BUDGET: usize = 14_000;
pub const DEFAULT_SAFETY_FACTOR: f64 = 1.3;
/// Context window of the reference chat model.
pub const DEFAULT_CONTEXT_LIMIT: usize = 16_385;

pub const SYSTEM_TEXT: &str = "You are an expert software engineer reviewing Python functions for bugs.";

const PAIR_INTRO: &str = "You will see two versions of the same function. Exactly one contains a bug.";
const PAIR_QUESTION: &str =
    "Which function contains the bug? Answer with exactly 'Function A' or 'Function B'.";
const BINARY_INTRO: &str = "You will see a function. Decide whether it contains a bug.";
const BINARY_QUESTION: &str =
    "Does this function contain a bug? Answer with exactly 'buggy' or 'not buggy'.";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("demonstration index is empty")]
    IndexEmpty,
    #[error("test item `{item_id}` needs {estimate} tokens with no demonstrations; budget is {budget}")]
    TestItemTooLarge {
        item_id: String,
        estimate: usize,
        budget: usize,
    },
    #[error("invalid prompt spec: {0}")]
    InvalidSpec(String),
    #[error("pair `{0}` is not in the corpus")]
    UnknownPair(String),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binary,
    Pair,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Binary => "binary",
            Task::Pair => "pair",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" => Ok(Task::Binary),
            "pair" => Ok(Task::Pair),
            other => Err(format!("unknown task `{other}` (expected pair or binary)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub task: Task,
    pub k: usize,
    pub seed: u64,
    pub token_budget: usize,
    pub safety_factor: f64,
}

impl PromptSpec {
    pub fn new(task: Task, k: usize, seed: u64) -> Self {
        Self {
            task,
            k,
            seed,
            token_budget: DEFAULT_TOKEN_BUDGET,
            safety_factor: DEFAULT_SAFETY_FACTOR,
        }
    }

    pub fn validate(&self, context_limit: usize) -> Result<(), PromptError> {
        if self.k > MAX_K {
            return Err(PromptError::InvalidSpec(format!("k = {} exceeds {MAX_K}", self.k)));
        }
        if self.token_budget == 0 || self.token_budget > context_limit {
            return Err(PromptError::InvalidSpec(format!(
                "token budget {} must be in 1..={context_limit}",
                self.token_budget
            )));
        }
        if !(self.safety_factor.is_finite() && self.safety_factor >= 1.0) {
            return Err(PromptError::InvalidSpec(format!(
                "safety factor {} must be >= 1",
                self.safety_factor
            )));
        }
        Ok(())
    }

    pub fn estimate(&self, system_text: &str, user_text: &str) -> usize {
        let raw = count_tokens(&format!("{system_text}{user_text}"));
        (raw as f64 * self.safety_factor).ceil() as usize
    }
}

/// Ground truth for a rendered test item. Kept out of the prompt text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Truth {
    Pair(PairChoice),
    Binary(BinaryLabel),
}

/// The item a prompt asks about.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalTarget {
    Pair(BugPair),
    Function { pair: BugPair, role: Role },
}

impl EvalTarget {
    pub fn task(&self) -> Task {
        match self {
            EvalTarget::Pair(_) => Task::Pair,
            EvalTarget::Function { .. } => Task::Binary,
        }
    }

    pub fn pair(&self) -> &BugPair {
        match self {
            EvalTarget::Pair(p) | EvalTarget::Function { pair: p, .. } => p,
        }
    }

    /// pair_id for the pair task, fn_id for the binary task.
    pub fn item_id(&self) -> &str {
        match self {
            EvalTarget::Pair(p) => &p.pair_id,
            EvalTarget::Function { pair, role } => &pair.function(*role).fn_id,
        }
    }

    /// Text embedded to find neighbours.
    pub fn query_text(&self) -> String {
        match self {
            EvalTarget::Pair(p) => p.pair_text(),
            EvalTarget::Function { pair, role } => pair.function(*role).code.clone(),
        }
    }

    pub fn token_count(&self) -> usize {
        match self {
            EvalTarget::Pair(p) => p.token_count_pair(),
            EvalTarget::Function { pair, role } => pair.function(*role).token_count,
        }
    }
}

/// Expands test pairs into evaluation targets: one per pair for the pair
/// task, buggy then fixed function for the binary task.
pub fn targets_for(task: Task, pairs: &[&BugPair]) -> Vec<EvalTarget> {
    match task {
        Task::Pair => pairs.iter().map(|p| EvalTarget::Pair((*p).clone())).collect(),
        Task::Binary => pairs
            .iter()
            .flat_map(|p| {
                [Role::Buggy, Role::Fixed].map(|role| EvalTarget::Function {
                    pair: (*p).clone(),
                    role,
                })
            })
            .collect(),
    }
}

/// A retrieved training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub pair: BugPair,
    pub distance: f64,
}

impl Demonstration {
    /// Slot holding the buggy function when this pair is shown A/B.
    pub fn buggy_position(&self, seed: u64) -> PairChoice {
        buggy_position(seed, &self.pair.pair_id)
    }
}

fn item_rng(seed: u64, id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(id.as_bytes()))
}

/// Seeded fair coin deciding whether the buggy function goes in slot A.
pub fn buggy_position(seed: u64, pair_id: &str) -> PairChoice {
    if item_rng(seed, pair_id).gen::<bool>() {
        PairChoice::A
    } else {
        PairChoice::B
    }
}

/// Retrieval index over the training split, shaped for one task: one entry
/// per pair (pair text) for the pair task, one per function for the binary
/// task. Entry ids are pair ids in both cases.
pub struct DemoIndex {
    pub task: Task,
    pub index: FlatIndex,
}

impl DemoIndex {
    /// Texts to embed for the training pairs, with the pair id each belongs to.
    pub fn entry_texts(task: Task, train: &[&BugPair]) -> Vec<(String, String)> {
        match task {
            Task::Pair => train
                .iter()
                .map(|p| (p.pair_id.clone(), p.pair_text()))
                .collect(),
            Task::Binary => train
                .iter()
                .flat_map(|p| {
                    [
                        (p.pair_id.clone(), p.buggy.code.clone()),
                        (p.pair_id.clone(), p.fixed.code.clone()),
                    ]
                })
                .collect(),
        }
    }
}

/// The k nearest training pairs for a target, nearest first. The target's
/// own pair is never returned; the binary index can hold two entries per
/// pair, so hits are de-duplicated by pair id.
pub fn select_demonstrations(
    target: &EvalTarget,
    query_vector: &[f64],
    index: &DemoIndex,
    corpus: &Corpus,
    k: usize,
) -> Result<Vec<Demonstration>, PromptError> {
    if index.index.is_empty() {
        return Err(PromptError::IndexEmpty);
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let own = &target.pair().pair_id;
    let fetch = (2 * k + 2).min(index.index.len());
    let hits = index.index.query(query_vector, fetch)?;
    let mut seen = std::collections::HashSet::new();
    let mut demos = Vec::with_capacity(k);
    for hit in hits {
        if &hit.id == own || !seen.insert(hit.id.clone()) {
            continue;
        }
        let pair = corpus
            .get(&hit.id)
            .ok_or_else(|| PromptError::UnknownPair(hit.id.clone()))?;
        demos.push(Demonstration {
            pair: pair.clone(),
            distance: hit.distance,
        });
        if demos.len() == k {
            break;
        }
    }
    Ok(demos)
}

/// A fully rendered prompt plus the hidden answer and audit metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub task: Task,
    pub item_id: String,
    pub system_text: String,
    pub user_text: String,
    pub token_estimate: usize,
    pub truth: Truth,
    pub demo_ids: Vec<String>,
    /// Buggy slot of each rendered pair demonstration (empty for binary).
    pub demo_positions: Vec<PairChoice>,
    /// Demonstrations removed by [`trim_to_budget`], farthest first.
    pub dropped_demo_ids: Vec<String>,
}

impl RenderedPrompt {
    pub fn prompt_hash(&self) -> String {
        prompt_hash(&self.system_text, &self.user_text)
    }
}

/// SHA-256 over `system || 0x00 || user`, hex encoded.
pub fn prompt_hash(system_text: &str, user_text: &str) -> String {
    let mut h = Sha256::new();
    h.update(system_text.as_bytes());
    h.update([0u8]);
    h.update(user_text.as_bytes());
    hex::encode(h.finalize())
}

fn code_block(code: &str) -> &str {
    code.trim_end_matches(['\n', '\r'])
}

fn ab_slots(pair: &BugPair, buggy_at: PairChoice) -> (&str, &str) {
    match buggy_at {
        PairChoice::A => (&pair.buggy.code, &pair.fixed.code),
        _ => (&pair.fixed.code, &pair.buggy.code),
    }
}

pub fn render_pair_prompt(test_pair: &BugPair, demos: &[Demonstration], spec: &PromptSpec) -> RenderedPrompt {
    let mut user = String::new();
    user.push_str(PAIR_INTRO);
    user.push('\n');
    let mut demo_positions = Vec::with_capacity(demos.len());
    for (i, demo) in demos.iter().enumerate() {
        let at = demo.buggy_position(spec.seed);
        demo_positions.push(at);
        let (a, b) = ab_slots(&demo.pair, at);
        let _ = write!(
            user,
            "[Example {}]\nFunction A:\n{}\nFunction B:\n{}\nAnswer: {}\n",
            i + 1,
            code_block(a),
            code_block(b),
            at.answer_text()
        );
    }
    let truth = buggy_position(spec.seed, &test_pair.pair_id);
    let (a, b) = ab_slots(test_pair, truth);
    let _ = write!(
        user,
        "[Task]\nFunction A:\n{}\nFunction B:\n{}\n{}",
        code_block(a),
        code_block(b),
        PAIR_QUESTION
    );
    RenderedPrompt {
        task: Task::Pair,
        item_id: test_pair.pair_id.clone(),
        token_estimate: spec.estimate(SYSTEM_TEXT, &user),
        system_text: SYSTEM_TEXT.to_string(),
        user_text: user,
        truth: Truth::Pair(truth),
        demo_ids: demos.iter().map(|d| d.pair.pair_id.clone()).collect(),
        demo_positions,
        dropped_demo_ids: Vec::new(),
    }
}

fn label_for(role: Role) -> BinaryLabel {
    match role {
        Role::Buggy => BinaryLabel::Buggy,
        Role::Fixed => BinaryLabel::NotBuggy,
    }
}

/// Each demonstration contributes its buggy and fixed function as two
/// labelled examples; a per-pair coin decides which comes first.
pub fn render_binary_prompt(
    test_pair: &BugPair,
    test_role: Role,
    demos: &[Demonstration],
    spec: &PromptSpec,
) -> RenderedPrompt {
    let mut user = String::new();
    user.push_str(BINARY_INTRO);
    user.push('\n');
    let mut n = 0;
    for demo in demos {
        let buggy_first = item_rng(spec.seed, &demo.pair.pair_id).gen::<bool>();
        let order = if buggy_first {
            [Role::Buggy, Role::Fixed]
        } else {
            [Role::Fixed, Role::Buggy]
        };
        for role in order {
            n += 1;
            let _ = write!(
                user,
                "[Example {n}]\nFunction:\n{}\nAnswer: {}\n",
                code_block(&demo.pair.function(role).code),
                label_for(role).as_str()
            );
        }
    }
    let test_fn = test_pair.function(test_role);
    let _ = write!(
        user,
        "[Task]\nFunction:\n{}\n{}",
        code_block(&test_fn.code),
        BINARY_QUESTION
    );
    RenderedPrompt {
        task: Task::Binary,
        item_id: test_fn.fn_id.clone(),
        token_estimate: spec.estimate(SYSTEM_TEXT, &user),
        system_text: SYSTEM_TEXT.to_string(),
        user_text: user,
        truth: Truth::Binary(label_for(test_role)),
        demo_ids: demos.iter().map(|d| d.pair.pair_id.clone()).collect(),
        demo_positions: Vec::new(),
        dropped_demo_ids: Vec::new(),
    }
}

pub fn render(target: &EvalTarget, demos: &[Demonstration], spec: &PromptSpec) -> RenderedPrompt {
    match target {
        EvalTarget::Pair(p) => render_pair_prompt(p, demos, spec),
        EvalTarget::Function { pair, role } => render_binary_prompt(pair, *role, demos, spec),
    }
}

/// Renders the target with as many demonstrations as fit the budget.
///
/// Demonstrations are ordered by ascending distance (stable, so equal
/// distances keep retrieval order) and whole demonstrations are dropped from
/// the far end until the estimate fits.
pub fn trim_to_budget(
    target: &EvalTarget,
    demos: &[Demonstration],
    spec: &PromptSpec,
) -> Result<RenderedPrompt, PromptError> {
    let zero_shot = render(target, &[], spec);
    if zero_shot.token_estimate > spec.token_budget {
        return Err(PromptError::TestItemTooLarge {
            item_id: target.item_id().to_string(),
            estimate: zero_shot.token_estimate,
            budget: spec.token_budget,
        });
    }
    let mut kept: Vec<Demonstration> = demos.to_vec();
    kept.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    let mut dropped = Vec::new();
    loop {
        let prompt = render(target, &kept, spec);
        if prompt.token_estimate <= spec.token_budget || kept.is_empty() {
            return Ok(RenderedPrompt {
                dropped_demo_ids: dropped,
                ..prompt
            });
        }
        let far = kept.pop().expect("non-empty");
        dropped.push(far.pair.pair_id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::BugType;

    fn pair(id: &str, buggy: &str, fixed: &str) -> BugPair {
        BugPair::new(id, buggy, fixed, BugType::Other).unwrap()
    }

    fn demo(id: &str, distance: f64) -> Demonstration {
        Demonstration {
            pair: pair(id, &format!("def {id}(x):\n    return x + 1\n"), &format!("def {id}(x):\n    return x - 1\n")),
            distance,
        }
    }

    #[test]
    fn zero_shot_pair_template() {
        let p = pair("t", "return a", "return b");
        let spec = PromptSpec::new(Task::Pair, 0, 1);
        let r = render_pair_prompt(&p, &[], &spec);
        assert_eq!(r.user_text.matches("Function A:\n").count(), 1);
        assert_eq!(r.user_text.matches("Function B:\n").count(), 1);
        assert!(r.user_text.ends_with(PAIR_QUESTION));
        assert!(r.user_text.starts_with(PAIR_INTRO));
        let expected_a = match r.truth {
            Truth::Pair(PairChoice::A) => "return a",
            _ => "return b",
        };
        assert!(r.user_text.contains(&format!("Function A:\n{expected_a}\nFunction B:")));
    }

    #[test]
    fn exact_pair_layout() {
        let p = pair("t", "x = a\n", "x = b\n");
        let d = Demonstration { pair: pair("d", "y = 1", "y = 2"), distance: 0.5 };
        let spec = PromptSpec::new(Task::Pair, 1, 3);
        let r = render_pair_prompt(&p, std::slice::from_ref(&d), &spec);
        let (da, db) = ab_slots(&d.pair, d.buggy_position(3));
        let (ta, tb) = match r.truth {
            Truth::Pair(c) => ab_slots(&p, c),
            _ => unreachable!(),
        };
        let expected = format!(
            "{PAIR_INTRO}\n[Example 1]\nFunction A:\n{da}\nFunction B:\n{db}\nAnswer: {}\n[Task]\nFunction A:\n{}\nFunction B:\n{}\n{PAIR_QUESTION}",
            d.buggy_position(3).answer_text(),
            ta.trim_end(),
            tb.trim_end()
        );
        assert_eq!(r.user_text, expected);
        assert_eq!(r.token_estimate, spec.estimate(SYSTEM_TEXT, &r.user_text));
    }

    #[test]
    fn deterministic_rendering() {
        let p = pair("t", "a", "b");
        let demos = [demo("d1", 0.1), demo("d2", 0.2)];
        let spec = PromptSpec::new(Task::Pair, 2, 42);
        assert_eq!(render_pair_prompt(&p, &demos, &spec), render_pair_prompt(&p, &demos, &spec));
    }

    #[test]
    fn binary_expansion() {
        let p = pair("t", "bad()", "good()");
        let spec = PromptSpec::new(Task::Binary, 1, 9);
        let r0 = render_binary_prompt(&p, Role::Buggy, &[], &spec);
        assert_eq!(r0.truth, Truth::Binary(BinaryLabel::Buggy));
        assert!(!r0.user_text.contains("[Example"));
        assert!(r0.user_text.ends_with(BINARY_QUESTION));

        let r1 = render_binary_prompt(&p, Role::Fixed, &[demo("d", 0.3)], &spec);
        assert_eq!(r1.user_text.matches("[Example ").count(), 2);
        assert_eq!(r1.user_text.matches("Answer: buggy\n").count(), 1);
        assert_eq!(r1.user_text.matches("Answer: not buggy\n").count(), 1);
        assert_eq!(r1.truth, Truth::Binary(BinaryLabel::NotBuggy));
        assert_eq!(r1.item_id, "t#fixed");
        assert_eq!(r1, render_binary_prompt(&p, Role::Fixed, &[demo("d", 0.3)], &spec));
    }

    #[test]
    fn test_block_has_no_answer() {
        let p = pair("t", "a = 1", "a = 2");
        for task in [Task::Pair, Task::Binary] {
            let spec = PromptSpec::new(task, 2, 5);
            let target = match task {
                Task::Pair => EvalTarget::Pair(p.clone()),
                Task::Binary => EvalTarget::Function { pair: p.clone(), role: Role::Buggy },
            };
            let r = render(&target, &[demo("d1", 0.1), demo("d2", 0.2)], &spec);
            let tail = r.user_text.split("[Task]").nth(1).unwrap();
            assert!(!tail.contains("Answer:"));
        }
    }

    #[test]
    fn trimming_drops_farthest() {
        let p = pair("t", "a = 1", "a = 2");
        let demos = vec![demo("near", 0.1), demo("far", 0.9), demo("mid", 0.5)];
        let mut spec = PromptSpec::new(Task::Pair, 3, 1);
        let target = EvalTarget::Pair(p);

        let all = trim_to_budget(&target, &demos, &spec).unwrap();
        assert_eq!(all.demo_ids, ["near", "mid", "far"]);
        assert!(all.dropped_demo_ids.is_empty());

        let two = render(&target, &[demos[0].clone(), demos[2].clone()], &spec);
        spec.token_budget = two.token_estimate;
        let trimmed = trim_to_budget(&target, &demos, &spec).unwrap();
        assert_eq!(trimmed.demo_ids, ["near", "mid"]);
        assert_eq!(trimmed.dropped_demo_ids, ["far"]);
    }

    #[test]
    fn oversized_item() {
        let big = "x = y + z\n".repeat(6000);
        let p = pair("huge", &big, &format!("{big}w = 0\n"));
        let spec = PromptSpec::new(Task::Pair, 0, 1);
        assert!(matches!(
            trim_to_budget(&EvalTarget::Pair(p), &[], &spec),
            Err(PromptError::TestItemTooLarge { .. })
        ));
    }

    #[test]
    fn spec_validation() {
        let mut s = PromptSpec::new(Task::Pair, 4, 0);
        assert!(s.validate(DEFAULT_CONTEXT_LIMIT).is_ok());
        s.k = 17;
        assert!(s.validate(DEFAULT_CONTEXT_LIMIT).is_err());
        s.k = 4;
        s.token_budget = 20_000;
        assert!(s.validate(DEFAULT_CONTEXT_LIMIT).is_err());
        s.token_budget = 1000;
        s.safety_factor = 0.9;
        assert!(s.validate(DEFAULT_CONTEXT_LIMIT).is_err());
    }

    #[test]
    fn binary_targets_expand_both_sides() {
        let a = pair("a", "1", "2");
        let b = pair("b", "3", "4");
        let t = targets_for(Task::Binary, &[&a, &b]);
        let ids: Vec<_> = t.iter().map(EvalTarget::item_id).collect();
        assert_eq!(ids, ["a#buggy", "a#fixed", "b#buggy", "b#fixed"]);
        assert_eq!(targets_for(Task::Pair, &[&a, &b]).len(), 2);
    }
}
