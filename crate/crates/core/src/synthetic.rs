//! Seeded generator of small Python-like bug/fix pairs for offline runs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{BugPair, BugType, Corpus};

const NAMES: &[&str] = &[
    "count", "total", "index", "limit", "value", "offset", "delta", "weight", "score", "ratio",
    "start", "stop", "width", "height", "size", "step", "acc", "item", "key", "node", "left",
    "right", "lower", "upper", "prev", "curr", "head", "tail", "mean", "scale",
];

const FUNCS: &[&str] = &[
    "update", "compute", "merge", "resolve", "clamp", "normalize", "collect", "advance", "rescale",
    "measure", "combine", "select", "partition", "accumulate", "rebalance", "project",
];

const CALLEES: &[&str] = &["max", "min", "pow", "divmod", "range", "isinstance", "getattr", "round"];

const OP_SWAPS: &[(&str, &str)] = &[
    ("<", "<="),
    (">", ">="),
    ("+", "-"),
    ("==", "!="),
    ("*", "/"),
    ("and", "or"),
];

/// Generates `n` distinct pairs. Bug types rotate through the four kinds;
/// roughly one pair in twelve is long enough (hundreds of tokens) to land
/// outside the smallest length bucket.
pub fn generate_pairs(n: usize, seed: u64) -> Vec<BugPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let bug_type = BugType::ALL[i % BugType::ALL.len()];
            let (buggy, fixed) = generate_one(&mut rng, bug_type, i);
            BugPair::new(format!("syn-{i:05}"), buggy, fixed, bug_type)
                .expect("generator yields distinct non-empty code")
                .with_source("synthetic")
        })
        .collect()
}

pub fn generate_corpus(n: usize, seed: u64) -> Corpus {
    Corpus::from_pairs(generate_pairs(n, seed)).expect("generated ids are unique")
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &'a [&'a str]) -> &'a str {
    xs.choose(rng).copied().expect("non-empty pool")
}

fn distinct_names(rng: &mut ChaCha8Rng, k: usize) -> Vec<&'static str> {
    NAMES.choose_multiple(rng, k).copied().collect()
}

fn generate_one(rng: &mut ChaCha8Rng, bug_type: BugType, ordinal: usize) -> (String, String) {
    let vars = distinct_names(rng, 4);
    let (a, b, c, t) = (vars[0], vars[1], vars[2], vars[3]);
    let name = format!("{}_{}", pick(rng, FUNCS), pick(rng, NAMES));
    let filler_lines = if rng.gen_ratio(1, 12) {
        rng.gen_range(30..90)
    } else {
        rng.gen_range(0..6)
    };

    let mut body = Vec::new();
    body.push(format!("def {name}(self, {a}, {b}):"));
    body.push(format!("    {c} = self.{}", pick(rng, NAMES)));
    for j in 0..filler_lines {
        let lhs = pick(rng, NAMES);
        let rhs = pick(rng, NAMES);
        let k = rng.gen_range(1..100);
        body.push(match j % 3 {
            0 => format!("    {lhs}_{j} = {rhs} + {k}"),
            1 => format!("    if {rhs} > {k}:\n        {c} = {c} + 1"),
            _ => format!("    self.{lhs} = {c} * {k}"),
        });
    }
    let head = body.join("\n");

    let (buggy_tail, fixed_tail) = match bug_type {
        BugType::VariableMisuse => (
            format!("    {t} = {a} - {c}\n    return abs({t} / {a})"),
            format!("    {t} = {a} - {c}\n    return abs({t} / {c})"),
        ),
        BugType::SwappedArguments => {
            let callee = pick(rng, CALLEES);
            (
                format!("    {t} = {callee}({b}, {a})\n    return {t} + {c}"),
                format!("    {t} = {callee}({a}, {b})\n    return {t} + {c}"),
            )
        }
        BugType::WrongBinaryOperator => {
            let (good, bad) = *OP_SWAPS.choose(rng).expect("non-empty");
            let (good, bad) = if rng.gen::<bool>() { (good, bad) } else { (bad, good) };
            (
                format!("    if {a} {bad} {b}:\n        return {c}\n    return {t}_{ordinal}"),
                format!("    if {a} {good} {b}:\n        return {c}\n    return {t}_{ordinal}"),
            )
        }
        BugType::Other => (
            format!("    {t} = {a}[len({a})]\n    return {t} or {b}"),
            format!("    {t} = {a}[len({a}) - 1]\n    return {t} or {b}"),
        ),
    };
    (
        format!("{head}\n{buggy_tail}\n"),
        format!("{head}\n{fixed_tail}\n"),
    )
}
