//! Paired bug/fix dataset: loading, validation, seeded splitting and
//! length measurement.
//!
//! The on-disk dataset is UTF-8 JSON Lines, one flat object per line:
//!
//! ```text
//! {"pair_id": "p1", "buggy_code": "...", "fixed_code": "...", "bug_type": "variable_misuse", "source": "optional"}
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Default train/valid/test ratios.
pub const DEFAULT_RATIOS: (f64, f64, f64) = (0.8, 0.1, 0.1);

/// Default length-bucket boundaries, in tokens.
pub const DEFAULT_BOUNDARIES: [usize; 2] = [250, 2000];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: String },
    #[error("line {line}: duplicate pair_id `{pair_id}`")]
    DuplicatePairId { line: usize, pair_id: String },
    #[error("line {line}: buggy and fixed code are identical for `{pair_id}`")]
    IdenticalPairCode { line: usize, pair_id: String },
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios((f64, f64, f64)),
    #[error("bucket boundaries must be strictly increasing, got {0:?}")]
    BadBoundaries(Vec<usize>),
    #[error("split references unknown pair_id `{0}`")]
    UnknownPairId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Buggy,
    Fixed,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Buggy => "buggy",
            Role::Fixed => "fixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BugType {
    VariableMisuse,
    SwappedArguments,
    WrongBinaryOperator,
    Other,
}

impl BugType {
    pub const ALL: [BugType; 4] = [
        BugType::VariableMisuse,
        BugType::SwappedArguments,
        BugType::WrongBinaryOperator,
        BugType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BugType::VariableMisuse => "variable_misuse",
            BugType::SwappedArguments => "swapped_arguments",
            BugType::WrongBinaryOperator => "wrong_binary_operator",
            BugType::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<BugType> {
        BugType::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for BugType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One side of a pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionRecord {
    pub fn_id: String,
    pub code: String,
    pub role: Role,
    pub token_count: usize,
}

impl FunctionRecord {
    pub fn new(pair_id: &str, code: impl Into<String>, role: Role) -> Self {
        let code = code.into();
        let token_count = count_tokens(&code);
        Self {
            fn_id: format!("{pair_id}#{}", role.as_str()),
            code,
            role,
            token_count,
        }
    }
}

/// A buggy function, its fixed version and the kind of bug that separates them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BugPair {
    pub pair_id: String,
    pub buggy: FunctionRecord,
    pub fixed: FunctionRecord,
    pub bug_type: BugType,
    pub source: Option<String>,
}

impl BugPair {
    /// Builds a pair, checking the buggy/fixed distinctness invariant.
    pub fn new(
        pair_id: impl Into<String>,
        buggy_code: impl Into<String>,
        fixed_code: impl Into<String>,
        bug_type: BugType,
    ) -> Result<Self, CorpusError> {
        let pair_id = pair_id.into();
        let (buggy_code, fixed_code) = (buggy_code.into(), fixed_code.into());
        if buggy_code == fixed_code {
            return Err(CorpusError::IdenticalPairCode { line: 0, pair_id });
        }
        if buggy_code.trim().is_empty() || fixed_code.trim().is_empty() {
            return Err(CorpusError::MalformedRecord {
                line: 0,
                reason: format!("empty code in `{pair_id}`"),
            });
        }
        Ok(Self {
            buggy: FunctionRecord::new(&pair_id, buggy_code, Role::Buggy),
            fixed: FunctionRecord::new(&pair_id, fixed_code, Role::Fixed),
            pair_id,
            bug_type,
            source: None,
        })
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    /// Text used to retrieve neighbours for the pair task.
    pub fn pair_text(&self) -> String {
        format!("{}\n{}", self.buggy.code, self.fixed.code)
    }

    pub fn function(&self, role: Role) -> &FunctionRecord {
        match role {
            Role::Buggy => &self.buggy,
            Role::Fixed => &self.fixed,
        }
    }

    pub fn token_count_pair(&self) -> usize {
        self.buggy.token_count + self.fixed.token_count
    }

    pub fn to_record(&self) -> PairRecord {
        PairRecord {
            pair_id: self.pair_id.clone(),
            buggy_code: self.buggy.code.clone(),
            fixed_code: self.fixed.code.clone(),
            bug_type: self.bug_type.as_str().to_string(),
            source: self.source.clone(),
        }
    }
}

/// Flat on-disk form of a [`BugPair`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub buggy_code: String,
    pub fixed_code: String,
    pub bug_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

/// Loaded dataset, in file order.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pairs: Vec<BugPair>,
    by_id: std::collections::HashMap<String, usize>,
}

impl Corpus {
    pub fn from_pairs(pairs: Vec<BugPair>) -> Result<Self, CorpusError> {
        let mut by_id = std::collections::HashMap::with_capacity(pairs.len());
        for (i, p) in pairs.iter().enumerate() {
            if by_id.insert(p.pair_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicatePairId {
                    line: i + 1,
                    pair_id: p.pair_id.clone(),
                });
            }
        }
        Ok(Self { pairs, by_id })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[BugPair] {
        &self.pairs
    }

    pub fn get(&self, pair_id: &str) -> Option<&BugPair> {
        self.by_id.get(pair_id).map(|&i| &self.pairs[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|p| p.pair_id.as_str())
    }

    /// SHA-256 over the canonical JSONL serialization of the pairs, in
    /// pair_id order.
    pub fn content_hash(&self) -> String {
        let mut sorted: Vec<&BugPair> = self.pairs.iter().collect();
        sorted.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
        let mut hasher = Sha256::new();
        for p in sorted {
            let line = serde_json::to_string(&p.to_record()).expect("record serializes");
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let mut out = String::new();
        for p in &self.pairs {
            out.push_str(&serde_json::to_string(&p.to_record())?);
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }
}

/// Parses a dataset from JSONL text. Blank lines are skipped.
pub fn parse_corpus(text: &str) -> Result<Corpus, CorpusError> {
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(raw).map_err(|e| CorpusError::MalformedRecord {
                line,
                reason: e.to_string(),
            })?;
        let obj = value.as_object().ok_or_else(|| CorpusError::MalformedRecord {
            line,
            reason: "record is not a JSON object".into(),
        })?;
        let field = |name: &str| -> Result<&str, CorpusError> {
            match obj.get(name) {
                None | Some(serde_json::Value::Null) => Err(CorpusError::MissingField {
                    line,
                    field: name.to_string(),
                }),
                Some(serde_json::Value::String(s)) => Ok(s.as_str()),
                Some(_) => Err(CorpusError::MalformedRecord {
                    line,
                    reason: format!("field `{name}` must be a string"),
                }),
            }
        };
        let pair_id = field("pair_id")?;
        let buggy = field("buggy_code")?;
        let fixed = field("fixed_code")?;
        let bug_type_raw = field("bug_type")?;
        let source = match obj.get("source") {
            None | Some(serde_json::Value::Null) => None,
            Some(serde_json::Value::String(s)) => Some(s.clone()),
            Some(_) => {
                return Err(CorpusError::MalformedRecord {
                    line,
                    reason: "field `source` must be a string".into(),
                })
            }
        };
        if pair_id.is_empty() {
            return Err(CorpusError::MalformedRecord {
                line,
                reason: "empty pair_id".into(),
            });
        }
        let bug_type = BugType::parse(bug_type_raw).ok_or_else(|| CorpusError::MalformedRecord {
            line,
            reason: format!("unknown bug_type `{bug_type_raw}`"),
        })?;
        if !seen.insert(pair_id.to_string()) {
            return Err(CorpusError::DuplicatePairId {
                line,
                pair_id: pair_id.to_string(),
            });
        }
        let mut pair = BugPair::new(pair_id, buggy, fixed, bug_type).map_err(|e| match e {
            CorpusError::IdenticalPairCode { pair_id, .. } => {
                CorpusError::IdenticalPairCode { line, pair_id }
            }
            CorpusError::MalformedRecord { reason, .. } => {
                CorpusError::MalformedRecord { line, reason }
            }
            other => other,
        })?;
        pair.source = source;
        pairs.push(pair);
    }
    if pairs.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Corpus::from_pairs(pairs)
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    parse_corpus(&fs::read_to_string(path)?)
}

/// Train/valid/test partition of pair ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.valid.len(), self.test.len())
    }

    /// Canonical serialized form; the split file is exactly these bytes.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("split serializes");
        s.push('\n');
        s
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn write(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, CorpusError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// Checks that the split is a partition of the corpus id set.
    pub fn validate_against(&self, corpus: &Corpus) -> Result<(), CorpusError> {
        let mut seen = HashSet::new();
        for id in self.train.iter().chain(&self.valid).chain(&self.test) {
            if corpus.get(id).is_none() {
                return Err(CorpusError::UnknownPairId(id.clone()));
            }
            if !seen.insert(id.as_str()) {
                return Err(CorpusError::DuplicatePairId {
                    line: 0,
                    pair_id: id.clone(),
                });
            }
        }
        if seen.len() != corpus.len() {
            return Err(CorpusError::MalformedRecord {
                line: 0,
                reason: format!("split covers {} of {} pairs", seen.len(), corpus.len()),
            });
        }
        Ok(())
    }
}

/// Seeded split of the corpus ids.
///
/// Ids are sorted lexicographically before a Fisher-Yates shuffle, so the
/// result depends only on the id set and the seed. Train and valid sizes are
/// floored; the remainder goes to test.
pub fn split_corpus(
    corpus: &Corpus,
    seed: u64,
    ratios: (f64, f64, f64),
) -> Result<DatasetSplit, CorpusError> {
    split_ids(corpus.ids().map(str::to_string).collect(), seed, ratios)
}

pub fn split_ids(
    mut ids: Vec<String>,
    seed: u64,
    ratios: (f64, f64, f64),
) -> Result<DatasetSplit, CorpusError> {
    let (tr, va, te) = ratios;
    let finite = [tr, va, te].iter().all(|r| r.is_finite() && *r >= 0.0);
    if !finite || ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadRatios(ratios));
    }
    if ids.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    ids.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let n = ids.len();
    let n_train = floor_share(n, tr);
    let n_valid = floor_share(n, va).min(n - n_train);
    let test = ids.split_off(n_train + n_valid);
    let valid = ids.split_off(n_train);
    Ok(DatasetSplit {
        seed,
        train: ids,
        valid,
        test,
    })
}

// 0.1 * 10 is 1.0000000000000002 in binary; a small slack keeps exact
// products from flooring one short.
fn floor_share(n: usize, ratio: f64) -> usize {
    ((n as f64) * ratio + 1e-9).floor() as usize
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Counts tokens: a maximal run of identifier characters (letters, digits,
/// underscore) is one token, every other non-whitespace character is one
/// token on its own.
pub fn count_tokens(code: &str) -> usize {
    let mut count = 0;
    let mut in_ident = false;
    for c in code.chars() {
        if is_ident_char(c) {
            if !in_ident {
                count += 1;
                in_ident = true;
            }
        } else {
            in_ident = false;
            if !c.is_whitespace() {
                count += 1;
            }
        }
    }
    count
}

/// Length bucket under a boundary list.
///
/// With boundaries `[b1, .., bm]` (m >= 2) the buckets are `[0, b1)`,
/// `[b1, b2)`, ..., `[b(m-1), bm]` and `(bm, inf)`: the last interior bucket
/// is closed on the right. A single boundary `b` gives `[0, b)` and `[b, inf)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LengthBuckets {
    boundaries: Vec<usize>,
}

impl LengthBuckets {
    pub fn new(boundaries: &[usize]) -> Result<Self, CorpusError> {
        if boundaries.is_empty() || boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CorpusError::BadBoundaries(boundaries.to_vec()));
        }
        Ok(Self {
            boundaries: boundaries.to_vec(),
        })
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn len(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, tokens: usize) -> usize {
        let b = &self.boundaries;
        let m = b.len();
        if m >= 2 && tokens == b[m - 1] {
            return m - 1;
        }
        b.iter().take_while(|&&edge| tokens >= edge).count()
    }

    pub fn label(&self, index: usize) -> String {
        let b = &self.boundaries;
        let m = b.len();
        if index == 0 {
            format!("<{}", b[0])
        } else if index == m {
            if m == 1 {
                format!(">={}", b[0])
            } else {
                format!(">{}", b[m - 1])
            }
        } else {
            format!("{}-{}", b[index - 1], b[index])
        }
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }

    pub fn label_for(&self, tokens: usize) -> String {
        self.label(self.index_of(tokens))
    }
}

/// Groups ids by length bucket. Every bucket label is present in the result,
/// possibly with an empty list; ids keep their input order.
pub fn bucket_by_length<I, S>(
    items: I,
    boundaries: &[usize],
) -> Result<BTreeMap<String, Vec<String>>, CorpusError>
where
    I: IntoIterator<Item = (S, usize)>,
    S: Into<String>,
{
    let buckets = LengthBuckets::new(boundaries)?;
    let mut grouped: Vec<Vec<String>> = vec![Vec::new(); buckets.len()];
    for (id, tokens) in items {
        grouped[buckets.index_of(tokens)].push(id.into());
    }
    Ok(grouped
        .into_iter()
        .enumerate()
        .map(|(i, ids)| (buckets.label(i), ids))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bug_type_discriminants_follow_all() {
        for (i, t) in BugType::ALL.into_iter().enumerate() {
            assert_eq!(t as usize, i);
        }
    }

    fn line(id: &str, buggy: &str, fixed: &str) -> String {
        serde_json::json!({"pair_id": id, "buggy_code": buggy, "fixed_code": fixed, "bug_type": "other"})
            .to_string()
    }

    #[test]
    fn single_record() {
        let c = parse_corpus(&line("p1", "a = b", "a = c")).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.pairs()[0].buggy.token_count, 3);
        assert_eq!(c.pairs()[0].buggy.fn_id, "p1#buggy");
    }

    #[test]
    fn duplicate_id_names_second_line() {
        let text = format!("{}\n{}\n", line("p1", "x", "y"), line("p1", "u", "v"));
        match parse_corpus(&text) {
            Err(CorpusError::DuplicatePairId { line, pair_id }) => {
                assert_eq!(line, 2);
                assert_eq!(pair_id, "p1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn identical_code_rejected() {
        let text = format!("{}\n{}", line("p1", "x", "y"), line("p2", "same", "same"));
        assert!(matches!(
            parse_corpus(&text),
            Err(CorpusError::IdenticalPairCode { line: 2, .. })
        ));
    }

    #[test]
    fn missing_and_malformed() {
        let text = r#"{"pair_id": "p1", "buggy_code": "x", "bug_type": "other"}"#;
        assert!(matches!(
            parse_corpus(text),
            Err(CorpusError::MissingField { line: 1, ref field }) if field == "fixed_code"
        ));
        assert!(matches!(
            parse_corpus("not json"),
            Err(CorpusError::MalformedRecord { line: 1, .. })
        ));
        let bad_type = r#"{"pair_id": "p1", "buggy_code": "x", "fixed_code": "y", "bug_type": "typo"}"#;
        assert!(matches!(
            parse_corpus(bad_type),
            Err(CorpusError::MalformedRecord { line: 1, .. })
        ));
        let blank = r#"{"pair_id": "p1", "buggy_code": "  ", "fixed_code": "y", "bug_type": "other"}"#;
        assert!(matches!(
            parse_corpus(blank),
            Err(CorpusError::MalformedRecord { line: 1, .. })
        ));
    }

    #[test]
    fn bug_type_names() {
        let names: Vec<_> = BugType::ALL.iter().map(|t| t.as_str()).collect();
        assert_eq!(
            names,
            ["variable_misuse", "swapped_arguments", "wrong_binary_operator", "other"]
        );
        for t in BugType::ALL {
            let json = serde_json::to_string(&t).unwrap();
            assert_eq!(json, format!("\"{}\"", t.as_str()));
        }
    }

    #[test]
    fn token_rule() {
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens("def f(x): return x"), 8);
        assert_eq!(count_tokens("   \n\t"), 0);
        assert_eq!(count_tokens("a_b1+=c"), 4);
    }

    #[test]
    fn split_sizes() {
        let ids: Vec<String> = (0..2289).map(|i| format!("id{i:05}")).collect();
        assert_eq!(split_ids(ids, 42, DEFAULT_RATIOS).unwrap().sizes(), (1831, 228, 230));
        let ten: Vec<String> = (0..10).map(|i| i.to_string()).collect();
        for seed in 0..20 {
            assert_eq!(split_ids(ten.clone(), seed, DEFAULT_RATIOS).unwrap().sizes(), (8, 1, 1));
        }
    }

    #[test]
    fn split_errors() {
        assert!(matches!(split_ids(vec![], 1, DEFAULT_RATIOS), Err(CorpusError::EmptyCorpus)));
        assert!(matches!(
            split_ids(vec!["a".into()], 1, (0.5, 0.5, 0.5)),
            Err(CorpusError::BadRatios(_))
        ));
        assert!(matches!(
            split_ids(vec!["a".into()], 1, (1.2, -0.1, -0.1)),
            Err(CorpusError::BadRatios(_))
        ));
    }

    #[test]
    fn seeds_change_order() {
        let ids: Vec<String> = (0..200).map(|i| format!("p{i}")).collect();
        let a = split_ids(ids.clone(), 1, DEFAULT_RATIOS).unwrap();
        let b = split_ids(ids.clone(), 2, DEFAULT_RATIOS).unwrap();
        let a2 = split_ids(ids, 1, DEFAULT_RATIOS).unwrap();
        assert_ne!(a.train, b.train);
        assert_eq!(a, a2);
    }

    #[test]
    fn bucket_edges() {
        let b = LengthBuckets::new(&DEFAULT_BOUNDARIES).unwrap();
        assert_eq!(b.label_for(0), "<250");
        assert_eq!(b.label_for(249), "<250");
        assert_eq!(b.label_for(250), "250-2000");
        assert_eq!(b.label_for(2000), "250-2000");
        assert_eq!(b.label_for(2001), ">2000");

        let three = LengthBuckets::new(&[10, 20, 30]).unwrap();
        assert_eq!(three.labels(), ["<10", "10-20", "20-30", ">30"]);
        assert_eq!(three.label_for(20), "20-30");
        assert_eq!(three.label_for(30), "20-30");

        let one = LengthBuckets::new(&[5]).unwrap();
        assert_eq!(one.label_for(4), "<5");
        assert_eq!(one.label_for(5), ">=5");
    }

    #[test]
    fn bad_boundaries() {
        assert!(matches!(
            bucket_by_length(Vec::<(String, usize)>::new(), &[2000, 250]),
            Err(CorpusError::BadBoundaries(_))
        ));
        assert!(LengthBuckets::new(&[5, 5]).is_err());
        assert!(LengthBuckets::new(&[]).is_err());
    }

    #[test]
    fn bucket_sizes_sum() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let items: Vec<(String, usize)> =
            (0..100).map(|i| (format!("f{i}"), rng.gen_range(0..=3000))).collect();
        let expected_small = items.iter().filter(|(_, t)| *t < 250).count();
        let expected_large = items.iter().filter(|(_, t)| *t > 2000).count();
        let grouped = bucket_by_length(items, &DEFAULT_BOUNDARIES).unwrap();
        assert_eq!(grouped.values().map(Vec::len).sum::<usize>(), 100);
        assert_eq!(grouped["<250"].len(), expected_small);
        assert_eq!(grouped[">2000"].len(), expected_large);
    }

    #[test]
    fn split_validation() {
        let text = (0..10).map(|i| line(&format!("p{i}"), "x", "y")).collect::<Vec<_>>().join("\n");
        let corpus = parse_corpus(&text).unwrap();
        let mut split = split_corpus(&corpus, 9, DEFAULT_RATIOS).unwrap();
        split.validate_against(&corpus).unwrap();
        split.test.push("ghost".into());
        assert!(split.validate_against(&corpus).is_err());
    }
}
