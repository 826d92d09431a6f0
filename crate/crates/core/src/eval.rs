//! Scoring, metrics and error-analysis breakdowns.
//!
//! Binary task: buggy is the positive class and an unparseable answer counts
//! as a "not buggy" prediction. Pair task: every answer is read as a positive
//! claim that the chosen function is the buggy one, so correct picks are true
//! positives, wrong picks false positives and there are no false negatives.
//! With accuracy `a` that gives precision `a`, recall 1 and F1 `2a / (1 + a)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BugType, LengthBuckets, DEFAULT_BOUNDARIES};
use crate::llm::{BinaryLabel, PairChoice};
use crate::prompting::Task;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no outcomes to score")]
    EmptyOutcomes,
    #[error("reports disagree on {0}; refusing to aggregate")]
    MixedConfigurations(String),
    #[error("bad results record on line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub pair_id: String,
    pub predicted: PairChoice,
    pub truth: PairChoice,
    pub correct: bool,
    pub token_count_pair: usize,
    pub bug_type: BugType,
}

impl PairOutcome {
    pub fn new(
        pair_id: impl Into<String>,
        predicted: PairChoice,
        truth: PairChoice,
        token_count_pair: usize,
        bug_type: BugType,
    ) -> Self {
        Self {
            pair_id: pair_id.into(),
            correct: predicted != PairChoice::Unparseable && predicted == truth,
            predicted,
            truth,
            token_count_pair,
            bug_type,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryOutcome {
    pub fn_id: String,
    pub predicted: BinaryLabel,
    pub actual: BinaryLabel,
    pub token_count: usize,
    pub bug_type: BugType,
}

impl BinaryOutcome {
    /// Prediction as used for scoring: unparseable reads as not buggy.
    pub fn effective_prediction(&self) -> BinaryLabel {
        match self.predicted {
            BinaryLabel::Unparseable => BinaryLabel::NotBuggy,
            p => p,
        }
    }

    pub fn correct(&self) -> bool {
        self.effective_prediction() == self.actual
    }
}

/// Anything that can be bucketed and scored.
pub trait Scored {
    fn is_correct(&self) -> bool;
    fn tokens(&self) -> usize;
    fn bug_type(&self) -> BugType;
}

impl Scored for PairOutcome {
    fn is_correct(&self) -> bool {
        self.correct
    }
    fn tokens(&self) -> usize {
        self.token_count_pair
    }
    fn bug_type(&self) -> BugType {
        self.bug_type
    }
}

impl Scored for BinaryOutcome {
    fn is_correct(&self) -> bool {
        self.correct()
    }
    fn tokens(&self) -> usize {
        self.token_count
    }
    fn bug_type(&self) -> BugType {
        self.bug_type
    }
}

/// Count and accuracy for one slice of the outcomes. `accuracy` is `None`
/// for an empty slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceStat {
    pub n: usize,
    pub correct: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

impl SliceStat {
    fn from_counts(n: usize, correct: usize) -> Self {
        Self {
            n,
            correct,
            accuracy: (n > 0).then(|| correct as f64 / n as f64),
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub task: Task,
    pub model_name: String,
    pub backend_id: String,
    pub embedder_id: String,
    pub seed: u64,
    pub k: usize,
    pub temperature: f64,
    pub token_budget: usize,
    pub safety_factor: f64,
    pub boundaries: Vec<usize>,
    pub corpus_hash: String,
    pub split_hash: String,
    pub repeat_index: u32,
    pub timestamp: String,
    /// Items whose zero-shot prompt already exceeded the budget.
    #[serde(default)]
    pub skipped: Vec<String>,
    /// The resolved run configuration, verbatim.
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: Task,
    pub model_name: String,
    pub n: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_bucket: BTreeMap<String, SliceStat>,
    pub per_bug_type: BTreeMap<BugType, SliceStat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
}

impl MetricsReport {
    pub fn with_manifest(mut self, manifest: RunManifest) -> Self {
        self.model_name = manifest.model_name.clone();
        self.manifest = Some(manifest);
        self
    }

    pub fn with_model(mut self, model_name: impl Into<String>) -> Self {
        self.model_name = model_name.into();
        self
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Buggy-positive confusion matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_binary(outcomes: &[BinaryOutcome]) -> Self {
        let mut c = Confusion::default();
        for o in outcomes {
            match (o.effective_prediction(), o.actual) {
                (BinaryLabel::Buggy, BinaryLabel::Buggy) => c.tp += 1,
                (BinaryLabel::Buggy, _) => c.fp += 1,
                (_, BinaryLabel::Buggy) => c.fn_ += 1,
                _ => c.tn += 1,
            }
        }
        c
    }

    pub fn n(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.n())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        harmonic(self.precision(), self.recall())
    }
}

/// F1 of the pair task as a function of accuracy.
pub fn pair_f1(accuracy: f64) -> f64 {
    if accuracy <= 0.0 {
        0.0
    } else {
        2.0 * accuracy / (1.0 + accuracy)
    }
}

pub fn binary_metrics(outcomes: &[BinaryOutcome]) -> Result<MetricsReport, EvalError> {
    binary_metrics_with(outcomes, &DEFAULT_BOUNDARIES)
}

pub fn binary_metrics_with(
    outcomes: &[BinaryOutcome],
    boundaries: &[usize],
) -> Result<MetricsReport, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::EmptyOutcomes);
    }
    let c = Confusion::from_binary(outcomes);
    Ok(MetricsReport {
        task: Task::Binary,
        model_name: String::new(),
        n: outcomes.len(),
        accuracy: c.accuracy(),
        precision: c.precision(),
        recall: c.recall(),
        f1: c.f1(),
        per_bucket: length_bucket_report(outcomes, boundaries)?,
        per_bug_type: bug_type_report(outcomes),
        manifest: None,
    })
}

pub fn pair_metrics(outcomes: &[PairOutcome]) -> Result<MetricsReport, EvalError> {
    pair_metrics_with(outcomes, &DEFAULT_BOUNDARIES)
}

pub fn pair_metrics_with(
    outcomes: &[PairOutcome],
    boundaries: &[usize],
) -> Result<MetricsReport, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::EmptyOutcomes);
    }
    let n = outcomes.len();
    let correct = outcomes.iter().filter(|o| o.correct).count();
    // TP = correct, FP = n - correct, FN = 0
    let precision = ratio(correct, n);
    let recall = ratio(correct, correct);
    Ok(MetricsReport {
        task: Task::Pair,
        model_name: String::new(),
        n,
        accuracy: precision,
        precision,
        recall,
        f1: pair_f1(precision),
        per_bucket: length_bucket_report(outcomes, boundaries)?,
        per_bug_type: bug_type_report(outcomes),
        manifest: None,
    })
}

/// Accuracy per length bucket; every bucket is present, empty ones with
/// `n = 0` and no accuracy.
pub fn length_bucket_report<T: Scored>(
    outcomes: &[T],
    boundaries: &[usize],
) -> Result<BTreeMap<String, SliceStat>, EvalError> {
    let buckets = LengthBuckets::new(boundaries)?;
    let mut counts = vec![(0usize, 0usize); buckets.len()];
    for o in outcomes {
        let slot = &mut counts[buckets.index_of(o.tokens())];
        slot.0 += 1;
        slot.1 += o.is_correct() as usize;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, (n, c))| (buckets.label(i), SliceStat::from_counts(n, c)))
        .collect())
}

/// Accuracy per bug type; types with no outcomes are absent.
pub fn bug_type_report<T: Scored>(outcomes: &[T]) -> BTreeMap<BugType, SliceStat> {
    // declaration order matches BugType::ALL
    let mut counts = [(0usize, 0usize); BugType::ALL.len()];
    for o in outcomes {
        let slot = &mut counts[o.bug_type() as usize];
        slot.0 += 1;
        slot.1 += o.is_correct() as usize;
    }
    BugType::ALL
        .into_iter()
        .zip(counts)
        .filter(|(_, (n, _))| *n > 0)
        .map(|(t, (n, c))| (t, SliceStat::from_counts(n, c)))
        .collect()
}

/// Bug types ordered from worst to best accuracy (ties by type order).
pub fn rank_by_accuracy(report: &BTreeMap<BugType, SliceStat>) -> Vec<(BugType, SliceStat)> {
    let mut rows: Vec<_> = report.iter().map(|(t, s)| (*t, *s)).collect();
    rows.sort_by(|a, b| {
        let acc = |s: &SliceStat| s.accuracy.unwrap_or(f64::INFINITY);
        acc(&a.1).total_cmp(&acc(&b.1)).then(a.0.cmp(&b.0))
    });
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    fn of(values: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min,
            max,
        }
    }

    pub fn range(&self) -> [f64; 2] {
        [self.min, self.max]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub task: Task,
    pub model_name: String,
    pub runs: usize,
    pub accuracy: Spread,
    pub precision: Spread,
    pub recall: Spread,
    pub f1: Spread,
}

/// Mean/min/max of each metric over repeated runs of one configuration.
pub fn aggregate_runs(reports: &[MetricsReport]) -> Result<RunSummary, EvalError> {
    let first = reports.first().ok_or(EvalError::EmptyOutcomes)?;
    for r in &reports[1..] {
        if r.task != first.task {
            return Err(EvalError::MixedConfigurations("task".into()));
        }
        if r.model_name != first.model_name {
            return Err(EvalError::MixedConfigurations("model".into()));
        }
        let hash = |m: &MetricsReport| m.manifest.as_ref().map(|m| m.corpus_hash.clone());
        if hash(r) != hash(first) {
            return Err(EvalError::MixedConfigurations("corpus hash".into()));
        }
    }
    let pick = |f: fn(&MetricsReport) -> f64| Spread::of(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(RunSummary {
        task: first.task,
        model_name: first.model_name.clone(),
        runs: reports.len(),
        accuracy: pick(|r| r.accuracy),
        precision: pick(|r| r.precision),
        recall: pick(|r| r.recall),
        f1: pick(|r| r.f1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
    Latex,
}

impl std::str::FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "md" | "markdown" => Ok(TableFormat::Markdown),
            "csv" => Ok(TableFormat::Csv),
            "latex" | "tex" => Ok(TableFormat::Latex),
            other => Err(format!("unknown table format `{other}` (expected md, csv or latex)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub approach: String,
    pub task: String,
    pub model: String,
    pub accuracy: f64,
    pub f1: f64,
}

fn task_label(task: Task) -> &'static str {
    match task {
        Task::Binary => "Binary classification",
        Task::Pair => "Code-pair classification",
    }
}

impl From<&MetricsReport> for TableRow {
    fn from(r: &MetricsReport) -> Self {
        let model = if r.model_name.is_empty() {
            "-".to_string()
        } else {
            r.model_name.clone()
        };
        TableRow {
            approach: "In-context learning".into(),
            task: task_label(r.task).into(),
            model,
            accuracy: r.accuracy,
            f1: r.f1,
        }
    }
}

/// Published reference numbers (accuracy, F1 as fractions).
pub fn reference_rows() -> Vec<TableRow> {
    const ROWS: [(&str, &str, &str, f64, f64); 8] = [
        ("Supervised (direct fine-tune)", "Binary classification", "CodeBERT", 0.5196, 0.3641),
        ("Supervised (direct fine-tune)", "Binary classification", "CodeT5", 0.5000, 0.4967),
        ("Supervised (multi-stage fine-tune)", "Binary classification", "CodeBERT", 0.6113, 0.6026),
        ("Supervised (multi-stage fine-tune)", "Binary classification", "CodeT5", 0.6048, 0.5968),
        ("In-context learning", "Binary classification", "GPT-3.5", 0.5415, 0.6067),
        ("In-context learning", "Binary classification", "CodeLlama", 0.5044, 0.3224),
        ("In-context learning", "Code-pair classification", "GPT-3.5", 0.7293, 0.8434),
        ("In-context learning", "Code-pair classification", "CodeLlama", 0.6987, 0.8226),
    ];
    ROWS.iter()
        .map(|(a, t, m, acc, f1)| TableRow {
            approach: format!("{a} [published]"),
            task: t.to_string(),
            model: m.to_string(),
            accuracy: *acc,
            f1: *f1,
        })
        .collect()
}

pub fn percent(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders the results table: Approach | Task | Model | Accuracy | F1, with
/// percentages at two decimals.
pub fn emit_table(reports: &[MetricsReport], format: TableFormat, include_reference: bool) -> String {
    let mut rows: Vec<TableRow> = reports.iter().map(TableRow::from).collect();
    if include_reference {
        rows.extend(reference_rows());
    }
    render_rows(&rows, format)
}

pub fn render_rows(rows: &[TableRow], format: TableFormat) -> String {
    let mut out = String::new();
    match format {
        TableFormat::Markdown => {
            out.push_str("| Approach | Task | Model | Accuracy | F1 |\n");
            out.push_str("|---|---|---|---:|---:|\n");
            for r in rows {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} |",
                    r.approach,
                    r.task,
                    r.model,
                    percent(r.accuracy),
                    percent(r.f1)
                );
            }
        }
        TableFormat::Csv => {
            out.push_str("approach,task,model,accuracy,f1\n");
            for r in rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    csv_field(&r.approach),
                    csv_field(&r.task),
                    csv_field(&r.model),
                    percent(r.accuracy),
                    percent(r.f1)
                );
            }
        }
        TableFormat::Latex => {
            out.push_str("Approach & Task & Model & Accuracy & F1 \\\\\n");
            for r in rows {
                let _ = writeln!(
                    out,
                    "{} & {} & {} & {} & {} \\\\",
                    r.approach,
                    r.task,
                    r.model,
                    percent(r.accuracy),
                    percent(r.f1)
                );
            }
        }
    }
    out
}

/// Smallest token count a bucket label can hold, for ordering labels
/// without the boundaries at hand.
fn bucket_lower_edge(label: &str) -> usize {
    let num = |t: &str| t.parse::<usize>().unwrap_or(usize::MAX);
    if label.starts_with('<') {
        0
    } else if let Some(rest) = label.strip_prefix(">=") {
        num(rest)
    } else if let Some(rest) = label.strip_prefix('>') {
        num(rest).saturating_add(1)
    } else {
        num(label.split('-').next().unwrap_or(label))
    }
}

/// Markdown breakdown of one report's length buckets and bug types.
pub fn emit_breakdown(report: &MetricsReport) -> String {
    let fmt_acc = |s: &SliceStat| s.accuracy.map(percent).unwrap_or_else(|| "-".into());
    let mut out = String::new();
    let _ = writeln!(out, "## Length buckets ({} items)\n", report.n);
    out.push_str("| Bucket | n | Accuracy |\n|---|---:|---:|\n");
    let buckets = report
        .manifest
        .as_ref()
        .and_then(|m| LengthBuckets::new(&m.boundaries).ok());
    let mut labels: Vec<&String> = report.per_bucket.keys().collect();
    match &buckets {
        Some(b) => {
            let order = b.labels();
            labels.sort_by_key(|l| order.iter().position(|o| o == *l));
        }
        None => labels.sort_by_key(|l| bucket_lower_edge(l)),
    }
    for label in labels {
        let s = &report.per_bucket[label];
        let _ = writeln!(out, "| {label} | {} | {} |", s.n, fmt_acc(s));
    }
    out.push_str("\n## Bug types (worst first)\n\n| Bug type | n | Accuracy |\n|---|---:|---:|\n");
    for (t, s) in rank_by_accuracy(&report.per_bug_type) {
        let _ = writeln!(out, "| {t} | {} | {} |", s.n, fmt_acc(&s));
    }
    out
}

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    /// pair_id (pair task) or fn_id (binary task).
    pub id: String,
    pub task: Task,
    pub predicted: String,
    pub truth: String,
    pub correct: bool,
    pub token_count: usize,
    pub bug_type: BugType,
    pub prompt_hash: String,
    pub raw_response_ref: Option<String>,
}

impl ResultRecord {
    pub fn from_pair(o: &PairOutcome, prompt_hash: String, raw_response_ref: Option<String>) -> Self {
        Self {
            id: o.pair_id.clone(),
            task: Task::Pair,
            predicted: o.predicted.as_str().into(),
            truth: o.truth.as_str().into(),
            correct: o.correct,
            token_count: o.token_count_pair,
            bug_type: o.bug_type,
            prompt_hash,
            raw_response_ref,
        }
    }

    pub fn from_binary(o: &BinaryOutcome, prompt_hash: String, raw_response_ref: Option<String>) -> Self {
        Self {
            id: o.fn_id.clone(),
            task: Task::Binary,
            predicted: o.predicted.as_str().into(),
            truth: o.actual.as_str().into(),
            correct: o.correct(),
            token_count: o.token_count,
            bug_type: o.bug_type,
            prompt_hash,
            raw_response_ref,
        }
    }
}

/// Outcomes read back from a results file.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcomes {
    Pair(Vec<PairOutcome>),
    Binary(Vec<BinaryOutcome>),
}

impl Outcomes {
    pub fn len(&self) -> usize {
        match self {
            Outcomes::Pair(v) => v.len(),
            Outcomes::Binary(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn metrics(&self, boundaries: &[usize]) -> Result<MetricsReport, EvalError> {
        match self {
            Outcomes::Pair(v) => pair_metrics_with(v, boundaries),
            Outcomes::Binary(v) => binary_metrics_with(v, boundaries),
        }
    }
}

pub fn write_results(path: &Path, records: &[ResultRecord]) -> Result<(), EvalError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Outcomes, EvalError> {
    let text = fs::read_to_string(path)?;
    let mut pair = Vec::new();
    let mut binary = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| EvalError::BadRecord { line: i + 1, reason };
        let r: ResultRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        match r.task {
            Task::Pair => {
                let predicted = PairChoice::parse_name(&r.predicted)
                    .ok_or_else(|| bad(format!("bad prediction `{}`", r.predicted)))?;
                let truth = PairChoice::parse_name(&r.truth)
                    .filter(|t| *t != PairChoice::Unparseable)
                    .ok_or_else(|| bad(format!("bad truth `{}`", r.truth)))?;
                pair.push(PairOutcome::new(r.id, predicted, truth, r.token_count, r.bug_type));
            }
            Task::Binary => {
                let predicted = BinaryLabel::parse_name(&r.predicted)
                    .ok_or_else(|| bad(format!("bad prediction `{}`", r.predicted)))?;
                let actual = BinaryLabel::parse_name(&r.truth)
                    .filter(|t| *t != BinaryLabel::Unparseable)
                    .ok_or_else(|| bad(format!("bad truth `{}`", r.truth)))?;
                binary.push(BinaryOutcome {
                    fn_id: r.id,
                    predicted,
                    actual,
                    token_count: r.token_count,
                    bug_type: r.bug_type,
                });
            }
        }
    }
    match (pair.is_empty(), binary.is_empty()) {
        (_, true) => Ok(Outcomes::Pair(pair)),
        (true, false) => Ok(Outcomes::Binary(binary)),
        (false, false) => Err(EvalError::MixedConfigurations("task".into())),
    }
}
