//! Chat-completion backends and verdict parsing.
//!
//! Remote backends implement [`ChatBackend`] and only ever see a
//! [`ChatRequest`]: system and user text. Scripted test doubles
//! ([`ScriptedBackend`]) receive the whole [`RenderedPrompt`], truth record
//! included, which is what lets the oracle answer correctly.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::fnv1a64;
use crate::http::{self, HttpError};
use crate::prompting::{RenderedPrompt, Task, Truth};
use crate::retry::{Failure, RateLimiter, RetryPolicy};

pub const LLM_API_KEY_VAR: &str = "LLM_API_KEY";

pub const PAIR_REASK_SUFFIX: &str = "Respond with exactly one of: Function A, Function B.";
pub const BINARY_REASK_SUFFIX: &str = "Respond with exactly one of: buggy, not buggy.";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("provider unavailable after {attempts} attempt(s): {reason}")]
    ProviderUnavailable { attempts: u32, reason: String },
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("no replay log entry for prompt {0}")]
    MissingLogEntry(String),
    #[error("invalid backend spec `{0}`")]
    InvalidBackend(String),
    #[error("response log: {0}")]
    Log(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairChoice {
    A,
    B,
    Unparseable,
}

impl PairChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            PairChoice::A => "A",
            PairChoice::B => "B",
            PairChoice::Unparseable => "unparseable",
        }
    }

    pub fn parse_name(s: &str) -> Option<Self> {
        [PairChoice::A, PairChoice::B, PairChoice::Unparseable]
            .into_iter()
            .find(|c| c.as_str() == s)
    }

    pub fn answer_text(self) -> &'static str {
        match self {
            PairChoice::A => "Function A",
            PairChoice::B => "Function B",
            PairChoice::Unparseable => "",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryLabel {
    Buggy,
    NotBuggy,
    Unparseable,
}

impl BinaryLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BinaryLabel::Buggy => "buggy",
            BinaryLabel::NotBuggy => "not buggy",
            BinaryLabel::Unparseable => "unparseable",
        }
    }

    pub fn parse_name(s: &str) -> Option<Self> {
        [BinaryLabel::Buggy, BinaryLabel::NotBuggy, BinaryLabel::Unparseable]
            .into_iter()
            .find(|c| c.as_str() == s)
    }
}

fn normalize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect::<String>()
        .to_uppercase();
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Reads an A/B answer out of free text.
///
/// The last "FUNCTION A"/"FUNCTION B" phrase wins; failing that, the last
/// standalone "A" or "B" token; otherwise the response is unparseable.
pub fn parse_pair_verdict(text: &str) -> PairChoice {
    let tokens = normalize(text);
    let letter = |t: &str| match t {
        "A" => Some(PairChoice::A),
        "B" => Some(PairChoice::B),
        _ => None,
    };
    let phrase = tokens
        .windows(2)
        .rev()
        .find_map(|w| (w[0] == "FUNCTION").then(|| letter(&w[1])).flatten());
    phrase
        .or_else(|| tokens.iter().rev().find_map(|t| letter(t)))
        .unwrap_or(PairChoice::Unparseable)
}

const NEGATIVE_PHRASES: [&[&str]; 4] = [
    &["NOT", "BUGGY"],
    &["NO", "BUG"],
    &["BUG", "FREE"],
    &["NOT", "CONTAIN"],
];

const POSITIVE_PHRASES: [&[&str]; 4] = [
    &["CONTAINS", "A", "BUG"],
    &["HAS", "A", "BUG"],
    &["BUGGY"],
    &["YES"],
];

/// Reads a buggy / not-buggy answer out of free text.
///
/// Phrases are matched on whole words, longest first, so "NOT BUGGY" consumes
/// its "BUGGY". A negative phrase after the last positive one means not
/// buggy; only positives means buggy; only negatives means not buggy; a
/// positive phrase after every negative one, or no phrase at all, is
/// unparseable.
pub fn parse_binary_verdict(text: &str) -> BinaryLabel {
    let tokens = normalize(text);
    let mut phrases: Vec<(&[&str], bool)> = NEGATIVE_PHRASES
        .iter()
        .map(|p| (*p, false))
        .chain(POSITIVE_PHRASES.iter().map(|p| (*p, true)))
        .collect();
    phrases.sort_by_key(|p| std::cmp::Reverse(p.0.len()));

    let mut last_pos = None;
    let mut last_neg = None;
    let mut i = 0;
    while i < tokens.len() {
        let hit = phrases.iter().find(|(p, _)| {
            tokens.len() - i >= p.len() && p.iter().zip(&tokens[i..]).all(|(a, b)| *a == b)
        });
        match hit {
            Some((p, positive)) => {
                if *positive {
                    last_pos = Some(i);
                } else {
                    last_neg = Some(i);
                }
                i += p.len();
            }
            None => i += 1,
        }
    }
    match (last_pos, last_neg) {
        (Some(p), Some(n)) if n > p => BinaryLabel::NotBuggy,
        (Some(_), None) => BinaryLabel::Buggy,
        (None, Some(_)) => BinaryLabel::NotBuggy,
        _ => BinaryLabel::Unparseable,
    }
}

/// Parsed verdict for either task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pair(PairChoice),
    Binary(BinaryLabel),
}

impl Verdict {
    pub fn parse(task: Task, text: &str) -> Self {
        match task {
            Task::Pair => Verdict::Pair(parse_pair_verdict(text)),
            Task::Binary => Verdict::Binary(parse_binary_verdict(text)),
        }
    }

    pub fn is_unparseable(self) -> bool {
        matches!(
            self,
            Verdict::Pair(PairChoice::Unparseable) | Verdict::Binary(BinaryLabel::Unparseable)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pair(c) => c.as_str(),
            Verdict::Binary(l) => l.as_str(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_name: String,
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl ChatRequest {
    pub fn new(model_name: impl Into<String>, system_text: String, user_text: String) -> Self {
        Self {
            model_name: model_name.into(),
            system_text,
            user_text,
            temperature: 0.0,
            max_output_tokens: 64,
        }
    }

    /// Same request with the stricter instruction appended to the user turn.
    pub fn reask(&self, suffix: &str) -> Self {
        let mut next = self.clone();
        next.user_text = format!("{}\n{}", self.user_text, suffix);
        next
    }

    pub fn prompt_hash(&self) -> String {
        crate::prompting::prompt_hash(&self.system_text, &self.user_text)
    }

    /// OpenAI-style chat-completions body.
    pub fn to_wire(&self) -> serde_json::Value {
        serde_json::json!({
            "model": self.model_name,
            "messages": [
                {"role": "system", "content": self.system_text},
                {"role": "user", "content": self.user_text},
            ],
            "temperature": self.temperature,
            "max_tokens": self.max_output_tokens,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
}

/// Outcome of one send attempt.
#[derive(Debug, Error)]
pub enum BackendFailure {
    #[error("transient: {0}")]
    Transient(String),
    #[error("auth: {0}")]
    Auth(String),
    #[error("{0}")]
    Fatal(String),
}

/// A backend that only sees rendered text.
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> String;
    fn send(&self, request: &ChatRequest) -> Result<String, BackendFailure>;
}

/// Sends with retry and optional rate limiting.
pub fn complete(
    request: &ChatRequest,
    backend: &dyn ChatBackend,
    retry: &RetryPolicy,
    limiter: Option<&RateLimiter>,
) -> Result<ChatResponse, LlmError> {
    let start = Instant::now();
    let (text, attempts) = retry
        .run(|_| {
            if let Some(l) = limiter {
                l.acquire();
            }
            backend.send(request).map_err(|e| match e {
                BackendFailure::Transient(m) => Failure::Transient(BackendFailure::Transient(m)),
                other => Failure::Permanent(other),
            })
        })
        .map_err(|gave_up| match gave_up.error {
            BackendFailure::Auth(m) => LlmError::AuthFailure(m),
            other => LlmError::ProviderUnavailable {
                attempts: gave_up.attempts,
                reason: other.to_string(),
            },
        })?;
    Ok(ChatResponse {
        text,
        latency_ms: start.elapsed().as_millis() as u64,
        attempt_count: attempts,
    })
}

/// OpenAI-compatible chat-completions endpoint.
pub struct RemoteChatBackend {
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl RemoteChatBackend {
    pub fn new(url: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            url: url.into(),
            api_key,
            agent: http::agent(Duration::from_secs(120)),
        }
    }

    /// Reads the bearer token from `LLM_API_KEY`.
    pub fn from_env(url: impl Into<String>) -> Self {
        Self::new(url, http::api_key_from_env(LLM_API_KEY_VAR))
    }
}

impl ChatBackend for RemoteChatBackend {
    fn id(&self) -> String {
        format!("remote:{}", self.url)
    }

    fn send(&self, request: &ChatRequest) -> Result<String, BackendFailure> {
        let body = http::post_json(&self.agent, &self.url, self.api_key.as_deref(), &request.to_wire())
            .map_err(|f| match f {
                Failure::Permanent(HttpError::Auth(code)) => BackendFailure::Auth(format!("HTTP {code}")),
                Failure::Permanent(e) => BackendFailure::Fatal(e.to_string()),
                Failure::Transient(e) => BackendFailure::Transient(e.to_string()),
            })?;
        parse_chat_response(&body).map_err(BackendFailure::Fatal)
    }
}

/// Extracts `choices[0].message.content`.
pub fn parse_chat_response(body: &serde_json::Value) -> Result<String, String> {
    body.get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| "missing choices[0].message.content".to_string())
}

/// One line of the response log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseLogRecord {
    pub prompt_hash: String,
    pub model: String,
    pub raw_text: String,
    pub latency_ms: u64,
    pub timestamp: String,
}

/// Append-only JSONL response log shared across workers.
pub struct ResponseLog {
    out: Mutex<BufWriter<File>>,
}

impl ResponseLog {
    pub fn append_to(path: &Path) -> Result<Self, LlmError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            out: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn record(&self, rec: &ResponseLogRecord) -> Result<(), LlmError> {
        let line = serde_json::to_string(rec).map_err(|e| LlmError::Log(e.to_string()))?;
        let mut out = self.out.lock().expect("log lock");
        writeln!(out, "{line}")?;
        out.flush()?;
        Ok(())
    }
}

/// Responses indexed by prompt hash; later lines override earlier ones.
#[derive(Debug, Clone, Default)]
pub struct ReplayLog {
    by_hash: HashMap<String, String>,
}

impl ReplayLog {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path)?;
        let mut by_hash = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ResponseLogRecord = serde_json::from_str(line)
                .map_err(|e| LlmError::Log(format!("line {}: {e}", i + 1)))?;
            by_hash.insert(rec.prompt_hash, rec.raw_text);
        }
        Ok(Self { by_hash })
    }

    pub fn insert(&mut self, prompt_hash: impl Into<String>, raw_text: impl Into<String>) {
        self.by_hash.insert(prompt_hash.into(), raw_text.into());
    }

    pub fn len(&self) -> usize {
        self.by_hash.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_hash.is_empty()
    }

    pub fn get(&self, prompt_hash: &str) -> Option<&str> {
        self.by_hash.get(prompt_hash).map(String::as_str)
    }
}

/// Test doubles that answer from the evaluation item itself.
#[derive(Debug, Clone)]
pub enum ScriptedBackend {
    /// Always answers the truth.
    Oracle,
    /// Always answers the given text.
    FixedChoice(String),
    /// Seeded fair coin per item.
    RandomChoice(u64),
    /// Logged responses keyed by prompt hash.
    Replay(ReplayLog),
}

impl ScriptedBackend {
    pub fn id(&self) -> String {
        match self {
            ScriptedBackend::Oracle => "oracle".into(),
            ScriptedBackend::FixedChoice(c) => format!("fixed:{c}"),
            ScriptedBackend::RandomChoice(seed) => format!("random:{seed}"),
            ScriptedBackend::Replay(_) => "replay".into(),
        }
    }

    /// Answers one request for `prompt`. `request` is the text actually sent,
    /// which differs from the prompt on a re-ask.
    pub fn respond(
        &self,
        prompt: &RenderedPrompt,
        request: &ChatRequest,
        repeat_index: u32,
    ) -> Result<String, LlmError> {
        Ok(match self {
            ScriptedBackend::Oracle => match prompt.truth {
                Truth::Pair(c) => c.answer_text().to_string(),
                Truth::Binary(l) => l.as_str().to_string(),
            },
            ScriptedBackend::FixedChoice(c) => c.clone(),
            ScriptedBackend::RandomChoice(seed) => {
                let mixed = seed
                    ^ fnv1a64(prompt.item_id.as_bytes())
                    ^ (repeat_index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                let heads = ChaCha8Rng::seed_from_u64(mixed).gen::<bool>();
                match (prompt.task, heads) {
                    (Task::Pair, true) => "Function A".into(),
                    (Task::Pair, false) => "Function B".into(),
                    (Task::Binary, true) => "buggy".into(),
                    (Task::Binary, false) => "not buggy".into(),
                }
            }
            ScriptedBackend::Replay(log) => {
                let hash = request.prompt_hash();
                log.get(&hash)
                    .map(str::to_string)
                    .ok_or(LlmError::MissingLogEntry(hash))?
            }
        })
    }
}

/// Either kind of backend, as selected on the command line.
pub enum Backend {
    Remote(Box<dyn ChatBackend>),
    Scripted(ScriptedBackend),
}

impl Backend {
    pub fn id(&self) -> String {
        match self {
            Backend::Remote(b) => b.id(),
            Backend::Scripted(s) => s.id(),
        }
    }

    pub fn is_scripted(&self) -> bool {
        matches!(self, Backend::Scripted(_))
    }
}

/// Settings for [`ask`].
pub struct Dispatch<'a> {
    pub model_name: &'a str,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub retry: &'a RetryPolicy,
    pub limiter: Option<&'a RateLimiter>,
    pub log: Option<&'a ResponseLog>,
    pub repeat_index: u32,
}

/// Final answer for one prompt after the optional re-ask.
#[derive(Debug, Clone, PartialEq)]
pub struct Answered {
    pub verdict: Verdict,
    pub raw_text: String,
    /// Hash of the request whose response produced `verdict`.
    pub prompt_hash: String,
    pub attempts: u32,
    pub reasked: bool,
}

/// Sends a rendered prompt and parses the verdict. An unparseable answer is
/// re-asked exactly once with the stricter suffix.
pub fn ask(prompt: &RenderedPrompt, backend: &Backend, d: &Dispatch<'_>) -> Result<Answered, LlmError> {
    let mut request = ChatRequest::new(d.model_name, prompt.system_text.clone(), prompt.user_text.clone());
    request.temperature = d.temperature;
    request.max_output_tokens = d.max_output_tokens;

    let send = |req: &ChatRequest| -> Result<ChatResponse, LlmError> {
        let response = match backend {
            Backend::Remote(b) => complete(req, b.as_ref(), d.retry, d.limiter)?,
            Backend::Scripted(s) => ChatResponse {
                text: s.respond(prompt, req, d.repeat_index)?,
                latency_ms: 0,
                attempt_count: 1,
            },
        };
        if let Some(log) = d.log {
            log.record(&ResponseLogRecord {
                prompt_hash: req.prompt_hash(),
                model: req.model_name.clone(),
                raw_text: response.text.clone(),
                latency_ms: response.latency_ms,
                timestamp: chrono::Utc::now().to_rfc3339(),
            })?;
        }
        Ok(response)
    };

    let first = send(&request)?;
    let verdict = Verdict::parse(prompt.task, &first.text);
    if !verdict.is_unparseable() {
        return Ok(Answered {
            verdict,
            raw_text: first.text,
            prompt_hash: request.prompt_hash(),
            attempts: first.attempt_count,
            reasked: false,
        });
    }
    let suffix = match prompt.task {
        Task::Pair => PAIR_REASK_SUFFIX,
        Task::Binary => BINARY_REASK_SUFFIX,
    };
    let retry_request = request.reask(suffix);
    let second = send(&retry_request)?;
    Ok(Answered {
        verdict: Verdict::parse(prompt.task, &second.text),
        raw_text: second.text,
        prompt_hash: retry_request.prompt_hash(),
        attempts: first.attempt_count + second.attempt_count,
        reasked: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    #[test]
    fn pair_examples() {
        assert_eq!(parse_pair_verdict("The buggy function is Function A."), PairChoice::A);
        assert_eq!(parse_pair_verdict("I think B"), PairChoice::B);
        assert_eq!(parse_pair_verdict("Both functions look correct."), PairChoice::Unparseable);
        assert_eq!(parse_pair_verdict("function b"), PairChoice::B);
        assert_eq!(parse_pair_verdict("**Function_A**"), PairChoice::A);
        assert_eq!(parse_pair_verdict(""), PairChoice::Unparseable);
    }

    #[test]
    fn pair_phrase_beats_later_letter() {
        // phrase rule applies before the standalone-letter rule
        assert_eq!(parse_pair_verdict("Function A. Option B is fine."), PairChoice::A);
        assert_eq!(parse_pair_verdict("Not Function B but Function A"), PairChoice::A);
        assert_eq!(parse_pair_verdict("A or B? B"), PairChoice::B);
        assert_eq!(parse_pair_verdict("FUNCTIONAL"), PairChoice::Unparseable);
    }

    #[test]
    fn binary_examples() {
        assert_eq!(parse_binary_verdict("buggy"), BinaryLabel::Buggy);
        assert_eq!(parse_binary_verdict("This function is not buggy."), BinaryLabel::NotBuggy);
        assert_eq!(parse_binary_verdict("Unable to determine."), BinaryLabel::Unparseable);
        assert_eq!(parse_binary_verdict("Yes, it contains a bug"), BinaryLabel::Buggy);
        assert_eq!(parse_binary_verdict("It does not contain a bug"), BinaryLabel::NotBuggy);
        assert_eq!(parse_binary_verdict("The code is bug-free"), BinaryLabel::NotBuggy);
        assert_eq!(parse_binary_verdict("Buggy? No bug here."), BinaryLabel::NotBuggy);
        // positive after every negative falls through to unparseable
        assert_eq!(parse_binary_verdict("not buggy... actually buggy"), BinaryLabel::Unparseable);
    }

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
        status: u16,
    }

    impl ChatBackend for Flaky {
        fn id(&self) -> String {
            "flaky".into()
        }
        fn send(&self, _: &ChatRequest) -> Result<String, BackendFailure> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                return Err(match self.status {
                    401 => BackendFailure::Auth("401".into()),
                    _ => BackendFailure::Transient("503".into()),
                });
            }
            Ok("Function A".into())
        }
    }

    fn req() -> ChatRequest {
        ChatRequest::new("m", "sys".into(), "user".into())
    }

    #[test]
    fn fault_injected_attempt_count() {
        let b = Flaky { failures: 2, calls: AtomicU32::new(0), status: 503 };
        let r = complete(&req(), &b, &RetryPolicy::immediate(5), None).unwrap();
        assert_eq!(r.attempt_count, 3);
        assert_eq!(r.text, "Function A");
    }

    #[test]
    fn auth_failure_is_not_retried() {
        let b = Flaky { failures: 10, calls: AtomicU32::new(0), status: 401 };
        let err = complete(&req(), &b, &RetryPolicy::immediate(5), None).unwrap_err();
        assert!(matches!(err, LlmError::AuthFailure(_)));
        assert_eq!(b.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn exhausted_after_five() {
        let b = Flaky { failures: 100, calls: AtomicU32::new(0), status: 503 };
        let err = complete(&req(), &b, &RetryPolicy::immediate(5), None).unwrap_err();
        assert!(matches!(err, LlmError::ProviderUnavailable { attempts: 5, .. }));
        assert_eq!(b.calls.load(Ordering::SeqCst), 5);
    }

    #[test]
    fn wire_format() {
        let mut r = req();
        r.temperature = 0.0;
        r.max_output_tokens = 16;
        assert_eq!(
            r.to_wire(),
            serde_json::json!({
                "model": "m",
                "messages": [{"role": "system", "content": "sys"}, {"role": "user", "content": "user"}],
                "temperature": 0.0,
                "max_tokens": 16
            })
        );
        let body = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": "Function B"}}]});
        assert_eq!(parse_chat_response(&body).unwrap(), "Function B");
        assert!(parse_chat_response(&serde_json::json!({})).is_err());
    }
}
