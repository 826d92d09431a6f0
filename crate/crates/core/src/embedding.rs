//! Embedding providers and a persistent, content-addressed vector cache.
//!
//! Two providers ship: [`LocalProvider`], a deterministic offline embedder
//! built from hashed character trigrams, and [`RemoteProvider`], which talks
//! to an OpenAI-style `/embeddings` endpoint. Every lookup goes through an
//! [`EmbeddingCache`] keyed by the SHA-256 of the raw text bytes plus the
//! provider's model id.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, Read};
use std::path::Path;
use std::sync::{OnceLock, RwLock};
use std::time::Duration;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::binio::Reader;
use crate::exec::bounded_map;
use crate::http::{self, HttpError};
use crate::retry::{Failure, RetryPolicy};

pub const EMBED_API_KEY_VAR: &str = "EMBED_API_KEY";

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding provider unavailable after {attempts} attempt(s): {reason}")]
    ProviderUnavailable { attempts: u32, reason: String },
    #[error("embedding provider rejected credentials: {0}")]
    AuthFailure(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid vector: {0}")]
    InvalidVector(String),
    #[error("corrupt cache file: {0}")]
    CorruptCache(String),
    #[error("cache i/o: {0}")]
    IoFailure(#[from] io::Error),
}

/// A fixed-length real vector produced by a named model.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    model_id: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, model_id: impl Into<String>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::InvalidVector("zero-length vector".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::InvalidVector(format!(
                "non-finite entry at index {i}"
            )));
        }
        Ok(Self {
            values,
            model_id: model_id.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey {
    /// Lowercase hex SHA-256 of the exact text bytes.
    pub content_hash: String,
    pub model_id: String,
}

impl CacheKey {
    pub fn new(text: &str, model_id: &str) -> Self {
        Self {
            content_hash: hex::encode(Sha256::digest(text.as_bytes())),
            model_id: model_id.to_string(),
        }
    }
}

/// Error raised by a provider for one request.
#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("transient: {0}")]
    Transient(String),
    #[error("auth: {0}")]
    Auth(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("{0}")]
    Fatal(String),
}

pub trait EmbeddingProvider: Send + Sync {
    fn model_id(&self) -> &str;

    /// Declared output dimension, if known before the first response.
    fn dim(&self) -> Option<usize>;

    fn embed_text(&self, text: &str) -> Result<Vec<f64>, ProviderError>;
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Deterministic trigram feature-hashing embedding.
///
/// Whitespace is trimmed and collapsed to single spaces, every character
/// trigram is hashed with FNV-1a into `hash mod dim`, and the count vector is
/// L2-normalized. Texts with fewer than three non-whitespace characters map
/// to the zero vector.
pub fn local_embed(text: &str, dim: usize) -> Vec<f64> {
    assert!(dim >= 16, "local embedding dimension must be at least 16");
    let mut counts = vec![0.0f64; dim];
    if text.chars().filter(|c| !c.is_whitespace()).count() < 3 {
        return counts;
    }
    let normalized: Vec<char> = text
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .chars()
        .collect();
    let mut buf = [0u8; 12];
    for tri in normalized.windows(3) {
        let mut len = 0;
        for c in tri {
            len += c.encode_utf8(&mut buf[len..]).len();
        }
        let bucket = (fnv1a64(&buf[..len]) % dim as u64) as usize;
        counts[bucket] += 1.0;
    }
    let norm = counts.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut counts {
        *v /= norm;
    }
    counts
}

#[derive(Debug, Clone)]
pub struct LocalProvider {
    dim: usize,
    model_id: String,
}

impl LocalProvider {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize) -> Self {
        assert!(dim >= 16, "local embedding dimension must be at least 16");
        Self {
            dim,
            model_id: format!("local-trigram-{dim}"),
        }
    }
}

impl Default for LocalProvider {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

impl EmbeddingProvider for LocalProvider {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        Ok(local_embed(text, self.dim))
    }
}

/// OpenAI-compatible embeddings endpoint. The dimension is learned from the
/// first response and enforced afterwards.
pub struct RemoteProvider {
    url: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    learned_dim: OnceLock<usize>,
}

impl RemoteProvider {
    pub fn new(url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            api_key,
            agent: http::agent(Duration::from_secs(60)),
            learned_dim: OnceLock::new(),
        }
    }

    /// Reads the bearer token from `EMBED_API_KEY`.
    pub fn from_env(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self::new(url, model, http::api_key_from_env(EMBED_API_KEY_VAR))
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn dim(&self) -> Option<usize> {
        self.learned_dim.get().copied()
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        let body = serde_json::json!({ "model": self.model, "input": [text] });
        let resp = http::post_json(&self.agent, &self.url, self.api_key.as_deref(), &body)
            .map_err(|f| match f {
                Failure::Permanent(HttpError::Auth(code)) => {
                    ProviderError::Auth(format!("HTTP {code}"))
                }
                Failure::Permanent(e) => ProviderError::Fatal(e.to_string()),
                Failure::Transient(e) => ProviderError::Transient(e.to_string()),
            })?;
        let values = parse_embedding_response(&resp).map_err(ProviderError::Fatal)?;
        let dim = *self.learned_dim.get_or_init(|| values.len());
        if values.len() != dim {
            return Err(ProviderError::DimensionMismatch {
                expected: dim,
                actual: values.len(),
            });
        }
        Ok(values)
    }
}

/// Extracts `data[0].embedding` from an embeddings response body.
pub fn parse_embedding_response(body: &serde_json::Value) -> Result<Vec<f64>, String> {
    let arr = body
        .get("data")
        .and_then(|d| d.get(0))
        .and_then(|d| d.get("embedding"))
        .and_then(|e| e.as_array())
        .ok_or_else(|| "missing data[0].embedding".to_string())?;
    arr.iter()
        .map(|v| v.as_f64().ok_or_else(|| "non-numeric embedding entry".to_string()))
        .collect()
}

/// In-memory cache with concurrent readers and serialized writers.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    entries: RwLock<HashMap<CacheKey, EmbeddingVector>>,
}

impl EmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &CacheKey) -> Option<EmbeddingVector> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn insert(&self, key: CacheKey, vector: EmbeddingVector) {
        self.entries.write().expect("cache lock").insert(key, vector);
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn keys(&self) -> Vec<CacheKey> {
        let mut keys: Vec<_> = self.entries.read().expect("cache lock").keys().cloned().collect();
        keys.sort();
        keys
    }

    /// Writes the cache in the binary format described on [`cache_load`].
    pub fn persist(&self, path: &Path) -> Result<(), EmbeddingError> {
        let entries = self.entries.read().expect("cache lock");
        let mut models: BTreeMap<&str, usize> = BTreeMap::new();
        for v in entries.values() {
            match models.insert(v.model_id(), v.dim()) {
                Some(prev) if prev != v.dim() => {
                    return Err(EmbeddingError::DimensionMismatch {
                        expected: prev,
                        actual: v.dim(),
                    })
                }
                _ => {}
            }
        }
        let model_index: HashMap<&str, u32> =
            models.keys().enumerate().map(|(i, m)| (*m, i as u32)).collect();

        let mut header = Vec::new();
        header.extend_from_slice(CACHE_MAGIC);
        header.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        header.extend_from_slice(&(models.len() as u32).to_le_bytes());
        for (model, dim) in &models {
            header.extend_from_slice(&(model.len() as u32).to_le_bytes());
            header.extend_from_slice(model.as_bytes());
            header.extend_from_slice(&(*dim as u32).to_le_bytes());
        }
        header.extend_from_slice(&(entries.len() as u64).to_le_bytes());
        let crc = crc32fast::hash(&header);
        let mut out = header;
        out.extend_from_slice(&crc.to_le_bytes());

        let mut sorted: Vec<_> = entries.iter().collect();
        sorted.sort_by(|a, b| a.0.cmp(b.0));
        for (key, vector) in sorted {
            let digest = hex::decode(&key.content_hash)
                .ok()
                .filter(|d| d.len() == 32)
                .ok_or_else(|| EmbeddingError::CorruptCache("bad content hash in key".into()))?;
            let mut record = Vec::with_capacity(36 + 8 * vector.dim());
            record.extend_from_slice(&digest);
            record.extend_from_slice(&model_index[key.model_id.as_str()].to_le_bytes());
            for v in vector.values() {
                record.extend_from_slice(&v.to_bits().to_le_bytes());
            }
            let crc = crc32fast::hash(&record);
            out.extend_from_slice(&record);
            out.extend_from_slice(&crc.to_le_bytes());
        }
        fs::write(path, out)?;
        Ok(())
    }
}

const CACHE_MAGIC: &[u8; 8] = b"CPEMBED\0";
const CACHE_VERSION: u32 = 1;

/// Loads a cache file.
///
/// Layout (little-endian): magic `CPEMBED\0`, version `u32`, model count
/// `u32`, then per model `(name_len u32, name bytes, dim u32)`, record count
/// `u64`, header CRC32. Each record is `(sha256 [32], model index u32,
/// dim × f64 bits)` followed by its CRC32. Trailing bytes are rejected.
pub fn cache_load(path: &Path) -> Result<EmbeddingCache, EmbeddingError> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes);
    let corrupt = |m: &str| EmbeddingError::CorruptCache(m.to_string());

    let magic = r.take(8).ok_or_else(|| corrupt("truncated header"))?;
    if magic != CACHE_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.u32().ok_or_else(|| corrupt("truncated header"))?;
    if version != CACHE_VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let n_models = r.u32().ok_or_else(|| corrupt("truncated header"))? as usize;
    let mut models = Vec::with_capacity(n_models.min(1024));
    for _ in 0..n_models {
        let len = r.u32().ok_or_else(|| corrupt("truncated model table"))? as usize;
        let name = r.take(len).ok_or_else(|| corrupt("truncated model table"))?;
        let name = String::from_utf8(name.to_vec()).map_err(|_| corrupt("model id not utf-8"))?;
        let dim = r.u32().ok_or_else(|| corrupt("truncated model table"))? as usize;
        if dim == 0 {
            return Err(corrupt("zero dimension in model table"));
        }
        models.push((name, dim));
    }
    let n_records = r.u64().ok_or_else(|| corrupt("truncated header"))?;
    let header_end = r.pos;
    let crc = r.u32().ok_or_else(|| corrupt("truncated header"))?;
    if crc != crc32fast::hash(&bytes[..header_end]) {
        return Err(corrupt("header checksum mismatch"));
    }

    let cache = EmbeddingCache::new();
    {
        let mut entries = cache.entries.write().expect("cache lock");
        for i in 0..n_records {
            let start = r.pos;
            let digest = r.take(32).ok_or_else(|| corrupt(&format!("truncated record {i}")))?;
            let model_idx = r.u32().ok_or_else(|| corrupt(&format!("truncated record {i}")))? as usize;
            let (model, dim) = models
                .get(model_idx)
                .ok_or_else(|| corrupt(&format!("record {i} names unknown model")))?;
            let mut values = Vec::with_capacity(*dim);
            for _ in 0..*dim {
                let bits = r.u64().ok_or_else(|| corrupt(&format!("truncated record {i}")))?;
                values.push(f64::from_bits(bits));
            }
            let end = r.pos;
            let crc = r.u32().ok_or_else(|| corrupt(&format!("truncated record {i}")))?;
            if crc != crc32fast::hash(&bytes[start..end]) {
                return Err(corrupt(&format!("record {i} checksum mismatch")));
            }
            let key = CacheKey {
                content_hash: hex::encode(digest),
                model_id: model.clone(),
            };
            let vector = EmbeddingVector::new(values, model.clone())
                .map_err(|e| corrupt(&format!("record {i}: {e}")))?;
            entries.insert(key, vector);
        }
    }
    if !r.at_end() {
        return Err(corrupt("trailing bytes after last record"));
    }
    Ok(cache)
}

/// Loads a cache file if it exists, otherwise starts empty.
pub fn cache_load_or_default(path: &Path) -> Result<EmbeddingCache, EmbeddingError> {
    match fs::File::open(path) {
        Ok(mut f) => {
            let mut probe = [0u8; 1];
            if f.read(&mut probe)? == 0 {
                return Ok(EmbeddingCache::new());
            }
            cache_load(path)
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(EmbeddingCache::new()),
        Err(e) => Err(e.into()),
    }
}

/// Returns the cached vector for `text`, calling the provider only on a miss.
pub fn embed(
    text: &str,
    provider: &dyn EmbeddingProvider,
    cache: &EmbeddingCache,
    retry: &RetryPolicy,
) -> Result<EmbeddingVector, EmbeddingError> {
    let key = CacheKey::new(text, provider.model_id());
    if let Some(hit) = cache.get(&key) {
        return Ok(hit);
    }
    let (values, _) = retry
        .run(|_| match provider.embed_text(text) {
            Ok(v) => Ok(v),
            Err(ProviderError::Transient(e)) => Err(Failure::Transient(ProviderError::Transient(e))),
            Err(e) => Err(Failure::Permanent(e)),
        })
        .map_err(|gave_up| match gave_up.error {
            ProviderError::Auth(reason) => EmbeddingError::AuthFailure(reason),
            ProviderError::DimensionMismatch { expected, actual } => {
                EmbeddingError::DimensionMismatch { expected, actual }
            }
            other => EmbeddingError::ProviderUnavailable {
                attempts: gave_up.attempts,
                reason: other.to_string(),
            },
        })?;
    if let Some(expected) = provider.dim() {
        if values.len() != expected {
            return Err(EmbeddingError::DimensionMismatch {
                expected,
                actual: values.len(),
            });
        }
    }
    let vector = EmbeddingVector::new(values, provider.model_id())?;
    cache.insert(key, vector.clone());
    Ok(vector)
}

/// Embeds many texts with at most `max_in_flight` concurrent provider
/// requests. Output order matches input order. Repeated texts are requested
/// once. Vectors obtained before a failure stay cached; the error reported is
/// the first failing text in input order.
pub fn embed_batch(
    texts: &[String],
    provider: &dyn EmbeddingProvider,
    cache: &EmbeddingCache,
    retry: &RetryPolicy,
    max_in_flight: usize,
) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
    assert!(max_in_flight >= 1, "max_in_flight must be positive");
    let mut unique: Vec<&str> = Vec::new();
    let mut slot_of: HashMap<&str, usize> = HashMap::new();
    let positions: Vec<usize> = texts
        .iter()
        .map(|t| {
            *slot_of.entry(t.as_str()).or_insert_with(|| {
                unique.push(t.as_str());
                unique.len() - 1
            })
        })
        .collect();
    let results = bounded_map(&unique, max_in_flight, |_, text| {
        embed(text, provider, cache, retry)
    });
    let mut vectors = Vec::with_capacity(results.len());
    for r in results {
        vectors.push(r?);
    }
    Ok(positions.into_iter().map(|i| vectors[i].clone()).collect())
}
