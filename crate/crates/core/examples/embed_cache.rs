//! Local trigram embeddings behind the persistent cache.
//!
//! cargo run --example embed_cache -- [CACHE_PATH]

use std::sync::atomic::{AtomicUsize, Ordering};

use codepair::embedding::{
    cache_load, embed_batch, EmbeddingCache, EmbeddingProvider, LocalProvider, ProviderError,
};
use codepair::retry::RetryPolicy;
use codepair::synthetic::generate_pairs;

/// Counts how often the wrapped provider is actually called.
struct Counting {
    inner: LocalProvider,
    calls: AtomicUsize,
}

impl EmbeddingProvider for Counting {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
    fn dim(&self) -> Option<usize> {
        self.inner.dim()
    }
    fn embed_text(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.embed_text(text)
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("codepair-example.cache"));

    let provider = Counting {
        inner: LocalProvider::new(256),
        calls: AtomicUsize::new(0),
    };
    let texts: Vec<String> = generate_pairs(40, 3).iter().map(|p| p.pair_text()).collect();
    let cache = EmbeddingCache::new();
    let retry = RetryPolicy::immediate(3);

    let first = embed_batch(&texts, &provider, &cache, &retry, 4)?;
    embed_batch(&texts, &provider, &cache, &retry, 4)?;
    println!("{} texts embedded twice, {} provider calls", texts.len(), provider.calls.load(Ordering::SeqCst));
    println!("norm of first vector: {:.12}", first[0].norm());

    cache.persist(&path)?;
    let reloaded = cache_load(&path)?;
    println!("cache {} -> {} entries", path.display(), reloaded.len());
    Ok(())
}
