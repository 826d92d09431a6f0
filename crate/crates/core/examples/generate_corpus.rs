//! Writes a seeded synthetic corpus and prints a short summary.
//!
//! cargo run --example generate_corpus -- [N] [SEED] [OUT]

use std::path::PathBuf;

use codepair::corpus::{bucket_by_length, load_corpus, BugType, LengthBuckets, DEFAULT_BOUNDARIES};
use codepair::synthetic::generate_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(500);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(42);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "synthetic.jsonl".into()));

    let corpus = generate_corpus(n, seed);
    corpus.write_jsonl(&out)?;

    // round-trip through the validating loader
    let loaded = load_corpus(&out)?;
    assert_eq!(loaded.content_hash(), corpus.content_hash());
    println!("{} pairs -> {}", loaded.len(), out.display());

    for t in BugType::ALL {
        let count = loaded.pairs().iter().filter(|p| p.bug_type == t).count();
        println!("  {:<22} {count}", t.as_str());
    }
    let buckets = bucket_by_length(
        loaded.pairs().iter().map(|p| (p.pair_id.clone(), p.token_count_pair())),
        &DEFAULT_BOUNDARIES,
    )?;
    for label in LengthBuckets::new(&DEFAULT_BOUNDARIES)?.labels() {
        println!("  {label:<10} {}", buckets[&label].len());
    }
    Ok(())
}
