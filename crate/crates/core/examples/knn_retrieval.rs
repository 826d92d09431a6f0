//! Exact k-nearest-neighbour search over embedded training pairs.

use codepair::embedding::local_embed;
use codepair::retrieval::{build_index, FlatIndex};
use codepair::synthetic::generate_pairs;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pairs = generate_pairs(300, 11);
    let (query, train) = pairs.split_first().expect("non-empty");

    let index = build_index(train.iter().map(|p| (p.pair_id.clone(), local_embed(&p.pair_text(), 256))))?;
    let q = local_embed(&query.pair_text(), 256);
    println!("query {} ({})", query.pair_id, query.bug_type.as_str());
    for hit in index.query(&q, 5)? {
        let p = &train[hit.ordinal];
        println!("  {:<10} {:<22} d = {:.4}", hit.id, p.bug_type.as_str(), hit.distance);
    }

    let path = std::env::temp_dir().join("codepair-example.index");
    index.save(&path)?;
    let restored = FlatIndex::load(&path)?;
    assert_eq!(restored.query(&q, 5)?, index.query(&q, 5)?);
    println!("snapshot round-trip ok ({} entries, dim {})", restored.len(), restored.dim());
    Ok(())
}
