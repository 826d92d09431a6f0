//! Seeded 80/10/10 split, and a check that it ignores input order.
//!
//! cargo run --example split_dataset -- [SEED]

use codepair::corpus::{split_ids, DEFAULT_RATIOS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(42);
    let ids: Vec<String> = (0..2289).map(|i| format!("pair-{i:04}")).collect();

    let split = split_ids(ids.clone(), seed, DEFAULT_RATIOS)?;
    let (train, valid, test) = split.sizes();
    println!("seed {seed}: train {train}, valid {valid}, test {test}");

    let mut reversed = ids.clone();
    reversed.reverse();
    let again = split_ids(reversed, seed, DEFAULT_RATIOS)?;
    assert_eq!(split.to_json(), again.to_json());
    println!("split hash {}", split.content_hash());
    println!("first test ids: {:?}", &split.test[..5]);
    Ok(())
}
