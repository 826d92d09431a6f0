//! How free-form model answers map onto verdicts.

use codepair::llm::{parse_binary_verdict, parse_pair_verdict};

fn main() {
    for text in [
        "Function A",
        "The bug is in function b.",
        "Function A looks fine, so the answer is Function B",
        "Answer: (A)",
        "I cannot tell.",
    ] {
        println!("{text:<55} -> {}", parse_pair_verdict(text).as_str());
    }
    println!();
    for text in [
        "buggy",
        "This function is not buggy.",
        "It is incorrect: the loop bound is off by one.",
        "Looks correct to me.",
        "maybe",
    ] {
        println!("{text:<55} -> {}", parse_binary_verdict(text).as_str());
    }
}
