//! Metric arithmetic, repeat aggregation and table output.

use codepair::corpus::BugType;
use codepair::eval::{aggregate_runs, emit_table, pair_f1, pair_metrics, PairOutcome, TableFormat};
use codepair::llm::PairChoice;

fn run(correct: usize, n: usize) -> Vec<PairOutcome> {
    (0..n)
        .map(|i| {
            let predicted = if i < correct { PairChoice::A } else { PairChoice::B };
            PairOutcome::new(format!("p{i}"), predicted, PairChoice::A, 100 + i, BugType::Other)
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for acc in [0.7293, 0.6987, 0.5, 1.0] {
        println!("accuracy {acc:.4} -> pair F1 {:.4}", pair_f1(acc));
    }

    let reports = [53, 54, 56]
        .into_iter()
        .map(|c| pair_metrics(&run(c, 100)))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = aggregate_runs(&reports)?;
    println!(
        "\n{} repeats: mean accuracy {:.4}, range {:?}\n",
        summary.runs,
        summary.accuracy.mean,
        summary.accuracy.range()
    );
    for format in [TableFormat::Markdown, TableFormat::Csv, TableFormat::Latex] {
        println!("{}", emit_table(&reports[..1], format, format == TableFormat::Latex));
    }
    Ok(())
}
