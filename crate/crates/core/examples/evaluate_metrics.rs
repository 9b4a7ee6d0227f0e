//! Ranking metrics on a hand-made example, then a tiered evaluation of a
//! trained retriever.

use std::collections::BTreeSet;

use repoalign::evaluation::{evaluate, gold_from_corpus, mrr, precision_recall_f1, top_n_accuracy, Retriever};
use repoalign::retrieval::{build_index, Granularity, RetrievalConfig};
use repoalign::training::{train, TrainConfig};

pub fn run_example() -> repoalign::Result<()> {
    let ranked = ["a", "b", "c", "d", "e"];
    let gold: BTreeSet<String> = ["a", "f"].iter().map(|s| s.to_string()).collect();
    let (p, r, f1) = precision_recall_f1(&ranked, &gold, 5)?;
    println!("p={p} r={r} f1={f1:.4} mrr={} top5={}", mrr(&ranked, &gold), top_n_accuracy(&ranked, &gold, 5));

    let corpus = repoalign::synthetic::corpus(16, 42)?;
    let cfg = TrainConfig {
        d: 32,
        layers: 1,
        heads: 2,
        epochs: 6,
        ..TrainConfig::default()
    };
    let model = train(&corpus, &cfg)?.model;
    let index = build_index(&corpus, &model, Granularity::Function)?;
    let retriever = Retriever {
        model: &model,
        index: &index,
        config: RetrievalConfig::default(),
        adversarial: None,
        corpus: Some(&corpus),
    };
    let gold = gold_from_corpus(&corpus, Granularity::Function);
    let report = evaluate(&corpus, &gold, |r| retriever.ranked_ids(&r.problem_text), 10, 5)?;
    print!("{}", report.to_json());
    if let Some(qpm) = report.queries_per_minute {
        println!("throughput: {qpm:.0} queries/minute");
    }
    Ok(())
}

fn main() -> repoalign::Result<()> {
    run_example()
}
