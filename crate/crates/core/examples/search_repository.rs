//! Index a corpus at two granularities and answer a natural-language query.

use repoalign::retrieval::{build_index, retrieve, Granularity, RetrievalConfig};
use repoalign::training::{train, TrainConfig};

pub fn run_example() -> repoalign::Result<()> {
    let corpus = repoalign::synthetic::corpus(16, 42)?;
    let cfg = TrainConfig {
        d: 32,
        layers: 1,
        heads: 2,
        epochs: 6,
        ..TrainConfig::default()
    };
    let model = train(&corpus, &cfg)?.model;
    let query = &corpus.requests().next().expect("non-empty corpus").problem_text;
    println!("query: {query:?}");
    let rcfg = RetrievalConfig { k: 5, ..RetrievalConfig::default() };
    for granularity in [Granularity::Function, Granularity::File] {
        let index = build_index(&corpus, &model, granularity)?;
        println!("{granularity} index with {} candidates", index.len());
        for (rank, hit) in retrieve(query, &index, &model, &rcfg)?.iter().enumerate() {
            println!("  {:>2}. {:.4} {}{}", rank + 1, hit.score, hit.id, if hit.injected { " (injected)" } else { "" });
        }
    }
    Ok(())
}

fn main() -> repoalign::Result<()> {
    run_example()
}
