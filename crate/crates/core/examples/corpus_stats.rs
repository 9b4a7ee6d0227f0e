//! Persist a corpus as JSONL, read it back and print per-repository
//! length statistics.

use repoalign::corpus::{compute_corpus_stats, read_corpus, write_corpus};

pub fn run_example() -> repoalign::Result<()> {
    let corpus = repoalign::synthetic::corpus(24, 5)?;
    let path = std::env::temp_dir().join(format!("repoalign-stats-{}.jsonl", std::process::id()));
    write_corpus(&corpus, &path)?;
    let loaded = read_corpus(&path)?;
    std::fs::remove_file(&path).ok();
    assert_eq!(loaded, corpus);
    println!("{} requests, {} units, {} pairs", loaded.requests().count(), loaded.num_units(), loaded.pairs().len());
    print!("{}", compute_corpus_stats(&loaded).table());
    Ok(())
}

fn main() -> repoalign::Result<()> {
    run_example()
}
