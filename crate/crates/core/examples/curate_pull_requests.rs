//! Run templated pull requests through the curation gates and show which
//! ones survive and why the others were dropped.

use repoalign::curation::{curate, GateConfig};
use repoalign::synthetic::{pull_requests, SyntheticConfig};

pub fn run_example() -> repoalign::Result<()> {
    let prs = pull_requests(&SyntheticConfig {
        pairs: 8,
        noise: 4,
        seed: 42,
    })?;
    let out = curate(&prs, &GateConfig::default())?;
    for d in &out.decisions {
        println!(
            "{}#{:<3} {:<5} {:<11} {}",
            d.repo,
            d.pr_id,
            if d.passed { "keep" } else { "drop" },
            d.stage,
            d.reason
        );
    }
    for pair in out.corpus.pairs() {
        println!("{} -> {:?} ({:?})", pair.query_id, pair.code_unit_ids, pair.tier);
    }
    Ok(())
}

fn main() -> repoalign::Result<()> {
    run_example()
}
