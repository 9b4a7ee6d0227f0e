//! Fit the congruence discriminator and let adversarial search push a
//! graph-incongruent decoy out of the top spot.

use repoalign::adversarial::{adversarial_search, fit_discriminator, AsmConfig, DiscTrainConfig, SearchSpace};
use repoalign::retrieval::{top_k_with_injection, RetrievalConfig};
use repoalign::synthetic::planted_incongruence;

pub fn run_example() -> repoalign::Result<()> {
    let fx = planted_incongruence(11)?;
    let (disc, loss) = fit_discriminator(&fx.training_set, &DiscTrainConfig::default())?;
    println!("discriminator fitted, final loss {loss:.4}");

    let rcfg = RetrievalConfig::default();
    let plain = top_k_with_injection(&fx.query_embedding, &fx.index, &rcfg, &[])?;
    println!("plain top-3: {:?}", plain.iter().take(3).map(|e| e.id.as_str()).collect::<Vec<_>>());

    let space = SearchSpace {
        index: &fx.index,
        graph: &fx.graph,
        corpus: None,
    };
    let out = adversarial_search(&fx.query, &fx.query_embedding, &space, &disc, &rcfg, &AsmConfig::default())?;
    for t in &out.trace {
        println!(
            "round {}: k={} accepted={} rejected={} hardness={:.2} recovered={}",
            t.iteration, t.k, t.accepted, t.rejected, t.hardness, t.recovered_after_calibration
        );
    }
    println!("verified top-3: {:?}", out.ranked.iter().take(3).map(|e| e.id.as_str()).collect::<Vec<_>>());
    println!("decoy {} still first: {}", fx.decoy_id, out.ranked[0].id == fx.decoy_id);
    Ok(())
}

fn main() -> repoalign::Result<()> {
    run_example()
}
