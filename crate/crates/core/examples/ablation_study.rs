//! Compare sharing modes with and without adversarial verification on a
//! small synthetic suite.

use repoalign::adversarial::AsmConfig;
use repoalign::encoder::SharingMode;
use repoalign::evaluation::{ablate, AblationAxes};
use repoalign::retrieval::RetrievalConfig;
use repoalign::training::TrainConfig;

pub fn run_example() -> repoalign::Result<()> {
    let corpus = repoalign::synthetic::corpus(16, 42)?;
    let base = TrainConfig {
        d: 16,
        layers: 1,
        heads: 2,
        epochs: 3,
        ..TrainConfig::default()
    };
    let axes = AblationAxes {
        modes: vec![SharingMode::PartialSharing, SharingMode::SingleTower],
        adversarial: vec![true, false],
        ..AblationAxes::default()
    };
    let table = ablate(
        &corpus,
        &axes.variants(),
        &[42],
        &base,
        &RetrievalConfig::default(),
        &AsmConfig::default(),
        10,
        5,
    )?;
    print!("{}", table.to_csv());
    Ok(())
}

fn main() -> repoalign::Result<()> {
    run_example()
}
