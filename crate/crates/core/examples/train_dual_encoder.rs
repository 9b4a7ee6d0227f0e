//! Train a small dual encoder on templated pairs and print the loss curve.

use repoalign::encoder::SharingMode;
use repoalign::training::{loss_trace_csv, train, TrainConfig};

pub fn run_example() -> repoalign::Result<()> {
    let corpus = repoalign::synthetic::corpus(16, 42)?;
    let cfg = TrainConfig {
        mode: SharingMode::PartialSharing,
        d: 32,
        layers: 1,
        heads: 2,
        epochs: 8,
        ..TrainConfig::default()
    };
    let out = train(&corpus, &cfg)?;
    print!("{}", loss_trace_csv(&out.loss_trace));
    println!(
        "{} parameters, model digest {}",
        out.model.params.num_scalars(),
        &out.model.digest()[..16]
    );
    let h = out.model.embed_text("Fix parse header when the input is empty")?;
    println!("query embedding norm {:.6}", h.dot(&h).sqrt());
    Ok(())
}

fn main() -> repoalign::Result<()> {
    run_example()
}
