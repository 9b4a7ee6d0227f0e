//! Change-request to code retrieval.
//!
//! Pull requests are filtered and aligned into (problem text, code unit)
//! pairs, a dual encoder learns to embed both sides into one space, and
//! retrieval ranks functions, files or modules for a new request. An optional
//! discriminator re-checks the top candidates against their dependency-graph
//! neighbourhood and widens the search when too few survive.

pub mod adversarial;
pub mod autograd;
pub mod cli;
pub mod corpus;
pub mod curation;
pub mod depgraph;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod retrieval;
pub mod syntax;
pub mod training;
pub mod synthetic;

pub use error::{Error, Result};

use sha2::{Digest, Sha256};

/// Seed for one named component, derived from the global seed so that every
/// random stream in a run traces back to a single number.
pub fn derive_seed(seed: u64, component: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(component.as_bytes());
    h.update([0]);
    h.update(seed.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
