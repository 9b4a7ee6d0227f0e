//! Generate, verify, calibrate and anneal: the adversarial search loop that
//! couples the retriever with a congruence discriminator.

mod discriminator;
mod external;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::depgraph::DepGraph;
use crate::encoder::Embedding;
use crate::error::{Error, Result};
use crate::retrieval::{cosines, top_k_over, Index, RankedEntry, RankedList, RetrievalConfig};

pub use discriminator::{
    discriminate, fit_discriminator, fit_discriminator_from, train_discriminator, DiscSample, DiscTrainConfig, DiscTrainingSet,
    FfnDiscriminator,
};
pub use external::ExternalDiscriminator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AsmConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub delta_k: usize,
    pub k_max: usize,
    pub max_iters: usize,
}

impl Default for AsmConfig {
    fn default() -> Self {
        AsmConfig {
            epsilon: 0.82,
            delta: 0.05,
            delta_k: 5,
            k_max: 50,
            max_iters: 3,
        }
    }
}

impl AsmConfig {
    pub fn validate(&self, initial_k: usize) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::domain(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::domain(format!("delta must be non-negative, got {}", self.delta)));
        }
        if self.delta_k == 0 {
            return Err(Error::domain("delta_k must be at least 1"));
        }
        if self.k_max < initial_k {
            return Err(Error::domain(format!("k_max {} is below the initial k {initial_k}", self.k_max)));
        }
        Ok(())
    }
}

/// Everything a discriminator may look at for one (query, candidate) pair.
/// The built-in model reads the embeddings, external ones the text.
#[derive(Debug, Clone, Copy)]
pub struct Assessment<'a> {
    pub query: &'a str,
    pub query_embedding: &'a Embedding,
    pub candidate_id: &'a str,
    pub candidate_source: &'a str,
    pub candidate_embedding: &'a Embedding,
    pub neighbors: &'a [Embedding],
    pub neighbor_sources: &'a [&'a str],
}

pub trait Discriminator: Sync {
    /// Congruence score in `[0, 1]`.
    fn assess(&self, a: &Assessment<'_>) -> f64;
}

impl Discriminator for FfnDiscriminator {
    fn assess(&self, a: &Assessment<'_>) -> f64 {
        self.score(a.candidate_embedding, a.query_embedding, a.neighbors)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub accepted: Vec<(String, f64)>,
    pub rejected: Vec<(String, f64)>,
}

/// Splits scored candidates at `epsilon`; a score equal to `epsilon` is
/// accepted. Order is kept within each part.
pub fn partition_scores(scored: impl IntoIterator<Item = (String, f64)>, epsilon: f64) -> VerificationResult {
    let mut out = VerificationResult::default();
    for (id, s) in scored {
        if s >= epsilon {
            out.accepted.push((id, s));
        } else {
            out.rejected.push((id, s));
        }
    }
    out
}

pub fn calibrate_embedding(h_q: &Embedding, h_c: &Embedding, h_ctx: &Embedding) -> Embedding {
    let (a, b) = (h_q.dot(h_c), h_q.dot(h_ctx));
    let m = a.max(b);
    let (wa, wb) = ((a - m).exp(), (b - m).exp());
    let mixed = (h_c * wa + h_ctx * wb) / (wa + wb);
    let n = mixed.dot(&mixed).sqrt();
    if n > 0.0 {
        mixed / n
    } else {
        h_c.clone()
    }
}

pub fn anneal_k(k: usize, delta_k: usize, k_max: usize) -> usize {
    (k + delta_k).min(k_max)
}

/// Fraction of scores inside `[epsilon - delta, epsilon + delta]`.
pub fn hardness(scores: &[f64], epsilon: f64, delta: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::domain("hardness of an empty score list"));
    }
    // Compare via the distance to epsilon so that 0.87 - 0.82 == 0.05 sits
    // inside the window despite rounding in the bounds.
    let inside = scores
        .iter()
        .filter(|&&s| (s - epsilon).abs() <= delta + 1e-12)
        .count();
    Ok(inside as f64 / scores.len() as f64)
}

/// Candidate space for one search: the index plus the dependency graph for
/// neighborhoods and, optionally, the corpus for source text.
#[derive(Clone, Copy)]
pub struct SearchSpace<'a> {
    pub index: &'a Index,
    pub graph: &'a DepGraph,
    pub corpus: Option<&'a Corpus>,
}

impl<'a> SearchSpace<'a> {
    fn neighbor_ids(&self, id: &str) -> Vec<&'a str> {
        self.graph
            .neighbors(id)
            .into_iter()
            .filter(|n| self.index.get(n).is_some())
            .collect()
    }

    fn source(&self, id: &str) -> &'a str {
        self.corpus.and_then(|c| c.unit(id)).map_or("", |u| u.source.as_str())
    }

    /// Renormalized mean of the neighbor embeddings, `None` when isolated.
    fn context(&self, id: &str) -> Option<Embedding> {
        let ids = self.neighbor_ids(id);
        let first = self.index.get(ids.first()?)?;
        let mut acc = Embedding::zeros(first.len());
        for n in &ids {
            acc += self.index.get(n).expect("filtered to indexed ids");
        }
        let norm = acc.dot(&acc).sqrt();
        (norm > 0.0).then(|| acc / norm)
    }
}

/// Scores every candidate with `disc` and partitions at `epsilon`.
/// `overlay` replaces index embeddings for calibrated candidates.
pub fn verify_candidates(
    candidates: &[RankedEntry],
    query: &str,
    h_q: &Embedding,
    space: &SearchSpace<'_>,
    overlay: &HashMap<String, Embedding>,
    disc: &dyn Discriminator,
    epsilon: f64,
) -> VerificationResult {
    partition_scores(
        candidates
            .iter()
            .map(|c| (c.id.clone(), assess_one(&c.id, query, h_q, space, overlay, disc))),
        epsilon,
    )
}

fn assess_one(
    id: &str,
    query: &str,
    h_q: &Embedding,
    space: &SearchSpace<'_>,
    overlay: &HashMap<String, Embedding>,
    disc: &dyn Discriminator,
) -> f64 {
    let neighbor_ids = space.neighbor_ids(id);
    let neighbors: Vec<Embedding> = neighbor_ids
        .iter()
        .map(|n| space.index.get(n).expect("filtered to indexed ids").clone())
        .collect();
    let neighbor_sources: Vec<&str> = neighbor_ids.iter().map(|n| space.source(n)).collect();
    let h_c = overlay
        .get(id)
        .or_else(|| space.index.get(id))
        .expect("candidates come from the index");
    disc.assess(&Assessment {
        query,
        query_embedding: h_q,
        candidate_id: id,
        candidate_source: space.source(id),
        candidate_embedding: h_c,
        neighbors: &neighbors,
        neighbor_sources: &neighbor_sources,
    })
    .clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub k: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub hardness: f64,
    /// Rejected candidates whose calibrated embedding now clears epsilon.
    pub recovered_after_calibration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub ranked: RankedList,
    pub trace: Vec<IterationTrace>,
    pub verification: VerificationResult,
}

/// Runs up to `acfg.max_iters` rounds of generation and verification.
/// Calibrated embeddings live only for the duration of this call.
pub fn adversarial_search(
    query: &str,
    h_q: &Embedding,
    space: &SearchSpace<'_>,
    disc: &dyn Discriminator,
    rcfg: &RetrievalConfig,
    acfg: &AsmConfig,
) -> Result<SearchOutcome> {
    rcfg.validate()?;
    acfg.validate(rcfg.k)?;
    if space.index.is_empty() {
        return Err(Error::domain("cannot search an empty index"));
    }
    let requested = rcfg.k.min(space.index.len());
    let mut overlay: HashMap<String, Embedding> = HashMap::new();
    let mut hard_prev: Vec<String> = Vec::new();
    let mut k = rcfg.k;
    let mut trace = Vec::new();
    let mut last: Option<(RankedList, VerificationResult)> = None;

    for iteration in 1..=acfg.max_iters {
        let cfg = RetrievalConfig { k, ..*rcfg };
        let cos = cosines(h_q, space.index, &overlay);
        let generated = top_k_over(&cos, space.index, &cfg, &hard_prev);
        let verdict = verify_candidates(&generated, query, h_q, space, &overlay, disc, acfg.epsilon);
        let scores: Vec<f64> = verdict.accepted.iter().chain(&verdict.rejected).map(|(_, s)| *s).collect();
        let mut entry = IterationTrace {
            iteration,
            k,
            accepted: verdict.accepted.len(),
            rejected: verdict.rejected.len(),
            hardness: hardness(&scores, acfg.epsilon, acfg.delta)?,
            recovered_after_calibration: 0,
        };
        let done = verdict.rejected.is_empty();
        if !done {
            for (id, _) in &verdict.rejected {
                let h_c = overlay.get(id).or_else(|| space.index.get(id)).expect("indexed").clone();
                let h_ctx = space.context(id).unwrap_or_else(|| h_c.clone());
                overlay.insert(id.clone(), calibrate_embedding(h_q, &h_c, &h_ctx));
                if assess_one(id, query, h_q, space, &overlay, disc) >= acfg.epsilon {
                    entry.recovered_after_calibration += 1;
                }
            }
            hard_prev = verdict.rejected.iter().map(|(id, _)| id.clone()).collect();
            k = anneal_k(k, acfg.delta_k, acfg.k_max);
        }
        trace.push(entry);
        last = Some((generated, verdict));
        if done {
            break;
        }
    }

    let Some((generated, verdict)) = last else {
        let ranked = top_k_over(&cosines(h_q, space.index, &HashMap::new()), space.index, rcfg, &[]);
        return Ok(SearchOutcome {
            ranked,
            trace,
            verification: VerificationResult::default(),
        });
    };
    let by_id: HashMap<&str, &RankedEntry> = generated.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut ranked: RankedList = verdict
        .accepted
        .iter()
        .map(|(id, _)| by_id[id.as_str()].clone())
        .collect();
    let mut fallback = verdict.rejected.clone();
    fallback.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    for (id, _) in fallback {
        if ranked.len() >= requested {
            break;
        }
        ranked.push(by_id[id.as_str()].clone());
    }
    ranked.truncate(requested);
    Ok(SearchOutcome {
        ranked,
        trace,
        verification: verdict,
    })
}

/// Parses `builtin` or `external:<endpoint>`.
pub enum DiscriminatorSpec {
    Builtin,
    External(String),
}

impl std::str::FromStr for DiscriminatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "builtin" {
            Ok(DiscriminatorSpec::Builtin)
        } else if let Some(endpoint) = s.strip_prefix("external:") {
            if endpoint.is_empty() {
                return Err(Error::domain("external discriminator needs an endpoint"));
            }
            Ok(DiscriminatorSpec::External(endpoint.to_string()))
        } else {
            Err(Error::domain(format!("unknown discriminator {s:?}; use builtin or external:<endpoint>")))
        }
    }
}
