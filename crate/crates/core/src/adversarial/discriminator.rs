//! Built-in congruence discriminator: a two-layer FFN over `d·(h_c ⊙ h_q)` plus
//! a single attention readout over the candidate's graph neighborhood.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autograd::{Matrix, Tape, Var};
use crate::corpus::Corpus;
use crate::depgraph::DepGraph;
use crate::encoder::{Embedding, Model};
use crate::error::{Error, Result};
use crate::retrieval::cosine;

const W1: usize = 0;
const B1: usize = 1;
const W2: usize = 2;
const B2: usize = 3;
const WA: usize = 4;
const U: usize = 5;
const MASKED: f64 = -1e9;
const INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct FfnDiscriminator {
    pub dim: usize,
    /// `W1 (d×d), b1 (1×d), w2 (d×1), b2 (1×1), Wa (d×d), u (d×1)`.
    pub tensors: Vec<Matrix>,
}

fn shapes(d: usize) -> [(usize, usize); 6] {
    [(d, d), (1, d), (d, 1), (1, 1), (d, d), (d, 1)]
}

/// Inputs for a batch of assessments. Neighborhoods index into a shared pool.
struct Batch {
    queries: Matrix,
    candidates: Matrix,
    pool: Matrix,
    mask: Matrix,
    has_neighbors: Matrix,
}

impl Batch {
    fn new<'a>(d: usize, pool: &[Embedding], rows: impl Iterator<Item = (&'a Embedding, &'a Embedding, &'a [usize])>) -> Batch {
        let rows: Vec<_> = rows.collect();
        let n = rows.len();
        let m = pool.len().max(1);
        let mut b = Batch {
            queries: Matrix::zeros((n, d)),
            candidates: Matrix::zeros((n, d)),
            pool: Matrix::zeros((m, d)),
            mask: Matrix::from_elem((n, m), MASKED),
            has_neighbors: Matrix::zeros((n, 1)),
        };
        for (i, e) in pool.iter().enumerate() {
            b.pool.row_mut(i).assign(e);
        }
        for (i, (q, c, neigh)) in rows.into_iter().enumerate() {
            b.queries.row_mut(i).assign(q);
            b.candidates.row_mut(i).assign(c);
            for &j in neigh {
                b.mask[[i, j]] = 0.0;
            }
            if !neigh.is_empty() {
                b.has_neighbors[[i, 0]] = 1.0;
            }
        }
        b
    }
}

impl FfnDiscriminator {
    pub fn init(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("positive std");
        let tensors = shapes(dim)
            .iter()
            .enumerate()
            .map(|(i, &(r, c))| match i {
                B1 | B2 => Matrix::zeros((r, c)),
                _ => Matrix::from_shape_simple_fn((r, c), || normal.sample(&mut rng)),
            })
            .collect();
        FfnDiscriminator { dim, tensors }
    }

    pub fn zeros(dim: usize) -> Self {
        FfnDiscriminator {
            dim,
            tensors: shapes(dim).iter().map(|&s| Matrix::zeros(s)).collect(),
        }
    }

    /// Pre-sigmoid scores, one row per assessment.
    fn logits(&self, tape: &mut Tape<'_>, batch: &Batch) -> Var {
        let hq = tape.input(batch.queries.clone());
        let hc = tape.input(batch.candidates.clone());
        let (w1, b1, w2, b2) = (tape.param(W1), tape.param(B1), tape.param(W2), tape.param(B2));
        // entries of a product of unit vectors are O(1/d); rescale to O(1)
        let d = self.dim as f64;
        let x = tape.mul(hc, hq);
        let x = tape.scale(x, d);
        let h = tape.matmul(x, w1);
        let h = tape.add_row(h, b1);
        let h = tape.tanh(h);
        let f = tape.matmul(h, w2);
        let f = tape.add_row(f, b2);

        let (wa, u) = (tape.param(WA), tape.param(U));
        let pool = tape.input(batch.pool.clone());
        let qa = tape.matmul(hq, wa);
        let lg = tape.matmul_t(qa, pool);
        let lg = tape.scale(lg, 1.0 / (self.dim as f64).sqrt());
        let mask = tape.input(batch.mask.clone());
        let lg = tape.add(lg, mask);
        let att = tape.softmax_rows(lg);
        let pooled = tape.matmul(att, pool);
        let gated = tape.mul(pooled, hq);
        let gated = tape.scale(gated, d);
        let g = tape.matmul(gated, u);
        let has = tape.input(batch.has_neighbors.clone());
        let g = tape.mul(g, has);
        tape.add(f, g)
    }

    /// Score in `(0, 1)` for one candidate.
    pub fn score(&self, h_c: &Embedding, h_q: &Embedding, neighbors: &[Embedding]) -> f64 {
        let idx: Vec<usize> = (0..neighbors.len()).collect();
        let batch = Batch::new(self.dim, neighbors, std::iter::once((h_q, h_c, idx.as_slice())));
        let mut tape = Tape::new(&self.tensors);
        let z = self.logits(&mut tape, &batch);
        let z = tape.scalar(z);
        1.0 / (1.0 + (-z).exp())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(DISC_MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for t in &self.tensors {
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != DISC_MAGIC {
            return Err(Error::Format("not a discriminator file".into()));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let total: usize = shapes(dim).iter().map(|(r, c)| r * c).sum();
        if bytes.len() != 12 + total * 8 {
            return Err(Error::Format(format!("discriminator file has the wrong length for d={dim}")));
        }
        let mut vals = bytes[12..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let tensors = shapes(dim)
            .iter()
            .map(|&(r, c)| Matrix::from_shape_simple_fn((r, c), || vals.next().expect("length checked")))
            .collect();
        Ok(FfnDiscriminator { dim, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

const DISC_MAGIC: &[u8; 8] = b"RADISCR\0";

pub fn discriminate(h_c: &Embedding, h_q: &Embedding, neighborhood: &[Embedding], params: &FfnDiscriminator) -> f64 {
    params.score(h_c, h_q, neighborhood)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscSample {
    pub query: Embedding,
    pub candidate: Embedding,
    /// Indices into [`DiscTrainingSet::pool`].
    pub neighbors: Vec<usize>,
    pub positive: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiscTrainingSet {
    pub pool: Vec<Embedding>,
    pub samples: Vec<DiscSample>,
}

impl DiscTrainingSet {
    /// Positives are gold (query, unit) pairs; negatives are the
    /// `k_negatives` non-gold units closest to each query. Neighborhoods come
    /// from `graph`. Embedding maps are keyed by unit and request id.
    pub fn from_embeddings(
        corpus: &Corpus,
        units: &HashMap<String, Embedding>,
        queries: &HashMap<String, Embedding>,
        graph: &DepGraph,
        k_negatives: usize,
    ) -> Self {
        let ids: Vec<&str> = {
            let mut v: Vec<&str> = units.keys().map(String::as_str).collect();
            v.sort_unstable();
            v
        };
        let pos_of: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let pool: Vec<Embedding> = ids.iter().map(|id| units[*id].clone()).collect();
        let neighbors = |id: &str| -> Vec<usize> {
            graph
                .neighbors(id)
                .into_iter()
                .filter_map(|n| pos_of.get(n).copied())
                .collect()
        };
        let mut gold: HashMap<&str, BTreeSet<&str>> = HashMap::new();
        for p in corpus.pairs() {
            gold.entry(p.query_id.as_str())
                .or_default()
                .extend(p.code_unit_ids.iter().map(String::as_str));
        }
        let mut golds: Vec<(&str, &BTreeSet<&str>)> = gold.iter().map(|(q, g)| (*q, g)).collect();
        golds.sort_unstable_by_key(|(q, _)| *q);

        let mut samples = Vec::new();
        for (qid, gold_ids) in golds {
            let Some(hq) = queries.get(qid) else { continue };
            for g in gold_ids {
                if let Some(hc) = units.get(*g) {
                    samples.push(DiscSample {
                        query: hq.clone(),
                        candidate: hc.clone(),
                        neighbors: neighbors(g),
                        positive: true,
                    });
                }
            }
            let mut others: Vec<(f64, &str)> = ids
                .iter()
                .filter(|id| !gold_ids.contains(*id))
                .map(|id| (cosine(hq, &units[*id]), *id))
                .collect();
            others.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
            for (_, id) in others.into_iter().take(k_negatives) {
                samples.push(DiscSample {
                    query: hq.clone(),
                    candidate: units[id].clone(),
                    neighbors: neighbors(id),
                    positive: false,
                });
            }
        }
        DiscTrainingSet { pool, samples }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DiscTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub k_negatives: usize,
    pub seed: u64,
}

impl Default for DiscTrainConfig {
    fn default() -> Self {
        DiscTrainConfig {
            epochs: 300,
            lr: 1.0,
            k_negatives: 5,
            seed: 42,
        }
    }
}

/// Full-batch gradient descent on class-balanced binary cross-entropy.
/// Returns the parameters and the loss at those parameters.
pub fn fit_discriminator(set: &DiscTrainingSet, cfg: &DiscTrainConfig) -> Result<(FfnDiscriminator, f64)> {
    let dim = set.samples.first().map_or(0, |s| s.query.len());
    fit_discriminator_from(FfnDiscriminator::init(dim, cfg.seed), set, cfg)
}

/// As [`fit_discriminator`], continuing from `init` instead of a fresh draw.
pub fn fit_discriminator_from(
    init: FfnDiscriminator,
    set: &DiscTrainingSet,
    cfg: &DiscTrainConfig,
) -> Result<(FfnDiscriminator, f64)> {
    let n_pos = set.samples.iter().filter(|s| s.positive).count();
    let n_neg = set.samples.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::domain(format!(
            "discriminator training needs both classes, got {n_pos} positive and {n_neg} negative samples"
        )));
    }
    let dim = init.dim;
    if let Some(bad) = set.samples.iter().find(|s| s.query.len() != dim || s.candidate.len() != dim) {
        return Err(Error::domain(format!("sample width {} does not match discriminator width {dim}", bad.query.len())));
    }
    let batch = Batch::new(
        dim,
        &set.pool,
        set.samples.iter().map(|s| (&s.query, &s.candidate, s.neighbors.as_slice())),
    );
    let n = set.samples.len();
    let labels = Matrix::from_shape_fn((n, 1), |(i, _)| if set.samples[i].positive { 1.0 } else { 0.0 });
    let weights = Matrix::from_shape_fn((n, 1), |(i, _)| {
        if set.samples[i].positive {
            0.5 / n_pos as f64
        } else {
            0.5 / n_neg as f64
        }
    });
    let mut disc = init;
    let loss_at = |disc: &FfnDiscriminator, step: Option<f64>| -> (f64, Option<Vec<Matrix>>) {
        let mut tape = Tape::new(&disc.tensors);
        let z = disc.logits(&mut tape, &batch);
        let sp = tape.softplus(z);
        let y = tape.input(labels.clone());
        let yz = tape.mul(y, z);
        let l = tape.sub(sp, yz);
        let w = tape.input(weights.clone());
        let l = tape.mul(l, w);
        let loss = tape.sum(l);
        let value = tape.scalar(loss);
        let updated = step.map(|lr| {
            let grads = tape.backward(loss);
            disc.tensors
                .iter()
                .enumerate()
                .map(|(i, t)| match grads.get(i) {
                    Some(g) => t - &(g * lr),
                    None => t.clone(),
                })
                .collect()
        });
        (value, updated)
    };
    for epoch in 0..cfg.epochs {
        let (loss, updated) = loss_at(&disc, Some(cfg.lr));
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("discriminator loss became {loss} at epoch {epoch}")));
        }
        disc.tensors = updated.expect("step requested");
    }
    let (loss, _) = loss_at(&disc, None);
    if !disc.is_finite() {
        return Err(Error::Numerical("discriminator weights are not finite".into()));
    }
    Ok((disc, loss))
}

/// Encodes the corpus with `model` and fits a discriminator on gold pairs
/// against mined hard negatives.
pub fn train_discriminator(
    corpus: &Corpus,
    model: &Model,
    graph: &DepGraph,
    cfg: &DiscTrainConfig,
) -> Result<(FfnDiscriminator, f64)> {
    let units = corpus
        .units()
        .map(|u| Ok((u.id.clone(), model.embed_code(&u.source)?)))
        .collect::<Result<HashMap<_, _>>>()?;
    let queries = corpus
        .requests()
        .map(|r| Ok((r.id.clone(), model.embed_text(&r.problem_text)?)))
        .collect::<Result<HashMap<_, _>>>()?;
    let set = DiscTrainingSet::from_embeddings(corpus, &units, &queries, graph, cfg.k_negatives);
    fit_discriminator(&set, cfg)
}
