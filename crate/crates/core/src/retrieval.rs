//! Embedding index, temperature-scaled softmax scoring and top-k candidate
//! generation with re-injection of previously rejected ids.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CodeUnit, Corpus};
use crate::encoder::{Embedding, Model};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Function,
    File,
    Module,
    Repository,
}

impl Granularity {
    pub const ALL: [Granularity; 4] = [
        Granularity::Function,
        Granularity::File,
        Granularity::Module,
        Granularity::Repository,
    ];

    /// Candidate id a unit belongs to at this granularity. File and module
    /// ids carry the repository so that equal paths in different
    /// repositories stay apart.
    pub fn group_of(&self, unit: &CodeUnit) -> String {
        match self {
            Granularity::Function => unit.id.clone(),
            Granularity::File => format!("{}:{}", unit.repo, unit.path),
            Granularity::Module => format!("{}:{}", unit.repo, unit.module()),
            Granularity::Repository => unit.repo.clone(),
        }
    }

    fn code(&self) -> u8 {
        *self as u8
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Function => "function",
            Granularity::File => "file",
            Granularity::Module => "module",
            Granularity::Repository => "repository",
        })
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "function" => Ok(Granularity::Function),
            "file" => Ok(Granularity::File),
            "module" => Ok(Granularity::Module),
            "repository" | "repo" => Ok(Granularity::Repository),
            other => Err(Error::domain(format!("unknown granularity {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub id: String,
    pub embedding: Embedding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    pub granularity: Granularity,
    pub dim: usize,
    /// Digest of the model that produced the embeddings.
    pub params_digest: String,
    entries: Vec<IndexEntry>,
    positions: HashMap<String, usize>,
}

fn normalized(v: Embedding) -> Embedding {
    let n = v.dot(&v).sqrt();
    if n > 0.0 {
        v / n
    } else {
        v
    }
}

impl Index {
    /// Builds an index from `(candidate id, embedding)` pairs. Embeddings are
    /// normalized; duplicate ids are rejected.
    pub fn new(
        granularity: Granularity,
        params_digest: impl Into<String>,
        entries: impl IntoIterator<Item = (String, Embedding)>,
    ) -> Result<Self> {
        let mut out = Index {
            granularity,
            dim: 0,
            params_digest: params_digest.into(),
            entries: Vec::new(),
            positions: HashMap::new(),
        };
        for (id, e) in entries {
            if out.entries.is_empty() {
                out.dim = e.len();
            } else if e.len() != out.dim {
                return Err(Error::domain(format!("embedding for {id} has width {}, expected {}", e.len(), out.dim)));
            }
            if out.positions.insert(id.clone(), out.entries.len()).is_some() {
                return Err(Error::Integrity(format!("duplicate index id {id}")));
            }
            out.entries.push(IndexEntry {
                id,
                embedding: normalized(e),
            });
        }
        Ok(out)
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Embedding> {
        self.positions.get(id).map(|&i| &self.entries[i].embedding)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.positions.get(id).copied()
    }
}

/// Aggregates unit embeddings to `granularity`: one entry per unit at
/// function level, otherwise the renormalized mean of member embeddings.
pub fn aggregate(
    granularity: Granularity,
    params_digest: &str,
    units: &[(&CodeUnit, Embedding)],
) -> Result<Index> {
    let mut groups: BTreeMap<String, Embedding> = BTreeMap::new();
    let mut order = Vec::new();
    for (unit, e) in units {
        let key = granularity.group_of(unit);
        match groups.get_mut(&key) {
            Some(acc) => *acc += e,
            None => {
                order.push(key.clone());
                groups.insert(key, e.clone());
            }
        }
    }
    if granularity != Granularity::Function {
        order.sort();
    }
    Index::new(
        granularity,
        params_digest,
        order.into_iter().map(|k| {
            let e = groups.remove(&k).expect("key recorded");
            (k, e)
        }),
    )
}

/// Encodes every unit of the corpus and aggregates to `granularity`.
/// Units are encoded in parallel on the current rayon pool.
pub fn build_index(corpus: &Corpus, model: &Model, granularity: Granularity) -> Result<Index> {
    let units: Vec<&CodeUnit> = corpus.units().collect();
    let embedded = units
        .par_iter()
        .map(|u| model.embed_code(&u.source).map(|e| (*u, e)))
        .collect::<Result<Vec<_>>>()?;
    aggregate(granularity, &model.digest(), &embedded)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub tau: f64,
    pub k: usize,
    pub gamma: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            tau: 10.0,
            k: 10,
            gamma: 0.3,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::domain(format!("tau must be positive, got {}", self.tau)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::domain(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if self.k == 0 {
            return Err(Error::domain("k must be at least 1"));
        }
        Ok(())
    }

    /// Slots reserved for re-injected ids.
    pub fn reserved_slots(&self) -> usize {
        (self.gamma * self.k as f64).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub id: String,
    /// Softmax probability over the whole index.
    pub score: f64,
    pub cosine: f64,
    /// Taken from the previous iteration's rejected ids.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub injected: bool,
}

pub type RankedList = Vec<RankedEntry>;

pub fn cosine(a: &Embedding, b: &Embedding) -> f64 {
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        a.dot(b) / (na * nb)
    }
}

/// Cosine of `q` against every entry, with optional per-id replacements.
pub(crate) fn cosines(q: &Embedding, index: &Index, overlay: &HashMap<String, Embedding>) -> Vec<f64> {
    index
        .entries
        .iter()
        .map(|e| cosine(q, overlay.get(&e.id).unwrap_or(&e.embedding)))
        .collect()
}

fn softmax(cos: &[f64], tau: f64) -> Vec<f64> {
    let max = cos.iter().fold(f64::NEG_INFINITY, |m, &c| m.max(c));
    let exps: Vec<f64> = cos.iter().map(|&c| (tau * (c - max)).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax of `tau`-scaled cosines over the whole index, aligned with
/// [`Index::entries`].
pub fn score_distribution(q: &Embedding, index: &Index, tau: f64) -> Result<Vec<f64>> {
    if index.is_empty() {
        return Err(Error::domain("cannot score against an empty index"));
    }
    Ok(softmax(&cosines(q, index, &HashMap::new()), tau))
}

fn by_score(a: &RankedEntry, b: &RankedEntry) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

pub(crate) fn top_k_over(
    cos: &[f64],
    index: &Index,
    config: &RetrievalConfig,
    hard_prev: &[String],
) -> RankedList {
    let probs = softmax(cos, config.tau);
    let entry = |i: usize, injected: bool| RankedEntry {
        id: index.entries[i].id.clone(),
        score: probs[i],
        cosine: cos[i],
        injected,
    };
    let k = config.k.min(index.len());
    let mut seen = HashSet::new();
    let mut injected: RankedList = hard_prev
        .iter()
        .filter_map(|id| index.position(id))
        .filter(|&i| seen.insert(i))
        .map(|i| entry(i, true))
        .collect();
    injected.sort_by(by_score);
    injected.truncate(config.reserved_slots().min(k));
    let taken: HashSet<&str> = injected.iter().map(|e| e.id.as_str()).collect();
    let mut fresh: RankedList = (0..index.len())
        .filter(|&i| !taken.contains(index.entries[i].id.as_str()))
        .map(|i| entry(i, false))
        .collect();
    fresh.sort_by(by_score);
    fresh.truncate(k - injected.len());
    let mut out = injected;
    out.extend(fresh);
    out.sort_by(by_score);
    out
}

/// The top `k` candidates by probability, where up to `floor(gamma * k)`
/// slots are first given to ids from `hard_prev` (highest probability
/// first).
pub fn top_k_with_injection(
    q: &Embedding,
    index: &Index,
    config: &RetrievalConfig,
    hard_prev: &[String],
) -> Result<RankedList> {
    config.validate()?;
    if index.is_empty() {
        return Err(Error::domain("cannot retrieve from an empty index"));
    }
    Ok(top_k_over(&cosines(q, index, &HashMap::new()), index, config, hard_prev))
}

/// Encodes the query and ranks the index. The index must have been built
/// with the same model.
pub fn retrieve(query_text: &str, index: &Index, model: &Model, config: &RetrievalConfig) -> Result<RankedList> {
    check_fresh(index, model)?;
    let q = model.embed_text(query_text)?;
    top_k_with_injection(&q, index, config, &[])
}

pub fn check_fresh(index: &Index, model: &Model) -> Result<()> {
    if index.is_empty() {
        return Err(Error::Stale("index is empty".into()));
    }
    let digest = model.digest();
    if index.params_digest != digest {
        return Err(Error::Stale(format!(
            "index was built with parameters {} but the loaded parameters are {}",
            &index.params_digest[..index.params_digest.len().min(12)],
            &digest[..12]
        )));
    }
    Ok(())
}

const INDEX_MAGIC: &[u8; 8] = b"RAINDEX\0";
const INDEX_VERSION: u32 = 1;

pub fn index_to_bytes(index: &Index) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(INDEX_MAGIC);
    out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
    out.push(index.granularity.code());
    out.extend_from_slice(&(index.dim as u32).to_le_bytes());
    out.extend_from_slice(&(index.params_digest.len() as u32).to_le_bytes());
    out.extend_from_slice(index.params_digest.as_bytes());
    out.extend_from_slice(&(index.entries.len() as u32).to_le_bytes());
    for e in &index.entries {
        out.extend_from_slice(&(e.id.len() as u32).to_le_bytes());
        out.extend_from_slice(e.id.as_bytes());
        for v in e.embedding.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn index_from_bytes(bytes: &[u8]) -> Result<Index> {
    let mut at = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = at + n;
        if end > bytes.len() {
            return Err(Error::Format(format!("index file truncated at byte {at}")));
        }
        let s = &bytes[at..end];
        at = end;
        Ok(s)
    };
    if take(8)? != INDEX_MAGIC {
        return Err(Error::Format("not an index file".into()));
    }
    let u32_of = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize;
    let version = u32_of(take(4)?);
    if version != INDEX_VERSION as usize {
        return Err(Error::Format(format!("unsupported index version {version}")));
    }
    let granularity = *Granularity::ALL
        .get(take(1)?[0] as usize)
        .ok_or_else(|| Error::Format("bad granularity code".into()))?;
    let dim = u32_of(take(4)?);
    let dlen = u32_of(take(4)?);
    let digest = String::from_utf8(take(dlen)?.to_vec()).map_err(|e| Error::Format(e.to_string()))?;
    let n = u32_of(take(4)?);
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let len = u32_of(take(4)?);
        let id = String::from_utf8(take(len)?.to_vec()).map_err(|e| Error::Format(e.to_string()))?;
        let mut v = Vec::with_capacity(dim);
        for _ in 0..dim {
            v.push(f64::from_le_bytes(take(8)?.try_into().expect("8 bytes")));
        }
        entries.push((id, Embedding::from(v)));
    }
    if at != bytes.len() {
        return Err(Error::Format("trailing bytes after index entries".into()));
    }
    let mut index = Index::new(granularity, digest, entries)?;
    index.dim = dim;
    Ok(index)
}

pub fn save_index(index: &Index, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, index_to_bytes(index)).map_err(|e| Error::io(path, e))
}

pub fn load_index(path: impl AsRef<Path>) -> Result<Index> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    index_from_bytes(&bytes)
}
