//! Ranking metrics, tiered evaluation and the ablation runner.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversarial::{adversarial_search, AsmConfig, Discriminator, FfnDiscriminator, SearchSpace};
use crate::corpus::{ChangeRequest, Corpus, DifficultyTier};
use crate::depgraph::graph_for_units;
use crate::encoder::{Model, SharingMode};
use crate::error::{Error, Result};
use crate::retrieval::{build_index, check_fresh, top_k_with_injection, Granularity, Index, RetrievalConfig};
use crate::training::{train, TrainConfig};

/// Relevant candidate ids per query id.
pub type GoldSet = BTreeMap<String, BTreeSet<String>>;

/// Gold sets from the aligned pairs, mapped to `granularity` candidate ids.
pub fn gold_from_corpus(corpus: &Corpus, granularity: Granularity) -> GoldSet {
    let mut gold = GoldSet::new();
    for p in corpus.pairs() {
        let entry = gold.entry(p.query_id.clone()).or_default();
        for u in corpus.pair_units(p) {
            entry.insert(granularity.group_of(u));
        }
    }
    gold.retain(|_, g| !g.is_empty());
    gold
}

fn top<S: AsRef<str>>(ranked: &[S], n: usize) -> impl Iterator<Item = &str> {
    ranked.iter().take(n).map(AsRef::as_ref)
}

/// Precision, recall and F1 over the first `cutoff` ranked ids. Precision
/// divides by `min(cutoff, ranked.len())`.
pub fn precision_recall_f1<S: AsRef<str>>(ranked: &[S], gold: &BTreeSet<String>, cutoff: usize) -> Result<(f64, f64, f64)> {
    if gold.is_empty() {
        return Err(Error::domain("gold set is empty"));
    }
    if cutoff == 0 {
        return Err(Error::domain("cutoff must be at least 1"));
    }
    let considered = cutoff.min(ranked.len());
    if considered == 0 {
        return Ok((0.0, 0.0, 0.0));
    }
    let mut seen = HashSet::new();
    let hits = top(ranked, cutoff).filter(|id| gold.contains(*id) && seen.insert(*id)).count() as f64;
    let p = hits / considered as f64;
    let r = hits / gold.len() as f64;
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    Ok((p, r, f1))
}

/// Reciprocal rank of the first relevant id, 0 when none is retrieved.
pub fn mrr<S: AsRef<str>>(ranked: &[S], gold: &BTreeSet<String>) -> f64 {
    ranked
        .iter()
        .position(|id| gold.contains(id.as_ref()))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

pub fn top_n_accuracy<S: AsRef<str>>(ranked: &[S], gold: &BTreeSet<String>, n: usize) -> f64 {
    if top(ranked, n).any(|id| gold.contains(id)) {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub queries: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mrr: f64,
    pub top_n: f64,
}

impl Metrics {
    fn mean(rows: &[Metrics]) -> Metrics {
        let n = rows.len();
        if n == 0 {
            return Metrics::default();
        }
        let avg = |f: fn(&Metrics) -> f64| rows.iter().map(f).sum::<f64>() / n as f64;
        Metrics {
            queries: n,
            precision: avg(|m| m.precision),
            recall: avg(|m| m.recall),
            f1: avg(|m| m.f1),
            mrr: avg(|m| m.mrr),
            top_n: avg(|m| m.top_n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cutoff: usize,
    pub top_n: usize,
    pub overall: Metrics,
    pub per_tier: BTreeMap<DifficultyTier, Metrics>,
    /// Wall-clock throughput; left out of the serialized report so that
    /// reports are reproducible byte for byte.
    #[serde(skip)]
    pub queries_per_minute: Option<f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Macro-averaged metrics over every query in `gold`, overall and per tier.
/// A query's tier is that of its first aligned pair.
pub fn evaluate<F>(corpus: &Corpus, gold: &GoldSet, retrieve: F, cutoff: usize, n: usize) -> Result<EvalReport>
where
    F: Fn(&ChangeRequest) -> Result<Vec<String>> + Sync,
{
    if cutoff == 0 || n == 0 {
        return Err(Error::domain("cutoff and n must be at least 1"));
    }
    let mut tiers: BTreeMap<&str, DifficultyTier> = BTreeMap::new();
    for p in corpus.pairs() {
        tiers.entry(p.query_id.as_str()).or_insert(p.tier);
    }
    let queries: Vec<(&String, &BTreeSet<String>, &ChangeRequest)> = gold
        .iter()
        .map(|(q, g)| {
            let req = corpus
                .request(q)
                .ok_or_else(|| Error::Integrity(format!("gold query {q} is not in the corpus")))?;
            Ok((q, g, req))
        })
        .collect::<Result<_>>()?;
    let started = Instant::now();
    let rows = queries
        .par_iter()
        .map(|(_, g, req)| {
            let ranked = retrieve(req)?;
            let (precision, recall, f1) = precision_recall_f1(&ranked, g, cutoff)?;
            Ok(Metrics {
                queries: 1,
                precision,
                recall,
                f1,
                mrr: mrr(&ranked, g),
                top_n: top_n_accuracy(&ranked, g, n),
            })
        })
        .collect::<Result<Vec<Metrics>>>()?;
    let elapsed = started.elapsed().as_secs_f64();
    let mut by_tier: BTreeMap<DifficultyTier, Vec<Metrics>> = BTreeMap::new();
    for ((q, _, _), m) in queries.iter().zip(&rows) {
        if let Some(t) = tiers.get(q.as_str()) {
            by_tier.entry(*t).or_default().push(*m);
        }
    }
    Ok(EvalReport {
        cutoff,
        top_n: n,
        overall: Metrics::mean(&rows),
        per_tier: by_tier.into_iter().map(|(t, ms)| (t, Metrics::mean(&ms))).collect(),
        queries_per_minute: (!rows.is_empty()).then(|| rows.len() as f64 * 60.0 / elapsed.max(1e-9)),
    })
}

/// Everything needed to answer queries with a trained model.
pub struct Retriever<'a> {
    pub model: &'a Model,
    pub index: &'a Index,
    pub config: RetrievalConfig,
    /// Discriminator, dependency graph and loop settings for adversarial search.
    pub adversarial: Option<(&'a dyn Discriminator, &'a crate::depgraph::DepGraph, AsmConfig)>,
    pub corpus: Option<&'a Corpus>,
}

impl Retriever<'_> {
    pub fn ranked_ids(&self, query: &str) -> Result<Vec<String>> {
        check_fresh(self.index, self.model)?;
        let h_q = self.model.embed_text(query)?;
        let ranked = match &self.adversarial {
            None => top_k_with_injection(&h_q, self.index, &self.config, &[])?,
            Some((disc, graph, acfg)) => {
                let space = SearchSpace {
                    index: self.index,
                    graph,
                    corpus: self.corpus,
                };
                adversarial_search(query, &h_q, &space, *disc, &self.config, acfg)?.ranked
            }
        };
        Ok(ranked.into_iter().map(|e| e.id).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub mode: SharingMode,
    pub adversarial: bool,
    pub lambda_align: f64,
    pub lambda_adv: f64,
}

impl Variant {
    pub const FULL: Variant = Variant {
        mode: SharingMode::PartialSharing,
        adversarial: true,
        lambda_align: 1.0,
        lambda_adv: 1.0,
    };

    pub fn is_full(&self) -> bool {
        *self == Variant::FULL
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/align={}/adv={}",
            self.mode,
            if self.adversarial { "asm" } else { "plain" },
            self.lambda_align,
            self.lambda_adv
        )
    }
}

/// Axes of an ablation grid; the variant list is their cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationAxes {
    pub modes: Vec<SharingMode>,
    pub adversarial: Vec<bool>,
    pub lambda_align: Vec<f64>,
    pub lambda_adv: Vec<f64>,
}

impl Default for AblationAxes {
    fn default() -> Self {
        AblationAxes {
            modes: vec![SharingMode::PartialSharing],
            adversarial: vec![true],
            lambda_align: vec![1.0],
            lambda_adv: vec![1.0],
        }
    }
}

impl AblationAxes {
    pub fn variants(&self) -> Vec<Variant> {
        let mut out = Vec::new();
        for &mode in &self.modes {
            for &adversarial in &self.adversarial {
                for &lambda_align in &self.lambda_align {
                    for &lambda_adv in &self.lambda_adv {
                        out.push(Variant {
                            mode,
                            adversarial,
                            lambda_align,
                            lambda_adv,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    /// Seed-averaged metrics.
    pub mean: Metrics,
    pub top_n_by_seed: Vec<f64>,
    /// Difference in top-n accuracy from the full configuration, in
    /// percentage points. `None` when the full configuration was not run.
    pub delta_top_n_pp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "variant", "mode", "adversarial", "lambda_align", "lambda_adv", "precision", "recall", "f1", "mrr", "top_n",
            "top_n_by_seed", "delta_top_n_pp",
        ])
        .expect("in-memory write");
        for r in &self.rows {
            let seeds: Vec<String> = r.top_n_by_seed.iter().map(|v| format!("{v:.4}")).collect();
            w.write_record([
                r.variant.to_string(),
                r.variant.mode.to_string(),
                r.variant.adversarial.to_string(),
                r.variant.lambda_align.to_string(),
                r.variant.lambda_adv.to_string(),
                format!("{:.4}", r.mean.precision),
                format!("{:.4}", r.mean.recall),
                format!("{:.4}", r.mean.f1),
                format!("{:.4}", r.mean.mrr),
                format!("{:.4}", r.mean.top_n),
                seeds.join(";"),
                r.delta_top_n_pp.map_or(String::new(), |d| format!("{d:.2}")),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 fields")
    }
}

/// Train, index and evaluate one variant with one seed.
pub fn run_variant(
    corpus: &Corpus,
    variant: &Variant,
    base: &TrainConfig,
    seed: u64,
    rcfg: &RetrievalConfig,
    acfg: &AsmConfig,
    cutoff: usize,
    n: usize,
) -> Result<EvalReport> {
    let cfg = TrainConfig {
        mode: variant.mode,
        lambda_align: variant.lambda_align,
        lambda_adv: if variant.adversarial { variant.lambda_adv } else { 0.0 },
        seed,
        ..*base
    };
    let trained = train(corpus, &cfg)?;
    let index = build_index(corpus, &trained.model, Granularity::Function)?;
    let graph = graph_for_units(corpus.units());
    let disc: Option<FfnDiscriminator> = if variant.adversarial {
        match trained.discriminator {
            Some(d) => Some(d),
            None => Some(
                crate::adversarial::train_discriminator(
                    corpus,
                    &trained.model,
                    &graph,
                    &crate::adversarial::DiscTrainConfig {
                        seed: crate::derive_seed(seed, "discriminator"),
                        ..Default::default()
                    },
                )?
                .0,
            ),
        }
    } else {
        None
    };
    let retriever = Retriever {
        model: &trained.model,
        index: &index,
        config: *rcfg,
        adversarial: disc.as_ref().map(|d| (d as &dyn Discriminator, &graph, *acfg)),
        corpus: Some(corpus),
    };
    let gold = gold_from_corpus(corpus, Granularity::Function);
    evaluate(corpus, &gold, |r| retriever.ranked_ids(&r.problem_text), cutoff, n)
}

/// Runs every variant under every seed on the same corpus.
pub fn ablate(
    corpus: &Corpus,
    variants: &[Variant],
    seeds: &[u64],
    base: &TrainConfig,
    rcfg: &RetrievalConfig,
    acfg: &AsmConfig,
    cutoff: usize,
    n: usize,
) -> Result<AblationTable> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(Error::domain("ablation needs at least one variant and one seed"));
    }
    let mut rows = Vec::with_capacity(variants.len());
    for v in variants {
        let reports = seeds
            .iter()
            .map(|&s| run_variant(corpus, v, base, s, rcfg, acfg, cutoff, n))
            .collect::<Result<Vec<_>>>()?;
        let overall: Vec<Metrics> = reports.iter().map(|r| r.overall).collect();
        rows.push(AblationRow {
            variant: *v,
            mean: Metrics::mean(&overall),
            top_n_by_seed: overall.iter().map(|m| m.top_n).collect(),
            delta_top_n_pp: None,
        });
    }
    if let Some(full) = rows.iter().find(|r| r.variant.is_full()).map(|r| r.mean.top_n) {
        for r in &mut rows {
            r.delta_top_n_pp = Some((r.mean.top_n - full) * 100.0);
        }
    }
    Ok(AblationTable {
        seeds: seeds.to_vec(),
        rows,
    })
}
