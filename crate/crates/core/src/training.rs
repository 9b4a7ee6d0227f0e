//! Dual-encoder training: edge-aware triplet loss, batch-aware hard negative
//! mining, an adversarial term fed by discriminator rejections, plain SGD,
//! and finite-difference gradient checking.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversarial::{
    fit_discriminator_from, partition_scores, DiscTrainConfig, DiscTrainingSet, FfnDiscriminator,
};
use crate::autograd::{Tape, Var};
use crate::corpus::Corpus;
use crate::depgraph::graph_for_units;
use crate::encoder::{init_params, EncoderDims, EncoderParams, Embedding, Modality, Model, SharingMode, Vocabulary};
use crate::encoder::vocab::{BOS, EOS};
use crate::error::{Error, Result};
use crate::retrieval::{cosine, top_k_with_injection, Granularity, Index, RetrievalConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub k_negatives: usize,
    pub alpha0: f64,
    pub beta: f64,
    pub lambda_align: f64,
    pub lambda_adv: f64,
    pub freeze_token_embeddings: bool,
    pub seed: u64,
    pub mode: SharingMode,
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    /// Discriminator steps per adversarial round; rounds warm-start from the
    /// previous discriminator.
    pub disc_steps: usize,
    pub disc_lr: f64,
    /// Acceptance threshold used to pick rejected candidates.
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            epochs: 50,
            batch_size: 8,
            k_negatives: 5,
            alpha0: 0.2,
            beta: 0.5,
            lambda_align: 1.0,
            lambda_adv: 1.0,
            freeze_token_embeddings: false,
            seed: 42,
            mode: SharingMode::PartialSharing,
            d: 64,
            layers: 2,
            heads: 4,
            disc_steps: 30,
            disc_lr: 1.0,
            epsilon: 0.82,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::domain(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be a non-negative number, got {}", self.lr));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be at least 1".into());
        }
        if self.k_negatives == 0 {
            return bad("k_negatives must be at least 1".into());
        }
        if self.alpha0 < 0.0 {
            return bad(format!("alpha0 must be non-negative, got {}", self.alpha0));
        }
        if self.lambda_align < 0.0 || self.lambda_adv < 0.0 {
            return bad("loss weights must be non-negative".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        EncoderDims::new(self.d, self.layers, self.heads, 8).validate()
    }

    fn adversarial(&self) -> bool {
        self.lambda_adv > 0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `alpha0 + beta * sigmoid(h_q · h_neg)`.
pub fn edge_aware_margin(h_q: &Embedding, h_neg: &Embedding, alpha0: f64, beta: f64) -> f64 {
    alpha0 + beta * sigmoid(h_q.dot(h_neg))
}

fn sq_dist(a: &Embedding, b: &Embedding) -> f64 {
    let d = a - b;
    d.dot(&d)
}

/// Hinge arguments `|q - pos|² - |q - neg|² + margin(q, neg)`, one per negative.
pub fn hinge_arguments(h_q: &Embedding, h_pos: &Embedding, h_negs: &[Embedding], alpha0: f64, beta: f64) -> Vec<f64> {
    let dp = sq_dist(h_q, h_pos);
    h_negs
        .iter()
        .map(|n| dp - sq_dist(h_q, n) + edge_aware_margin(h_q, n, alpha0, beta))
        .collect()
}

/// Mean over negatives of the hinge term.
pub fn hinge_loss(h_q: &Embedding, h_pos: &Embedding, h_negs: &[Embedding], alpha0: f64, beta: f64) -> Result<f64> {
    if h_negs.is_empty() {
        return Err(Error::domain("triplet has no negatives"));
    }
    let args = hinge_arguments(h_q, h_pos, h_negs, alpha0, beta);
    Ok(args.iter().map(|a| a.max(0.0)).sum::<f64>() / args.len() as f64)
}

/// A token sequence with the id of the record it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sequence {
    pub id: String,
    pub tokens: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub query: Sequence,
    pub positive: Sequence,
    pub negatives: Vec<Sequence>,
}

impl Triplet {
    pub fn validate(&self) -> Result<()> {
        if self.negatives.is_empty() {
            return Err(Error::domain(format!("triplet for {} has no negatives", self.query.id)));
        }
        if self.negatives.iter().any(|n| n.id == self.positive.id) {
            return Err(Error::domain(format!("positive {} listed among its negatives", self.positive.id)));
        }
        Ok(())
    }
}

pub fn triplet_loss(t: &Triplet, params: &EncoderParams, alpha0: f64, beta: f64) -> Result<f64> {
    t.validate()?;
    let q = params.encode(Modality::Text, &t.query.tokens)?;
    let p = params.encode(Modality::Code, &t.positive.tokens)?;
    let negs = t
        .negatives
        .iter()
        .map(|n| params.encode(Modality::Code, &n.tokens))
        .collect::<Result<Vec<_>>>()?;
    hinge_loss(&q, &p, &negs, alpha0, beta)
}

/// Records the mean hinge over `negs` on the tape; all inputs are `1 x d`.
fn hinge_on_tape(tape: &mut Tape<'_>, q: Var, pos: Var, negs: &[Var], alpha0: f64, beta: f64) -> Var {
    let dpos = tape.sub(q, pos);
    let dpos2 = tape.mul(dpos, dpos);
    let dp = tape.sum(dpos2);
    let terms: Vec<Var> = negs
        .iter()
        .map(|&n| {
            let dn = tape.sub(q, n);
            let dn2 = tape.mul(dn, dn);
            let dn = tape.sum(dn2);
            let qn = tape.mul(q, n);
            let dot = tape.sum(qn);
            let s = tape.sigmoid(dot);
            let s = tape.scale(s, beta);
            let margin = tape.add_scalar(s, alpha0);
            let gap = tape.sub(dp, dn);
            let arg = tape.add(gap, margin);
            tape.relu(arg)
        })
        .collect();
    let total = tape.add_all(&terms).expect("at least one negative");
    tape.scale(total, 1.0 / negs.len() as f64)
}

/// A mining candidate: id, embedding and token set.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub id: &'a str,
    pub embedding: &'a Embedding,
    pub tokens: &'a BTreeSet<usize>,
}

pub fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

/// The `k` candidates not in `gold_ids` that maximize
/// `0.5 * cos(h_q, c) + 0.5 * jaccard(tokens(c), tokens(gold))`; ties go
/// to the smaller id. Returns fewer when the pool runs out.
pub fn mine_hard_negatives<'a>(
    h_q: &Embedding,
    gold_tokens: &BTreeSet<usize>,
    gold_ids: &BTreeSet<&str>,
    pool: &[Candidate<'a>],
    k: usize,
) -> Vec<&'a str> {
    let mut scored: Vec<(f64, &str)> = pool
        .iter()
        .filter(|c| !gold_ids.contains(c.id))
        .map(|c| (0.5 * cosine(h_q, c.embedding) + 0.5 * jaccard(c.tokens, gold_tokens), c.id))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.dedup_by(|a, b| a.1 == b.1);
    scored.into_iter().take(k).map(|(_, id)| id).collect()
}

/// Distinct content tokens of a sequence.
pub fn token_set(tokens: &[usize]) -> BTreeSet<usize> {
    tokens.iter().copied().filter(|&t| t != BOS && t != EOS).collect()
}

pub fn build_vocabulary(corpus: &Corpus, mode: SharingMode) -> Vocabulary {
    let text_modality = if mode == SharingMode::SingleTower {
        Modality::Code
    } else {
        Modality::Text
    };
    Vocabulary::build(
        corpus
            .units()
            .map(|u| (u.source.as_str(), Modality::Code))
            .chain(corpus.requests().map(|r| (r.problem_text.as_str(), text_modality))),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub model: Model,
    /// Mean anchor loss per epoch.
    pub loss_trace: Vec<f64>,
    /// Discriminator fitted alongside the encoder when the adversarial term is on.
    pub discriminator: Option<FfnDiscriminator>,
}

pub fn loss_trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("epoch,mean_loss\n");
    for (i, l) in trace.iter().enumerate() {
        out.push_str(&format!("{},{l:.9}\n", i + 1));
    }
    out
}

struct Prepared {
    examples: Vec<(String, String)>,
    gold: BTreeMap<String, BTreeSet<String>>,
    query_tokens: HashMap<String, Vec<usize>>,
    unit_tokens: HashMap<String, Vec<usize>>,
    unit_sets: HashMap<String, BTreeSet<usize>>,
}

fn prepare(corpus: &Corpus, model: &Model) -> Result<Prepared> {
    let mut gold: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for p in corpus.pairs() {
        gold.entry(p.query_id.clone()).or_default().extend(p.code_unit_ids.iter().cloned());
    }
    let examples: Vec<(String, String)> = gold
        .iter()
        .flat_map(|(q, us)| us.iter().map(move |u| (q.clone(), u.clone())))
        .collect();
    let mut query_tokens = HashMap::new();
    for q in gold.keys() {
        let r = corpus
            .request(q)
            .ok_or_else(|| Error::Integrity(format!("pair names unknown request {q}")))?;
        query_tokens.insert(q.clone(), model.tokenize(&r.problem_text, Modality::Text));
    }
    let mut unit_tokens = HashMap::new();
    let mut unit_sets = HashMap::new();
    for u in corpus.units() {
        let t = model.tokenize(&u.source, Modality::Code);
        unit_sets.insert(u.id.clone(), token_set(&t));
        unit_tokens.insert(u.id.clone(), t);
    }
    Ok(Prepared {
        examples,
        gold,
        query_tokens,
        unit_tokens,
        unit_sets,
    })
}

/// Trains a dual encoder on the aligned pairs of `corpus`.
pub fn train(corpus: &Corpus, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    if corpus.pairs().len() < config.batch_size {
        return Err(Error::domain(format!(
            "corpus has {} pairs, fewer than the batch size {}",
            corpus.pairs().len(),
            config.batch_size
        )));
    }
    let vocab = build_vocabulary(corpus, config.mode);
    let dims = EncoderDims::new(config.d, config.layers, config.heads, vocab.len());
    let params = init_params(dims, config.mode, crate::derive_seed(config.seed, "encoder-init"))?;
    let mut model = Model { params, vocab };
    let prep = prepare(corpus, &model)?;
    let frozen: BTreeSet<usize> = if config.freeze_token_embeddings {
        model.params.token_tables().iter().copied().collect()
    } else {
        BTreeSet::new()
    };
    let graph = if config.adversarial() {
        Some(graph_for_units(corpus.units()))
    } else {
        None
    };
    let disc_seed = crate::derive_seed(config.seed, "discriminator");
    let mut disc = FfnDiscriminator::init(config.d, disc_seed);
    let mut hard_adv: HashMap<String, Vec<String>> = HashMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(config.seed, "train-shuffle"));
    let mut order = prep.examples.clone();
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        let mut anchors = 0usize;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let step = train_batch(&model.params, batch, &prep, &hard_adv, config)?;
            let Some((loss_sum, count, grads)) = step else { continue };
            if !loss_sum.is_finite() {
                return Err(Error::Numerical(format!(
                    "loss became {loss_sum} at epoch {} batch {b} (lr {}, {} anchors)",
                    epoch + 1,
                    config.lr,
                    count
                )));
            }
            epoch_sum += loss_sum;
            anchors += count;
            if config.lr > 0.0 {
                for (i, g) in grads.0.iter().enumerate() {
                    if let Some(g) = g {
                        if !frozen.contains(&i) {
                            model.params.tensors[i].scaled_add(-config.lr, g);
                        }
                    }
                }
            }
        }
        trace.push(if anchors == 0 { 0.0 } else { epoch_sum / anchors as f64 });
        if let Some(graph) = &graph {
            let last = epoch + 1 == config.epochs;
            let (fitted, hard) = adversarial_round(&model, corpus, &prep, graph, disc, config, disc_seed)?;
            disc = fitted;
            if !last {
                hard_adv = hard;
            }
        }
    }
    Ok(TrainOutput {
        model,
        loss_trace: trace,
        discriminator: graph.map(|_| disc),
    })
}

type BatchStep = Option<(f64, usize, crate::autograd::Grads)>;

/// Loss and gradients for one batch. `None` when no anchor has a negative.
fn train_batch<'p>(
    params: &EncoderParams,
    batch: &[(String, String)],
    prep: &'p Prepared,
    hard_adv: &HashMap<String, Vec<String>>,
    config: &TrainConfig,
) -> Result<BatchStep> {
    let mut tape = Tape::new(&params.tensors);
    let mut unit_vars: BTreeMap<&'p str, Var> = BTreeMap::new();
    let mut query_vars: BTreeMap<&str, Var> = BTreeMap::new();
    let encode_unit = |tape: &mut Tape<'_>, id: &str, vars: &mut BTreeMap<&'p str, Var>| -> Result<Var> {
        if let Some(&v) = vars.get(id) {
            return Ok(v);
        }
        let (key, tokens) = prep
            .unit_tokens
            .get_key_value(id)
            .ok_or_else(|| Error::Integrity(format!("unknown unit {id}")))?;
        let v = params.forward(tape, Modality::Code, tokens)?;
        vars.insert(key.as_str(), v);
        Ok(v)
    };
    for (q, u) in batch {
        encode_unit(&mut tape, u, &mut unit_vars)?;
        if !query_vars.contains_key(q.as_str()) {
            let v = params.forward(&mut tape, Modality::Text, &prep.query_tokens[q])?;
            query_vars.insert(q.as_str(), v);
        }
    }
    let batch_units: Vec<&str> = unit_vars.keys().copied().collect();
    let values: HashMap<&str, Embedding> = batch_units
        .iter()
        .map(|id| (*id, tape.value(unit_vars[id]).row(0).to_owned()))
        .collect();
    let pool: Vec<Candidate<'_>> = batch_units
        .iter()
        .map(|id| Candidate {
            id,
            embedding: &values[id],
            tokens: &prep.unit_sets[*id],
        })
        .collect();

    let mut terms = Vec::new();
    for (q, u) in batch {
        let gold: BTreeSet<&str> = prep.gold[q].iter().map(String::as_str).collect();
        let qv = query_vars[q.as_str()];
        let hq = tape.value(qv).row(0).to_owned();
        let negs = mine_hard_negatives(&hq, &prep.unit_sets[u], &gold, &pool, config.k_negatives);
        let adv: Vec<&String> = hard_adv
            .get(q)
            .map(|v| v.iter().filter(|id| !gold.contains(id.as_str())).take(config.k_negatives).collect())
            .unwrap_or_default();
        if negs.is_empty() && adv.is_empty() {
            continue;
        }
        let pos = unit_vars[u.as_str()];
        let mut parts = Vec::new();
        if !negs.is_empty() && config.lambda_align > 0.0 {
            let nv: Vec<Var> = negs.iter().map(|id| unit_vars[id]).collect();
            let l = hinge_on_tape(&mut tape, qv, pos, &nv, config.alpha0, config.beta);
            parts.push(tape.scale(l, config.lambda_align));
        }
        if !adv.is_empty() && config.lambda_adv > 0.0 {
            let mut nv = Vec::with_capacity(adv.len());
            for id in adv {
                nv.push(encode_unit(&mut tape, id, &mut unit_vars)?);
            }
            let l = hinge_on_tape(&mut tape, qv, pos, &nv, config.alpha0, config.beta);
            parts.push(tape.scale(l, config.lambda_adv));
        }
        if let Some(t) = tape.add_all(&parts) {
            terms.push(t);
        }
    }
    let Some(total) = tape.add_all(&terms) else {
        return Ok(None);
    };
    let loss_sum = tape.scalar(total);
    let mean = tape.scale(total, 1.0 / terms.len() as f64);
    let grads = tape.backward(mean);
    Ok(Some((loss_sum, terms.len(), grads)))
}

/// Fits the discriminator on the current embeddings and collects, per
/// query, the non-gold top candidates it rejects.
fn adversarial_round(
    model: &Model,
    corpus: &Corpus,
    prep: &Prepared,
    graph: &crate::depgraph::DepGraph,
    disc: FfnDiscriminator,
    config: &TrainConfig,
    seed: u64,
) -> Result<(FfnDiscriminator, HashMap<String, Vec<String>>)> {
    let units: HashMap<String, Embedding> = prep
        .unit_tokens
        .iter()
        .map(|(id, t)| Ok((id.clone(), model.params.encode(Modality::Code, t)?)))
        .collect::<Result<_>>()?;
    let queries: HashMap<String, Embedding> = prep
        .query_tokens
        .iter()
        .map(|(id, t)| Ok((id.clone(), model.params.encode(Modality::Text, t)?)))
        .collect::<Result<_>>()?;
    let set = DiscTrainingSet::from_embeddings(corpus, &units, &queries, graph, config.k_negatives);
    let dcfg = DiscTrainConfig {
        epochs: config.disc_steps,
        lr: config.disc_lr,
        k_negatives: config.k_negatives,
        seed,
    };
    let (disc, _) = fit_discriminator_from(disc, &set, &dcfg)?;

    let mut ids: Vec<&String> = units.keys().collect();
    ids.sort();
    let index = Index::new(Granularity::Function, "", ids.iter().map(|id| ((*id).clone(), units[*id].clone())))?;
    let rcfg = RetrievalConfig::default();
    let mut hard = HashMap::new();
    for (q, gold) in &prep.gold {
        let hq = &queries[q];
        let top = top_k_with_injection(hq, &index, &rcfg, &[])?;
        let verdict = partition_scores(
            top.iter().filter(|e| !gold.contains(&e.id)).map(|e| {
                let neigh: Vec<Embedding> = graph
                    .neighbors(&e.id)
                    .into_iter()
                    .filter_map(|n| units.get(n).cloned())
                    .collect();
                (e.id.clone(), disc.score(&units[&e.id], hq, &neigh))
            }),
            config.epsilon,
        );
        hard.insert(q.clone(), verdict.rejected.into_iter().map(|(id, _)| id).collect());
    }
    Ok((disc, hard))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateCheck {
    pub tensor: usize,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst: Option<CoordinateCheck>,
    pub coordinates_checked: usize,
    /// Triplets with a hinge argument within 1e-6 of zero.
    pub triplets_excluded: usize,
    /// Coordinates whose perturbation flips a hinge on or off.
    pub coordinates_skipped: usize,
}

/// Relative errors are measured against `max(|analytic|, |numeric|, 1e-6)`.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

fn all_arguments(params: &EncoderParams, triplets: &[Triplet], alpha0: f64, beta: f64) -> Result<Vec<Vec<f64>>> {
    triplets
        .iter()
        .map(|t| {
            let q = params.encode(Modality::Text, &t.query.tokens)?;
            let p = params.encode(Modality::Code, &t.positive.tokens)?;
            let negs = t
                .negatives
                .iter()
                .map(|n| params.encode(Modality::Code, &n.tokens))
                .collect::<Result<Vec<_>>>()?;
            Ok(hinge_arguments(&q, &p, &negs, alpha0, beta))
        })
        .collect()
}

fn mean_loss(args: &[Vec<f64>]) -> f64 {
    args.iter()
        .map(|a| a.iter().map(|x| x.max(0.0)).sum::<f64>() / a.len() as f64)
        .sum::<f64>()
        / args.len() as f64
}

/// Compares tape gradients of the mean triplet loss with central finite
/// differences on `per_tensor` sampled coordinates of every tensor.
pub fn grad_check(
    params: &EncoderParams,
    triplets: &[Triplet],
    eps: f64,
    alpha0: f64,
    beta: f64,
    per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(eps > 0.0) {
        return Err(Error::domain(format!("eps must be positive, got {eps}")));
    }
    for t in triplets {
        t.validate()?;
    }
    let base = all_arguments(params, triplets, alpha0, beta)?;
    let kept: Vec<Triplet> = triplets
        .iter()
        .zip(&base)
        .filter(|(_, a)| a.iter().all(|x| x.abs() >= 1e-6))
        .map(|(t, _)| t.clone())
        .collect();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        coordinates_checked: 0,
        triplets_excluded: triplets.len() - kept.len(),
        coordinates_skipped: 0,
    };
    if kept.is_empty() {
        return Ok(report);
    }
    let base: Vec<Vec<f64>> = all_arguments(params, &kept, alpha0, beta)?;
    let active = |args: &[Vec<f64>]| -> Vec<bool> { args.iter().flatten().map(|x| *x > 0.0).collect() };
    let base_active = active(&base);

    let mut tape = Tape::new(&params.tensors);
    let mut terms = Vec::new();
    for t in &kept {
        let q = params.forward(&mut tape, Modality::Text, &t.query.tokens)?;
        let p = params.forward(&mut tape, Modality::Code, &t.positive.tokens)?;
        let negs = t
            .negatives
            .iter()
            .map(|n| params.forward(&mut tape, Modality::Code, &n.tokens))
            .collect::<Result<Vec<_>>>()?;
        terms.push(hinge_on_tape(&mut tape, q, p, &negs, alpha0, beta));
    }
    let total = tape.add_all(&terms).expect("non-empty");
    let loss = tape.scale(total, 1.0 / terms.len() as f64);
    let grads = tape.backward(loss);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    for ti in 0..params.tensors.len() {
        let (rows, cols) = params.tensors[ti].dim();
        for _ in 0..per_tensor.min(rows * cols) {
            let (r, c) = (rng.random_range(0..rows), rng.random_range(0..cols));
            let orig = params.tensors[ti][[r, c]];
            probe.tensors[ti][[r, c]] = orig + eps;
            let plus = all_arguments(&probe, &kept, alpha0, beta)?;
            probe.tensors[ti][[r, c]] = orig - eps;
            let minus = all_arguments(&probe, &kept, alpha0, beta)?;
            probe.tensors[ti][[r, c]] = orig;
            if active(&plus) != base_active || active(&minus) != base_active {
                report.coordinates_skipped += 1;
                continue;
            }
            let numeric = (mean_loss(&plus) - mean_loss(&minus)) / (2.0 * eps);
            let analytic = grads.get(ti).map_or(0.0, |g| g[[r, c]]);
            let rel_err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            report.coordinates_checked += 1;
            if report.worst.is_none() || rel_err > report.max_rel_err {
                report.max_rel_err = rel_err;
                report.worst = Some(CoordinateCheck {
                    tensor: ti,
                    row: r,
                    col: c,
                    analytic,
                    numeric,
                    rel_err,
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests;
