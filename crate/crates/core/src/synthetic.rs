//! Templated repositories and pull requests for tests, examples and the
//! scaled-down experiments. Every function is `<verb>_<noun>`; the linked
//! change request paraphrases the verb and noun.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::adversarial::{DiscSample, DiscTrainingSet};
use crate::corpus::Corpus;
use crate::curation::{curate, diff_snapshots, GateConfig, PullRequest, RepoSnapshot};
use crate::depgraph::{DepGraph, EdgeKind};
use crate::encoder::Embedding;
use crate::error::{Error, Result};
use crate::retrieval::{Granularity, Index};

pub const VERBS: [&str; 12] = [
    "parse",
    "load",
    "compute",
    "validate",
    "render",
    "merge",
    "sort",
    "filter",
    "encode",
    "normalize",
    "export",
    "resolve",
];

pub const NOUNS: [&str; 12] = [
    "header", "config", "matrix", "token", "record", "image", "path", "score", "session",
    "invoice", "schedule", "graph",
];

const QUERY_TEMPLATES: [&str; 5] = [
    "Fix {verb} {noun} when the input is empty",
    "{Verb} {noun} gives the wrong result",
    "Crash while trying to {verb} the {noun}",
    "Make {verb} {noun} handle missing values",
    "Update how we {verb} {noun} data",
];

/// Body of `<verb>_NOUN` after its first line; `{call:v}` expands to a call
/// of `v_NOUN` when that function exists in the same file.
fn body(verb: &str) -> &'static str {
    match verb {
        "parse" => "    fields = {}\n    for part in raw.split(\",\"):\n        if \"=\" in part:\n            key, value = part.split(\"=\", 1)\n            fields[key.strip()] = value.strip()\n    return fields",
        "load" => "    try:\n        handle = open(raw)\n    except OSError:\n        return None\n    text = handle.read()\n    handle.close()\n    return {call:parse}(text)",
        "compute" => "    total = 0.0\n    for value in raw:\n        total += value * weight\n    return total",
        "validate" => "    if not raw:\n        raise ValueError(\"empty NOUN\")\n    for key, value in raw.items():\n        if value is None:\n            raise ValueError(\"missing \" + key)\n    return True",
        "render" => "    lines = []\n    for key in sorted(raw):\n        lines.append(str(key).ljust(20) + str(raw[key]))\n    return \"\\n\".join(line[:width] for line in lines)",
        "merge" => "    merged = dict(raw)\n    for key, value in other.items():\n        if key not in merged:\n            merged[key] = value\n    return merged",
        "sort" => "    return sorted(raw, key=lambda item: item.get(\"NOUN_rank\", 0), reverse=reverse)",
        "filter" => "    kept = []\n    for item in raw:\n        if predicate(item):\n            kept.append(item)\n    return kept",
        "encode" => "    parts = []\n    for key, value in raw.items():\n        parts.append(\"%s=%s\" % (key, value))\n    return \",\".join(parts).encode(\"utf-8\")",
        "normalize" => "    low = min(raw)\n    high = max(raw)\n    if high == low:\n        return [0.0 for _ in raw]\n    return [(v - low) / (high - low) for v in raw]",
        "export" => "    handle = open(target, \"w\")\n    handle.write({call:render}(raw))\n    handle.close()\n    return target",
        "resolve" => "    while raw in registry:\n        raw = registry[raw]\n    return raw",
        _ => unreachable!("unknown verb {verb}"),
    }
}

fn params(verb: &str) -> &'static str {
    match verb {
        "compute" => "raw, weight=1.0",
        "render" => "raw, width=80",
        "merge" => "raw, other",
        "sort" => "raw, reverse=False",
        "filter" => "raw, predicate",
        "export" => "raw, target",
        "resolve" => "raw, registry",
        _ => "raw",
    }
}

const GUARD: &str = "    if raw is None:\n        return None\n";

/// Source of `verb_noun`; `guarded` adds the early return that the
/// synthetic fix introduces.
fn function(verb: &str, noun: &str, present: &[&str], guarded: bool) -> String {
    let mut b = body(verb).replace("NOUN", noun);
    for callee in VERBS {
        let tag = format!("{{call:{callee}}}");
        if b.contains(&tag) {
            let call = if present.contains(&callee) {
                format!("{callee}_{noun}")
            } else {
                "str".to_string()
            };
            b = b.replace(&tag, &call);
        }
    }
    let guard = if guarded { GUARD } else { "" };
    format!("def {verb}_{noun}({}):\n{guard}{b}\n", params(verb))
}

fn file_text(noun: &str, verbs: &[&str], guarded: &dyn Fn(&str) -> bool) -> String {
    verbs
        .iter()
        .map(|v| function(v, noun, verbs, guarded(v)))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn hash(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0]);
    }
    hex::encode(h.finalize())[..40].to_string()
}

pub fn query_text(template: usize, verb: &str, noun: &str) -> String {
    let mut cap = verb.to_string();
    cap[..1].make_ascii_uppercase();
    QUERY_TEMPLATES[template % QUERY_TEMPLATES.len()]
        .replace("{verb}", verb)
        .replace("{Verb}", &cap)
        .replace("{noun}", noun)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticConfig {
    /// Pull requests that survive curation, one per function.
    pub pairs: usize,
    /// Extra pull requests that each fail one gate.
    pub noise: usize,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(pairs: usize, seed: u64) -> Self {
        SyntheticConfig {
            pairs,
            noise: 0,
            seed,
        }
    }
}

/// (verb, noun) combinations chosen for a run, in pull-request order.
pub fn combinations(pairs: usize, seed: u64) -> Result<Vec<(&'static str, &'static str)>> {
    let max = VERBS.len() * NOUNS.len();
    if pairs == 0 || pairs > max {
        return Err(Error::domain(format!(
            "synthetic suite supports 1..={max} pairs, got {pairs}"
        )));
    }
    let mut all: Vec<(&str, &str)> = NOUNS
        .iter()
        .flat_map(|n| VERBS.iter().map(move |v| (*v, *n)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(seed, "synthetic"));
    all.shuffle(&mut rng);
    all.truncate(pairs);
    Ok(all)
}

fn repo_of(noun: &str) -> (&'static str, &'static str) {
    let i = NOUNS.iter().position(|n| *n == noun).expect("known noun");
    if i % 2 == 0 {
        ("synth/alpha", "alpha")
    } else {
        ("synth/beta", "beta")
    }
}

/// Pull requests that each add an early-return guard to one function and
/// reference an issue. Noise requests follow, cycling through an unlinked
/// change, a whitespace-only edit, a comment-only edit and a rename that
/// leaves complexity unchanged.
pub fn pull_requests(cfg: &SyntheticConfig) -> Result<Vec<PullRequest>> {
    let combos = combinations(cfg.pairs, cfg.seed)?;
    let mut by_noun: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (v, n) in &combos {
        by_noun.entry(n).or_default().push(v);
    }
    for verbs in by_noun.values_mut() {
        verbs.sort_by_key(|v| VERBS.iter().position(|x| x == v));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(cfg.seed, "synthetic-queries"));
    let epoch = DateTime::<Utc>::from_timestamp(1_700_000_000, 0).expect("valid timestamp");
    let mut prs = Vec::new();
    let total = cfg.pairs + cfg.noise;
    for i in 0..total {
        let (verb, noun) = combos[i % combos.len()];
        let verbs = &by_noun[noun];
        let (repo, pkg) = repo_of(noun);
        let path = format!("{pkg}/{noun}.py");
        let id = i as u64 + 1;
        let guarded_all = |_: &str| true;
        let after_all = file_text(noun, verbs, &guarded_all);
        let (before_text, after_text, title, body) = if i < cfg.pairs {
            let before = file_text(noun, verbs, &|v| v != verb);
            let title = query_text(rng.random_range(0..QUERY_TEMPLATES.len()), verb, noun);
            (before, after_all, title, format!("Fixes #{}", 1000 + id))
        } else {
            let title = format!("Maintenance {id}");
            let linked = format!("Closes #{}", 1000 + id);
            let fname = format!("def {verb}_{noun}(");
            match (i - cfg.pairs) % 4 {
                0 => (
                    file_text(noun, verbs, &|v| v != verb),
                    after_all,
                    title,
                    "Small cleanup".to_string(),
                ),
                1 => {
                    let edited = after_all.replacen("):\n", "):  \n", 1);
                    (after_all, edited, title, linked)
                }
                2 => {
                    let edited =
                        after_all.replacen(&fname, &format!("# {verb} the {noun}\n{fname}"), 1);
                    (after_all, edited, title, linked)
                }
                _ => {
                    let edited = after_all.replace("raw", "source");
                    (after_all, edited, title, linked)
                }
            }
        };
        let before = RepoSnapshot {
            repo: repo.to_string(),
            commit_hash: hash(&[repo, &id.to_string(), "before"]),
            files: [(path.clone(), before_text)].into(),
        };
        let after = RepoSnapshot {
            repo: repo.to_string(),
            commit_hash: hash(&[repo, &id.to_string(), "after"]),
            files: [(path, after_text)].into(),
        };
        prs.push(PullRequest {
            id,
            title,
            body,
            commit_messages: vec![format!("Guard {verb}_{noun} against None")],
            diff: diff_snapshots(&before, &after),
            before,
            after,
            created_at: epoch + chrono::Duration::hours(id as i64),
            license: Some("MIT".into()),
        });
    }
    Ok(prs)
}

/// Curated corpus with exactly `pairs` aligned pairs.
pub fn corpus(pairs: usize, seed: u64) -> Result<Corpus> {
    let prs = pull_requests(&SyntheticConfig::new(pairs, seed))?;
    let out = curate(&prs, &GateConfig::default())?;
    if out.corpus.pairs().len() != pairs {
        let failed: Vec<String> = out
            .decisions
            .iter()
            .filter(|d| !d.passed)
            .map(|d| format!("{}#{}: {} ({})", d.repo, d.pr_id, d.stage, d.reason))
            .collect();
        return Err(Error::Integrity(format!(
            "synthetic curation kept {} of {pairs} pull requests: {}",
            out.corpus.pairs().len(),
            failed.join("; ")
        )));
    }
    Ok(out.corpus)
}

/// Embedding-space fixture with topic clusters wired together in a
/// dependency graph and one decoy: a unit that sits right next to the query
/// embedding but whose graph neighbors all belong to another topic.
pub struct PlantedIncongruence {
    pub index: Index,
    pub graph: DepGraph,
    pub query: String,
    pub query_embedding: Embedding,
    pub decoy_id: String,
    /// Units of the query's own topic.
    pub congruent_ids: Vec<String>,
    /// Labelled samples for fitting a discriminator; built from fresh draws
    /// of the same topics, never from the fixture's own vectors.
    pub training_set: DiscTrainingSet,
}

pub const PLANTED_DIM: usize = 8;
const PLANTED_TOPICS: usize = 4;
const PLANTED_CLUSTER: usize = 4;

fn noisy(rng: &mut ChaCha8Rng, topic: usize, scale: f64) -> Embedding {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut v = Embedding::from_shape_fn(PLANTED_DIM, |_| scale * normal.sample(rng));
    v[topic] += 1.0;
    let n = v.dot(&v).sqrt();
    v / n
}

fn near(rng: &mut ChaCha8Rng, base: &Embedding, scale: f64) -> Embedding {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let v = base + &Embedding::from_shape_fn(PLANTED_DIM, |_| scale * normal.sample(rng));
    let n = v.dot(&v).sqrt();
    v / n
}

pub fn planted_incongruence(seed: u64) -> Result<PlantedIncongruence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graph = DepGraph::default();
    let mut entries = Vec::new();
    for t in 0..PLANTED_TOPICS {
        let ids: Vec<String> = (0..PLANTED_CLUSTER)
            .map(|i| format!("topic{t}/unit{i}"))
            .collect();
        for id in &ids {
            graph.add_node(id, &format!("topic{t}.py"), id);
            entries.push((id.clone(), noisy(&mut rng, t, 0.3)));
        }
        for w in ids.windows(2) {
            graph.add_edge(&w[0], &w[1], EdgeKind::Call)?;
        }
    }
    let query_embedding = noisy(&mut rng, 0, 0.3);
    let decoy_id = "topic1/decoy".to_string();
    graph.add_node(&decoy_id, "topic1.py", &decoy_id);
    for i in 0..2 {
        graph.add_edge(&decoy_id, &format!("topic1/unit{i}"), EdgeKind::Call)?;
    }
    entries.push((decoy_id.clone(), near(&mut rng, &query_embedding, 0.02)));
    let index = Index::new(Granularity::Function, "planted", entries)?;

    let mut set = DiscTrainingSet::default();
    let mut clusters = Vec::new();
    for t in 0..PLANTED_TOPICS {
        let start = set.pool.len();
        for _ in 0..PLANTED_CLUSTER {
            set.pool.push(noisy(&mut rng, t, 0.3));
        }
        clusters.push((start..start + PLANTED_CLUSTER).collect::<Vec<usize>>());
    }
    for round in 0..12 {
        for t in 0..PLANTED_TOPICS {
            let q = noisy(&mut rng, t, 0.3);
            let other = (t + 1 + round % (PLANTED_TOPICS - 1)) % PLANTED_TOPICS;
            let own = clusters[t][..2].to_vec();
            let foreign = clusters[other][..2].to_vec();
            let mut push = |candidate: Embedding, neighbors: &[usize], positive: bool| {
                set.samples.push(DiscSample {
                    query: q.clone(),
                    candidate,
                    neighbors: neighbors.to_vec(),
                    positive,
                });
            };
            push(noisy(&mut rng, t, 0.3), &own, true);
            push(near(&mut rng, &q, 0.02), &own, true);
            push(near(&mut rng, &q, 0.02), &foreign, false);
            push(noisy(&mut rng, other, 0.3), &foreign, false);
        }
    }
    Ok(PlantedIncongruence {
        index,
        graph,
        query: "planted query for topic 0".into(),
        query_embedding,
        decoy_id,
        congruent_ids: (0..PLANTED_CLUSTER)
            .map(|i| format!("topic0/unit{i}"))
            .collect(),
        training_set: set,
    })
}
