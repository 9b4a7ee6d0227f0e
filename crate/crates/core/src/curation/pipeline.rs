use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    align_diff_to_ast, complexity_gate, license_gate, link_pr_issue, stratify, triviality_gate, Alignment,
    GateConfig, PullRequest,
};
use crate::corpus::{AlignedPair, CodeUnit, Corpus, DifficultyTier};
use crate::depgraph::{build_graph, DepGraph};
use crate::error::Result;

/// Per-PR outcome of the pipeline, in processing order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrDecision {
    pub repo: String,
    pub pr_id: u64,
    pub passed: bool,
    /// Gate or step that decided the outcome.
    pub stage: String,
    pub reason: String,
    pub units: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurationOutput {
    pub corpus: Corpus,
    pub decisions: Vec<PrDecision>,
}

enum Outcome {
    Rejected(&'static str, String),
    Accepted(Alignment, DepGraph),
}

fn process(pr: &PullRequest, config: &GateConfig) -> Outcome {
    let license = license_gate(pr, config);
    if !license.passed {
        return Outcome::Rejected("license", license.reason);
    }
    let Some(issue) = link_pr_issue(pr, config) else {
        return Outcome::Rejected("linkage", "no linked issue".into());
    };
    let trivial = triviality_gate(pr);
    if !trivial.passed {
        return Outcome::Rejected("triviality", trivial.reason);
    }
    let complexity = complexity_gate(pr, config.complexity_threshold);
    if !complexity.passed {
        return Outcome::Rejected("complexity", complexity.reason);
    }
    match align_diff_to_ast(pr, Some(issue)) {
        Ok(a) if a.units.is_empty() => Outcome::Rejected("alignment", "no enclosing definitions".into()),
        Ok(a) => Outcome::Accepted(a, build_graph(&pr.after)),
        Err(e) => Outcome::Rejected("alignment", e.to_string()),
    }
}

/// Runs every PR through the gates and alignment, then stratifies the
/// surviving pairs. PRs are processed in parallel on the current rayon pool
/// and merged in (repo, pr id) order.
pub fn curate(prs: &[PullRequest], config: &GateConfig) -> Result<CurationOutput> {
    config.validate()?;
    let mut order: Vec<&PullRequest> = prs.iter().collect();
    order.sort_by(|a, b| (a.repo(), a.id).cmp(&(b.repo(), b.id)));
    let outcomes: Vec<Outcome> = order.par_iter().map(|pr| process(pr, config)).collect();

    let mut corpus = Corpus::new();
    let mut decisions = Vec::with_capacity(order.len());
    for (pr, outcome) in order.into_iter().zip(outcomes) {
        let mut decision = PrDecision {
            repo: pr.repo().to_string(),
            pr_id: pr.id,
            passed: false,
            stage: String::new(),
            reason: String::new(),
            units: 0,
        };
        match outcome {
            Outcome::Rejected(stage, reason) => {
                decision.stage = stage.into();
                decision.reason = reason;
            }
            Outcome::Accepted(alignment, graph) => {
                let query_id = alignment.request.id.clone();
                if let Err(e) = corpus.insert_request(alignment.request) {
                    decision.stage = "merge".into();
                    decision.reason = e.to_string();
                    decisions.push(decision);
                    continue;
                }
                let mut pair = AlignedPair {
                    query_id,
                    code_unit_ids: alignment.units.iter().map(|u| u.id.clone()).collect(),
                    commit_hash: pr.after.commit_hash.clone(),
                    tier: DifficultyTier::Challenge,
                };
                decision.units = alignment.units.len();
                for u in alignment.units {
                    corpus.upsert_unit(u);
                }
                pair.tier = stratify(&pair, &corpus, &graph);
                corpus.push_pair(pair);
                decision.passed = true;
                decision.stage = "aligned".into();
                decision.reason = "ok".into();
            }
        }
        decisions.push(decision);
    }
    corpus.check_integrity()?;
    Ok(CurationOutput { corpus, decisions })
}

pub const EXCERPT_MAX_LINES: usize = 15;

/// A unit whose source is cut to at most `max_lines` lines.
pub fn excerpt(unit: &CodeUnit, max_lines: usize) -> CodeUnit {
    let mut u = unit.clone();
    u.source = unit.source.split('\n').take(max_lines).collect::<Vec<_>>().join("\n");
    u
}

/// Copy of the corpus for redistribution, with every unit cut to an excerpt.
pub fn export_excerpts(corpus: &Corpus, max_lines: usize) -> Corpus {
    let mut out = Corpus::new();
    for r in corpus.requests() {
        out.insert_request(r.clone()).expect("ids are unique in the source corpus");
    }
    for u in corpus.units() {
        out.upsert_unit(excerpt(u, max_lines));
    }
    for p in corpus.pairs() {
        out.push_pair(p.clone());
    }
    out
}
