use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::gates::touched_trees;
use super::PullRequest;
use crate::corpus::{AlignedPair, ChangeRequest, CodeUnit, Corpus, DifficultyTier, ProvenanceMeta, Span};
use crate::depgraph::DepGraph;
use crate::error::{Error, Result};
use crate::syntax::{cyclomatic_complexity, definition_at_span, extract_definitions, signature_of, SyntaxTree};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefState {
    pub qualified_name: String,
    pub cc: u32,
    pub signature: String,
    pub span: Span,
}

/// A definition touched by a PR, paired across the two snapshots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModifiedDef {
    pub path: String,
    /// After-state name when present, otherwise the before-state name.
    pub qualified_name: String,
    pub before: Option<DefState>,
    pub after: Option<DefState>,
}

fn state_of(tree: &SyntaxTree, qualified_name: &str) -> Option<DefState> {
    let d = tree.definitions().into_iter().find(|d| d.qualified_name == qualified_name)?;
    Some(DefState {
        qualified_name: d.qualified_name.clone(),
        cc: cyclomatic_complexity(d.node).ok()?,
        signature: signature_of(tree, d.node),
        span: d.node.span,
    })
}

fn enclosing_name(tree: &SyntaxTree, line: usize) -> Option<String> {
    definition_at_span(tree, line, line).map(|d| d.qualified_name)
}

/// Definitions enclosing a changed line on either side, matched by
/// qualified name. Leftovers in the same file are paired in source order,
/// which treats a rename as a modification of one definition.
pub fn modified_definitions(pr: &PullRequest) -> Result<Vec<ModifiedDef>> {
    let trees = touched_trees(pr).ok_or_else(|| Error::domain(format!("PR {}: touched file does not parse", pr.id)))?;
    let mut touched: BTreeMap<&str, (BTreeSet<String>, BTreeSet<String>)> = BTreeMap::new();
    for h in &pr.diff {
        let (before, after) = &trees[&h.path];
        let entry = touched.entry(h.path.as_str()).or_default();
        for (n, text) in h.old_lines().zip(&h.removed_lines) {
            if !text.trim().is_empty() {
                entry.0.extend(enclosing_name(before, n));
            }
        }
        for (n, text) in h.new_lines().zip(&h.added_lines) {
            if !text.trim().is_empty() {
                entry.1.extend(enclosing_name(after, n));
            }
        }
    }
    let mut out = Vec::new();
    for (path, (b_names, a_names)) in touched {
        let (before, after) = &trees[path];
        let names: BTreeSet<&String> = b_names.iter().chain(&a_names).collect();
        let mut only_before = Vec::new();
        let mut only_after = Vec::new();
        for name in names {
            match (state_of(before, name), state_of(after, name)) {
                (Some(b), Some(a)) => out.push(ModifiedDef {
                    path: path.to_string(),
                    qualified_name: name.clone(),
                    before: Some(b),
                    after: Some(a),
                }),
                (Some(b), None) => only_before.push(b),
                (None, Some(a)) => only_after.push(a),
                (None, None) => {}
            }
        }
        only_before.sort_by_key(|s| s.span.start);
        only_after.sort_by_key(|s| s.span.start);
        let mut ib = only_before.into_iter();
        let mut ia = only_after.into_iter();
        loop {
            let (b, a) = (ib.next(), ia.next());
            if b.is_none() && a.is_none() {
                break;
            }
            let name = a.as_ref().or(b.as_ref()).map(|s| s.qualified_name.clone()).unwrap_or_default();
            out.push(ModifiedDef {
                path: path.to_string(),
                qualified_name: name,
                before: b,
                after: a,
            });
        }
    }
    Ok(out)
}

/// Output of aligning one PR: its change request, the after-state units it
/// touched and one pair per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub request: ChangeRequest,
    pub units: Vec<CodeUnit>,
    pub pairs: Vec<AlignedPair>,
}

/// Maps each non-blank added line to the smallest enclosing definition of
/// the after-state. Hunks that only delete lines map through the
/// before-state definition's name when the after-state still has it.
pub fn align_diff_to_ast(pr: &PullRequest, issue_id: Option<u64>) -> Result<Alignment> {
    let trees = touched_trees(pr).ok_or_else(|| Error::domain(format!("PR {}: touched file does not parse", pr.id)))?;
    let provenance = ProvenanceMeta {
        repo: pr.after.repo.clone(),
        commit_hash: pr.after.commit_hash.clone(),
    };
    let request = ChangeRequest {
        id: format!("{}#{}", pr.repo(), pr.id),
        repo: pr.repo().to_string(),
        pr_id: pr.id,
        issue_id,
        problem_text: pr.problem_text(),
        created_at: pr.created_at,
    };
    // (path, span start, qualified name) of every hit, in diff order
    let mut hits: Vec<(String, usize, String)> = Vec::new();
    for h in &pr.diff {
        let (before, after) = &trees[&h.path];
        if h.new_range.1 > 0 {
            for (n, text) in h.new_lines().zip(&h.added_lines) {
                if text.trim().is_empty() {
                    continue;
                }
                if let Some(d) = definition_at_span(after, n, n) {
                    hits.push((h.path.clone(), d.node.span.start, d.qualified_name));
                }
            }
        } else {
            for (n, text) in h.old_lines().zip(&h.removed_lines) {
                if text.trim().is_empty() {
                    continue;
                }
                let Some(name) = enclosing_name(before, n) else {
                    continue;
                };
                if let Some(d) = after.definitions().into_iter().find(|d| d.qualified_name == name) {
                    hits.push((h.path.clone(), d.node.span.start, d.qualified_name));
                }
            }
        }
    }
    let mut seen = BTreeSet::new();
    let mut units = Vec::new();
    for (path, start, name) in hits {
        if !seen.insert((path.clone(), start, name.clone())) {
            continue;
        }
        let (_, after) = &trees[&path];
        let unit = extract_definitions(after, &path, &provenance)
            .into_iter()
            .find(|u| u.span.start == start && u.qualified_name == name);
        units.extend(unit);
    }
    let pairs = units
        .iter()
        .map(|u| AlignedPair {
            query_id: request.id.clone(),
            code_unit_ids: vec![u.id.clone()],
            commit_hash: provenance.commit_hash.clone(),
            tier: DifficultyTier::Challenge,
        })
        .collect();
    Ok(Alignment { request, units, pairs })
}

const STOPWORDS: [&str; 40] = [
    "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del", "elif", "else",
    "except", "false", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "none",
    "nonlocal", "not", "or", "pass", "raise", "return", "true", "try", "while", "with", "yield", "self",
    "cls", "the", "a", "to",
];

/// Lowercased identifiers of a text, minus keywords and filler words.
pub(crate) fn identifier_tokens(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut cur = String::new();
    let mut chars = text.chars().peekable();
    loop {
        let c = chars.next();
        match c {
            Some(c) if c.is_alphanumeric() || c == '_' => cur.push(c),
            _ => {
                if cur.chars().next().is_some_and(|f| !f.is_ascii_digit()) {
                    let t = cur.to_lowercase();
                    if !STOPWORDS.contains(&t.as_str()) && t.chars().any(|c| c != '_') {
                        out.insert(t);
                    }
                }
                cur.clear();
                if c.is_none() {
                    break;
                }
            }
        }
    }
    out
}

const FULL_MAX_LINES: usize = 15;
const EXPERT_CROSS_EDGES: usize = 4;
const EXPERT_MODULES: usize = 2;

/// Expert when the pair's units reach across modules, Full for a single
/// short unit sharing an identifier with the query, Challenge otherwise.
pub fn stratify(pair: &AlignedPair, corpus: &Corpus, dep_graph: &DepGraph) -> DifficultyTier {
    let units: Vec<&CodeUnit> = corpus.pair_units(pair).collect();
    let modules: BTreeSet<String> = units.iter().map(|u| u.module()).collect();
    let ids: BTreeSet<&str> = units.iter().map(|u| u.id.as_str()).collect();
    let cross = dep_graph.cross_module_edges(&ids).count();
    if cross >= EXPERT_CROSS_EDGES || modules.len() >= EXPERT_MODULES {
        return DifficultyTier::Expert;
    }
    if let [unit] = units.as_slice() {
        if unit.line_count() < FULL_MAX_LINES {
            let query = corpus.request(&pair.query_id).map(|r| identifier_tokens(&r.problem_text));
            let code = identifier_tokens(&unit.source);
            if query.is_some_and(|q| !q.is_disjoint(&code)) {
                return DifficultyTier::Full;
            }
        }
    }
    DifficultyTier::Challenge
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::{pr, AFTER};
    use super::super::DiffHunk;
    use super::*;
    use crate::corpus::fixtures;
    use crate::depgraph::EdgeKind;

    #[test]
    fn hunk_inside_function_yields_one_pair() {
        let before = "def f(x):\n    a = 1\n    b = 2\n    c = 3\n    return a\n";
        let after = "def f(x):\n    a = 1\n    b = 20\n    c = 3\n    return a\n";
        let p = pr(1, "Fixes #1", &[("m.py", before)], &[("m.py", after)]);
        assert_eq!(p.diff[0].new_range, (3, 1));
        let a = align_diff_to_ast(&p, Some(1)).unwrap();
        assert_eq!(a.pairs.len(), 1);
        assert_eq!(a.units[0].qualified_name, "f");
        assert_eq!(a.units[0].span, Span::new(1, 5));
        assert_eq!(a.request.id, "org/repo#1");
        assert_eq!(a.pairs[0].commit_hash, AFTER);
    }

    #[test]
    fn top_level_hunk_yields_nothing() {
        let p = pr(1, "", &[("m.py", "X = 1\ndef f():\n    pass\n")], &[("m.py", "X = 2\ndef f():\n    pass\n")]);
        assert!(align_diff_to_ast(&p, None).unwrap().pairs.is_empty());
    }

    #[test]
    fn hunk_spanning_two_siblings() {
        let before = "def f():\n    return 1\ndef g():\n    return 2\n";
        let after = "def f():\n    return 10\ndef g():\n    return 20\n";
        let mut p = pr(1, "", &[("m.py", before)], &[("m.py", after)]);
        // one hunk covering lines 2..=4 of both sides
        p.diff = vec![DiffHunk {
            path: "m.py".into(),
            old_range: (2, 3),
            new_range: (2, 3),
            removed_lines: vec!["    return 1".into(), "def g():".into(), "    return 2".into()],
            added_lines: vec!["    return 10".into(), "def g():".into(), "    return 20".into()],
        }];
        let a = align_diff_to_ast(&p, None).unwrap();
        let names: Vec<&str> = a.units.iter().map(|u| u.qualified_name.as_str()).collect();
        assert_eq!(names, ["f", "g"]);
        assert_eq!(a.pairs.len(), 2);
    }

    #[test]
    fn deleted_only_hunk_maps_by_name() {
        let before = "def f():\n    a = 1\n    b = 2\n    return a\n";
        let after = "def f():\n    a = 1\n    return a\n";
        let p = pr(1, "", &[("m.py", before)], &[("m.py", after)]);
        assert_eq!(p.diff[0].new_range.1, 0);
        let a = align_diff_to_ast(&p, None).unwrap();
        assert_eq!(a.units.len(), 1);
        assert_eq!(a.units[0].qualified_name, "f");
        let gone = pr(1, "", &[("m.py", "def f():\n    pass\ndef g():\n    pass\n")], &[("m.py", "def f():\n    pass\n")]);
        assert!(align_diff_to_ast(&gone, None).unwrap().units.is_empty());
    }

    #[test]
    fn modified_definitions_pairs_renames() {
        let p = pr(1, "", &[("m.py", "def f(x):\n    return x\n")], &[("m.py", "def g(x):\n    return x\n")]);
        let m = modified_definitions(&p).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].before.as_ref().unwrap().qualified_name, "f");
        assert_eq!(m[0].after.as_ref().unwrap().qualified_name, "g");
    }

    fn corpus_with(query: &str, units: Vec<CodeUnit>) -> (Corpus, AlignedPair) {
        let mut c = Corpus::new();
        c.insert_request(fixtures::request("q", "org/repo", query)).unwrap();
        let ids: Vec<&str> = units.iter().map(|u| u.id.as_str()).collect();
        let pair = fixtures::pair("q", &ids);
        for u in units.clone() {
            c.insert_unit(u).unwrap();
        }
        c.push_pair(pair.clone());
        (c, pair)
    }

    fn unit_at(id: &str, path: &str, source: &str) -> CodeUnit {
        let mut u = fixtures::unit(id, "org/repo", source);
        u.path = path.into();
        u.qualified_name = id.into();
        u
    }

    #[test]
    fn stratify_examples() {
        let ten: String = std::iter::once("def parse_header(x):".to_string())
            .chain((0..9).map(|i| format!("    v{i} = x")))
            .collect::<Vec<_>>()
            .join("\n");
        let (c, p) = corpus_with("Fix parse_header on empty input", vec![unit_at("parse_header", "m.py", &ten)]);
        assert_eq!(stratify(&p, &c, &DepGraph::default()), DifficultyTier::Full);

        let forty: String = std::iter::once("def compute(x):".to_string())
            .chain((0..39).map(|i| format!("    v{i} = x")))
            .collect::<Vec<_>>()
            .join("\n");
        let (c, p) = corpus_with("Something is wrong with totals", vec![unit_at("compute", "m.py", &forty)]);
        assert_eq!(stratify(&p, &c, &DepGraph::default()), DifficultyTier::Challenge);

        let (c, p) = corpus_with("Fix parse_header", vec![unit_at("parse_header", "m.py", &ten)]);
        let mut g = DepGraph::default();
        g.add_node("parse_header", "m.py", "parse_header");
        for i in 0..4 {
            let id = format!("other{i}");
            g.add_node(&id, &format!("pkg/o{i}.py"), &id);
            g.add_edge("parse_header", &id, EdgeKind::Call).unwrap();
        }
        assert_eq!(stratify(&p, &c, &g), DifficultyTier::Expert);

        let (c, p) = corpus_with("q", vec![unit_at("a", "a.py", "def a(): pass"), unit_at("b", "b.py", "def b(): pass")]);
        assert_eq!(stratify(&p, &c, &DepGraph::default()), DifficultyTier::Expert);
    }

    #[test]
    fn identifier_tokens_filter() {
        let t = identifier_tokens("Fix the parse_header() when x is None, 3rd try");
        assert!(t.contains("parse_header") && t.contains("fix") && t.contains("x"));
        assert!(!t.contains("the") && !t.contains("none") && !t.contains("3rd") && !t.contains("is"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn program(n: usize, body: usize) -> String {
            (0..n)
                .map(|i| {
                    let mut s = format!("def f{i}(x):\n");
                    for j in 0..body {
                        s.push_str(&format!("    v{j} = x\n"));
                    }
                    s.push_str("    return x\n\n");
                    s
                })
                .collect()
        }

        proptest! {
            #[test]
            fn aligned_units_intersect_new_ranges(n in 1usize..5, body in 1usize..5, edits in proptest::collection::vec((0usize..40, 0u8..3), 1..5)) {
                let before = program(n, body);
                let mut lines: Vec<String> = before.lines().map(String::from).collect();
                for (at, op) in edits {
                    let at = at % lines.len();
                    match op {
                        0 => lines.insert(at, "Z = 0".into()),
                        1 if lines[at].starts_with("    v") => lines[at].push_str(" + 1"),
                        _ if lines[at].starts_with("    v") => lines.insert(at + 1, "    w = 1".into()),
                        _ => {}
                    }
                }
                let after: String = lines.iter().map(|l| format!("{l}\n")).collect();
                prop_assume!(crate::syntax::parse_source(&after, crate::syntax::Language::Python).is_ok());
                let p = pr(1, "", &[("m.py", &before)], &[("m.py", &after)]);
                let a = align_diff_to_ast(&p, None).unwrap();
                let ids: BTreeSet<_> = a.pairs.iter().map(|x| (&x.query_id, &x.code_unit_ids)).collect();
                prop_assert_eq!(ids.len(), a.pairs.len());
                for u in &a.units {
                    let hit = p.diff.iter().filter(|h| h.new_range.1 > 0).any(|h| {
                        u.span.intersects(Span::new(h.new_range.0, h.new_range.0 + h.new_range.1 - 1))
                    });
                    prop_assert!(hit, "{} not under any hunk", u.qualified_name);
                }
            }
        }
    }
}
