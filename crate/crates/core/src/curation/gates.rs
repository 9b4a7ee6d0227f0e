use std::collections::BTreeMap;

use regex::Regex;

use super::{modified_definitions, FilterDecision, GateConfig, PullRequest};
use crate::syntax::{parse_source, tokenize, Language, LineClass, SyntaxTree};

/// Issue number from the first linkage keyword match, searching the body
/// and then each commit message. Invalid patterns are ignored; callers
/// validate the config up front.
pub fn link_pr_issue(pr: &PullRequest, config: &GateConfig) -> Option<u64> {
    let patterns: Vec<Regex> = config
        .linkage_patterns
        .iter()
        .filter_map(|p| Regex::new(p).ok())
        .collect();
    std::iter::once(&pr.body)
        .chain(pr.commit_messages.iter())
        .find_map(|text| {
            patterns
                .iter()
                .filter_map(|re| {
                    let caps = re.captures(text)?;
                    let start = caps.get(0)?.start();
                    let id = caps
                        .iter()
                        .skip(1)
                        .flatten()
                        .filter_map(|m| m.as_str().parse::<u64>().ok())
                        .last()?;
                    Some((start, id))
                })
                .min()
                .map(|(_, id)| id)
        })
}

/// Passes when no allowlist is configured, when the PR declares no license,
/// or when the declared license is on the list.
pub fn license_gate(pr: &PullRequest, config: &GateConfig) -> FilterDecision {
    match &pr.license {
        Some(l) if !config.license_allowlist.is_empty() && !config.license_allowlist.contains(l) => {
            FilterDecision::fail(format!("license {l} not allowed"))
        }
        _ => FilterDecision::pass(),
    }
}

/// Parses every touched file on both sides. Missing files count as empty.
pub(super) fn touched_trees(pr: &PullRequest) -> Option<BTreeMap<String, (SyntaxTree, SyntaxTree)>> {
    let mut out = BTreeMap::new();
    for h in &pr.diff {
        if out.contains_key(&h.path) {
            continue;
        }
        let get = |snap: &super::RepoSnapshot| snap.files.get(&h.path).map_or("", String::as_str).to_string();
        let before = parse_source(&get(&pr.before), Language::Python).ok()?;
        let after = parse_source(&get(&pr.after), Language::Python).ok()?;
        out.insert(h.path.clone(), (before, after));
    }
    Some(out)
}

fn squash(lines: &[String]) -> Vec<String> {
    lines
        .iter()
        .map(|l| l.split_whitespace().collect::<String>())
        .filter(|l| !l.is_empty())
        .collect()
}

/// Both sides lex to the same token texts, so only comments changed.
fn same_code(removed: &[String], added: &[String]) -> bool {
    let texts = |lines: &[String]| {
        tokenize(&lines.join("\n")).map(|ts| ts.into_iter().map(|t| t.text).collect::<Vec<_>>())
    };
    matches!((texts(removed), texts(added)), (Ok(a), Ok(b)) if a == b)
}

pub fn triviality_gate(pr: &PullRequest) -> FilterDecision {
    let Some(trees) = touched_trees(pr) else {
        return FilterDecision::fail("unparseable");
    };
    if pr.diff.is_empty() {
        return FilterDecision::fail("empty diff");
    }
    let mut all_whitespace = true;
    for h in &pr.diff {
        let (before, after) = &trees[&h.path];
        if squash(&h.removed_lines) == squash(&h.added_lines) {
            continue;
        }
        all_whitespace = false;
        let inert = |tree: &SyntaxTree, n: usize| {
            matches!(
                tree.line_class(n),
                None | Some(LineClass::Blank | LineClass::Comment | LineClass::StringOnly)
            )
        };
        if h.old_lines().all(|n| inert(before, n)) && h.new_lines().all(|n| inert(after, n)) {
            continue;
        }
        if !same_code(&h.removed_lines, &h.added_lines) {
            return FilterDecision::pass();
        }
    }
    if all_whitespace {
        FilterDecision::fail("whitespace-only")
    } else {
        FilterDecision::fail("comment-or-docstring-only")
    }
}

pub fn complexity_gate(pr: &PullRequest, threshold: u32) -> FilterDecision {
    let defs = match modified_definitions(pr) {
        Ok(d) => d,
        Err(_) => return FilterDecision::fail("unparseable"),
    };
    let delta: u32 = defs
        .iter()
        .map(|d| match (&d.before, &d.after) {
            (Some(b), Some(a)) => a.cc.abs_diff(b.cc),
            (Some(s), None) | (None, Some(s)) => s.cc,
            (None, None) => 0,
        })
        .sum();
    if delta >= threshold {
        FilterDecision::pass()
    } else {
        FilterDecision::fail(format!("complexity delta {delta} below threshold {threshold}"))
    }
}
