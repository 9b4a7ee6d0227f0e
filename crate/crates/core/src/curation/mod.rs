//! Turning pull-request bundles into aligned corpora: quality gates,
//! diff-to-syntax-tree alignment and difficulty stratification.

mod align;
mod gates;
mod pipeline;

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::is_commit_hash;
use crate::error::{Error, Result};

pub use align::{align_diff_to_ast, modified_definitions, stratify, Alignment, DefState, ModifiedDef};
pub use gates::{complexity_gate, license_gate, link_pr_issue, triviality_gate};
pub use pipeline::{curate, excerpt, export_excerpts, CurationOutput, PrDecision, EXCERPT_MAX_LINES};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoSnapshot {
    pub repo: String,
    pub commit_hash: String,
    pub files: BTreeMap<String, String>,
}

/// One diff hunk without context lines: `old_range` covers exactly the
/// removed lines and `new_range` exactly the added ones, as `(start, len)`
/// with 1-based starts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffHunk {
    pub path: String,
    pub old_range: (usize, usize),
    pub new_range: (usize, usize),
    #[serde(default)]
    pub removed_lines: Vec<String>,
    #[serde(default)]
    pub added_lines: Vec<String>,
}

impl DiffHunk {
    /// Line numbers of the added lines in the after-state.
    pub fn new_lines(&self) -> std::ops::Range<usize> {
        self.new_range.0..self.new_range.0 + self.new_range.1
    }

    /// Line numbers of the removed lines in the before-state.
    pub fn old_lines(&self) -> std::ops::Range<usize> {
        self.old_range.0..self.old_range.0 + self.old_range.1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PullRequest {
    pub id: u64,
    pub title: String,
    #[serde(default)]
    pub body: String,
    #[serde(default)]
    pub commit_messages: Vec<String>,
    pub diff: Vec<DiffHunk>,
    pub before: RepoSnapshot,
    pub after: RepoSnapshot,
    #[serde(default)]
    pub created_at: DateTime<Utc>,
    /// Declared license id of the source repository.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub license: Option<String>,
}

impl PullRequest {
    pub fn repo(&self) -> &str {
        &self.after.repo
    }

    pub fn problem_text(&self) -> String {
        format!("{}\n{}", self.title.trim(), self.body.trim()).trim().to_string()
    }

    pub fn validate(&self) -> Result<()> {
        for snap in [&self.before, &self.after] {
            if !is_commit_hash(&snap.commit_hash) {
                return Err(Error::Integrity(format!(
                    "PR {}: malformed commit hash {:?}",
                    self.id, snap.commit_hash
                )));
            }
        }
        for h in &self.diff {
            if !self.before.files.contains_key(&h.path) && !self.after.files.contains_key(&h.path) {
                return Err(Error::Integrity(format!(
                    "PR {}: diff path {} is in neither snapshot",
                    self.id, h.path
                )));
            }
            if h.old_range.0 == 0 || h.new_range.0 == 0 {
                return Err(Error::Integrity(format!("PR {}: hunk ranges are 1-based", self.id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub passed: bool,
    pub reason: String,
}

impl FilterDecision {
    pub fn pass() -> Self {
        FilterDecision {
            passed: true,
            reason: "ok".into(),
        }
    }

    pub fn fail(reason: impl Into<String>) -> Self {
        FilterDecision {
            passed: false,
            reason: reason.into(),
        }
    }
}

pub const DEFAULT_LINKAGE_PATTERN: &str = r"(?i)(fixes|closes|resolves)\s+#(\d+)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    pub linkage_patterns: Vec<String>,
    pub complexity_threshold: u32,
    /// Empty means every license is accepted.
    #[serde(default)]
    pub license_allowlist: Vec<String>,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            linkage_patterns: vec![DEFAULT_LINKAGE_PATTERN.to_string()],
            complexity_threshold: 1,
            license_allowlist: Vec::new(),
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.linkage_patterns.is_empty() {
            return Err(Error::domain("at least one linkage pattern is required"));
        }
        if self.complexity_threshold == 0 {
            return Err(Error::domain("complexity threshold must be positive"));
        }
        for p in &self.linkage_patterns {
            regex::Regex::new(p).map_err(|e| Error::domain(format!("bad linkage pattern {p:?}: {e}")))?;
        }
        Ok(())
    }
}

pub fn read_pull_requests(path: impl AsRef<Path>) -> Result<Vec<PullRequest>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_pull_requests(std::io::BufReader::new(file))
}

pub fn parse_pull_requests<R: BufRead>(reader: R) -> Result<Vec<PullRequest>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let pr: PullRequest = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        pr.validate()?;
        out.push(pr);
    }
    Ok(out)
}

/// Context-free hunks turning `before` into `after`, from a longest common
/// subsequence over lines.
pub fn diff_text(path: &str, before: &str, after: &str) -> Vec<DiffHunk> {
    let a: Vec<&str> = before.lines().collect();
    let b: Vec<&str> = after.lines().collect();
    let (n, m) = (a.len(), b.len());
    let mut lcs = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if a[i] == b[j] {
                lcs[i + 1][j + 1] + 1
            } else {
                lcs[i + 1][j].max(lcs[i][j + 1])
            };
        }
    }
    let mut hunks = Vec::new();
    let (mut i, mut j) = (0, 0);
    let mut open: Option<DiffHunk> = None;
    let flush = |open: &mut Option<DiffHunk>, hunks: &mut Vec<DiffHunk>| {
        if let Some(h) = open.take() {
            hunks.push(h);
        }
    };
    while i < n || j < m {
        if i < n && j < m && a[i] == b[j] {
            flush(&mut open, &mut hunks);
            i += 1;
            j += 1;
            continue;
        }
        let h = open.get_or_insert_with(|| DiffHunk {
            path: path.to_string(),
            old_range: (i + 1, 0),
            new_range: (j + 1, 0),
            removed_lines: Vec::new(),
            added_lines: Vec::new(),
        });
        if j == m || (i < n && lcs[i + 1][j] >= lcs[i][j + 1]) {
            h.removed_lines.push(a[i].to_string());
            h.old_range.1 += 1;
            i += 1;
        } else {
            h.added_lines.push(b[j].to_string());
            h.new_range.1 += 1;
            j += 1;
        }
    }
    flush(&mut open, &mut hunks);
    hunks
}

/// Hunks for every file that differs between two snapshots.
pub fn diff_snapshots(before: &RepoSnapshot, after: &RepoSnapshot) -> Vec<DiffHunk> {
    let mut paths: Vec<&String> = before.files.keys().chain(after.files.keys()).collect();
    paths.sort();
    paths.dedup();
    let empty = String::new();
    paths
        .into_iter()
        .flat_map(|p| {
            let a = before.files.get(p).unwrap_or(&empty);
            let b = after.files.get(p).unwrap_or(&empty);
            diff_text(p, a, b)
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub const BEFORE: &str = "0000000000000000000000000000000000000000";
    pub const AFTER: &str = "1111111111111111111111111111111111111111";

    pub fn snapshot(hash: &str, files: &[(&str, &str)]) -> RepoSnapshot {
        RepoSnapshot {
            repo: "org/repo".into(),
            commit_hash: hash.into(),
            files: files.iter().map(|(p, t)| (p.to_string(), t.to_string())).collect(),
        }
    }

    /// A PR whose diff is computed from the two file sets.
    pub fn pr(id: u64, body: &str, before: &[(&str, &str)], after: &[(&str, &str)]) -> PullRequest {
        let before = snapshot(BEFORE, before);
        let after = snapshot(AFTER, after);
        PullRequest {
            id,
            title: format!("Change {id}"),
            body: body.into(),
            commit_messages: Vec::new(),
            diff: diff_snapshots(&before, &after),
            before,
            after,
            created_at: DateTime::<Utc>::default(),
            license: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diff_context_free_ranges() {
        let h = diff_text("m.py", "a\nb\nc\n", "a\nB\nc\nd\n");
        assert_eq!(h.len(), 2);
        assert_eq!((h[0].old_range, h[0].new_range), ((2, 1), (2, 1)));
        assert_eq!(h[0].removed_lines, ["b"]);
        assert_eq!(h[0].added_lines, ["B"]);
        assert_eq!((h[1].old_range, h[1].new_range), ((4, 0), (4, 1)));
        assert!(diff_text("m.py", "x\n", "x\n").is_empty());
    }

    #[test]
    fn pr_roundtrip_and_validation() {
        let pr = fixtures::pr(1, "Fixes #3", &[("m.py", "x = 1\n")], &[("m.py", "x = 2\n")]);
        let line = serde_json::to_string(&pr).unwrap();
        let back = parse_pull_requests(line.as_bytes()).unwrap();
        assert_eq!(back, [pr.clone()]);
        let mut bad = pr.clone();
        bad.diff[0].path = "nope.py".into();
        assert!(matches!(bad.validate(), Err(Error::Integrity(_))));
        let mut bad = pr;
        bad.after.commit_hash = "xyz".into();
        assert!(bad.validate().is_err());
        assert!(matches!(parse_pull_requests("{".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn gate_config_bounds() {
        assert!(GateConfig::default().validate().is_ok());
        let mut c = GateConfig::default();
        c.linkage_patterns.clear();
        assert!(c.validate().is_err());
        let c = GateConfig {
            complexity_threshold: 0,
            ..GateConfig::default()
        };
        assert!(c.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn apply(before: &str, hunks: &[DiffHunk]) -> String {
            let mut lines: Vec<String> = before.lines().map(String::from).collect();
            for h in hunks.iter().rev() {
                let at = h.old_range.0 - 1;
                lines.splice(at..at + h.old_range.1, h.added_lines.iter().cloned());
            }
            lines.iter().map(|l| format!("{l}\n")).collect()
        }

        proptest! {
            #[test]
            fn diff_reconstructs_after(a in proptest::collection::vec(0u8..4, 0..12), b in proptest::collection::vec(0u8..4, 0..12)) {
                let render = |v: &[u8]| v.iter().map(|x| format!("l{x}\n")).collect::<String>();
                let (ta, tb) = (render(&a), render(&b));
                let hunks = diff_text("f", &ta, &tb);
                prop_assert_eq!(apply(&ta, &hunks), tb);
                for h in &hunks {
                    prop_assert_eq!(h.removed_lines.len(), h.old_range.1);
                    prop_assert_eq!(h.added_lines.len(), h.new_range.1);
                }
            }
        }
    }
}
