//! Corpus data model: change requests, code units, and the aligned pairs
//! linking them, with line-delimited JSON persistence and Table-style
//! per-repository length statistics.
//!
//! A corpus file holds one JSON object per line. Every object carries a
//! `"type"` field (`request`, `unit` or `pair`) and its keys are written in
//! sorted order, so writing the same corpus twice produces identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive, 1-based line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn contains(&self, other: Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn contains_line(&self, line: usize) -> bool {
        self.start <= line && line <= self.end
    }

    pub fn intersects(&self, other: Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }
}

impl From<[usize; 2]> for Span {
    fn from(v: [usize; 2]) -> Self {
        Span::new(v[0], v[1])
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeRequest {
    pub id: String,
    pub repo: String,
    pub pr_id: u64,
    pub issue_id: Option<u64>,
    /// Natural-language change intent; the retrieval query.
    pub problem_text: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Function,
    Method,
    Class,
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnitKind::Function => "function",
            UnitKind::Method => "method",
            UnitKind::Class => "class",
        })
    }
}

/// Attribution metadata carried by every stored code unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProvenanceMeta {
    pub repo: String,
    pub commit_hash: String,
}

pub fn is_commit_hash(s: &str) -> bool {
    s.len() == 40 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeUnit {
    pub id: String,
    pub repo: String,
    pub path: String,
    pub qualified_name: String,
    pub kind: UnitKind,
    pub span: Span,
    pub signature: String,
    /// Source lines of the unit joined with `\n`, no trailing newline.
    pub source: String,
    pub provenance: ProvenanceMeta,
}

impl CodeUnit {
    pub fn line_count(&self) -> usize {
        self.source.split('\n').count()
    }

    /// Module name derived from the path: separators become `.`, extension dropped.
    pub fn module(&self) -> String {
        module_name(&self.path)
    }
}

pub fn module_name(path: &str) -> String {
    let path = path.trim_start_matches("./");
    let stem_end = match (path.rfind('.'), path.rfind('/')) {
        (Some(dot), Some(slash)) if dot > slash => dot,
        (Some(dot), None) => dot,
        _ => path.len(),
    };
    path[..stem_end].replace(['/', '\\'], ".")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DifficultyTier {
    Full,
    Challenge,
    Expert,
}

impl DifficultyTier {
    pub const ALL: [DifficultyTier; 3] = [
        DifficultyTier::Full,
        DifficultyTier::Challenge,
        DifficultyTier::Expert,
    ];
}

impl fmt::Display for DifficultyTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DifficultyTier::Full => "Full",
            DifficultyTier::Challenge => "Challenge",
            DifficultyTier::Expert => "Expert",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AlignedPair {
    pub query_id: String,
    pub code_unit_ids: Vec<String>,
    pub commit_hash: String,
    pub tier: DifficultyTier,
}

/// One line of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Record {
    Request(ChangeRequest),
    Unit(CodeUnit),
    Pair(AlignedPair),
}

impl Record {
    fn label(&self) -> String {
        match self {
            Record::Request(r) => format!("request {}", r.id),
            Record::Unit(u) => format!("unit {}", u.id),
            Record::Pair(p) => format!("pair {}", p.query_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub record: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.record, self.message)
    }
}

/// Checks the per-record type invariants. Cross-record references are
/// checked by [`Corpus::check_integrity`].
pub fn validate_record(record: &Record) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |m: String| {
        out.push(Violation {
            record: record.label(),
            message: m,
        })
    };
    match record {
        Record::Request(r) => {
            if r.id.is_empty() {
                push("empty id".into());
            }
            if r.problem_text.trim().is_empty() {
                push("problem_text is empty".into());
            }
        }
        Record::Unit(u) => {
            if u.id.is_empty() {
                push("empty id".into());
            }
            if u.span.start == 0 {
                push("span is 1-based; start_line 0".into());
            }
            if u.span.start > u.span.end {
                push(format!(
                    "start_line {} > end_line {}",
                    u.span.start, u.span.end
                ));
            } else if u.line_count() != u.span.len() {
                push(format!(
                    "source has {} lines but span {} covers {}",
                    u.line_count(),
                    u.span,
                    u.span.len()
                ));
            }
            if !is_commit_hash(&u.provenance.commit_hash) {
                push(format!(
                    "commit_hash {:?} is not 40 lowercase hex digits (length {})",
                    u.provenance.commit_hash,
                    u.provenance.commit_hash.len()
                ));
            }
        }
        Record::Pair(p) => {
            if p.code_unit_ids.is_empty() {
                push("code_unit_ids is empty".into());
            }
            let distinct: BTreeSet<_> = p.code_unit_ids.iter().collect();
            if distinct.len() != p.code_unit_ids.len() {
                push("code_unit_ids contains duplicates".into());
            }
            if !is_commit_hash(&p.commit_hash) {
                push(format!(
                    "commit_hash {:?} is not 40 lowercase hex digits (length {})",
                    p.commit_hash,
                    p.commit_hash.len()
                ));
            }
        }
    }
    out
}

/// Requests and units keyed by id, pairs kept in canonical order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    requests: BTreeMap<String, ChangeRequest>,
    units: BTreeMap<String, CodeUnit>,
    pairs: Vec<AlignedPair>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn requests(&self) -> impl Iterator<Item = &ChangeRequest> {
        self.requests.values()
    }

    pub fn units(&self) -> impl Iterator<Item = &CodeUnit> {
        self.units.values()
    }

    pub fn pairs(&self) -> &[AlignedPair] {
        &self.pairs
    }

    pub fn request(&self, id: &str) -> Option<&ChangeRequest> {
        self.requests.get(id)
    }

    pub fn unit(&self, id: &str) -> Option<&CodeUnit> {
        self.units.get(id)
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty() && self.units.is_empty() && self.pairs.is_empty()
    }

    pub fn num_units(&self) -> usize {
        self.units.len()
    }

    pub fn insert_request(&mut self, r: ChangeRequest) -> Result<()> {
        if self.requests.contains_key(&r.id) {
            return Err(Error::Integrity(format!("duplicate request id {}", r.id)));
        }
        self.requests.insert(r.id.clone(), r);
        Ok(())
    }

    pub fn insert_unit(&mut self, u: CodeUnit) -> Result<()> {
        if self.units.contains_key(&u.id) {
            return Err(Error::Integrity(format!("duplicate unit id {}", u.id)));
        }
        self.units.insert(u.id.clone(), u);
        Ok(())
    }

    /// Inserts a unit unless one with the same id is already present.
    pub fn upsert_unit(&mut self, u: CodeUnit) {
        self.units.entry(u.id.clone()).or_insert(u);
    }

    pub fn push_pair(&mut self, p: AlignedPair) {
        let at = self.pairs.partition_point(|q| q <= &p);
        self.pairs.insert(at, p);
    }

    pub fn set_tier(&mut self, index: usize, tier: DifficultyTier) {
        self.pairs[index].tier = tier;
    }

    /// Units referenced by a pair, in the pair's order.
    pub fn pair_units<'a>(&'a self, pair: &'a AlignedPair) -> impl Iterator<Item = &'a CodeUnit> {
        pair.code_unit_ids.iter().filter_map(|id| self.units.get(id))
    }

    pub fn check_integrity(&self) -> Result<()> {
        let mut violations: Vec<Violation> = Vec::new();
        for r in self.requests.values() {
            violations.extend(validate_record(&Record::Request(r.clone())));
        }
        for u in self.units.values() {
            violations.extend(validate_record(&Record::Unit(u.clone())));
        }
        for p in &self.pairs {
            violations.extend(validate_record(&Record::Pair(p.clone())));
        }
        if let Some(v) = violations.first() {
            return Err(Error::Integrity(v.to_string()));
        }
        for p in &self.pairs {
            if !self.requests.contains_key(&p.query_id) {
                return Err(Error::Integrity(format!(
                    "pair references unknown query_id {}",
                    p.query_id
                )));
            }
            for id in &p.code_unit_ids {
                if !self.units.contains_key(id) {
                    return Err(Error::Integrity(format!(
                        "pair for {} references unknown code_unit_id {id}",
                        p.query_id
                    )));
                }
            }
        }
        Ok(())
    }

    fn records(&self) -> impl Iterator<Item = Record> + '_ {
        self.requests
            .values()
            .cloned()
            .map(Record::Request)
            .chain(self.units.values().cloned().map(Record::Unit))
            .chain(self.pairs.iter().cloned().map(Record::Pair))
    }

    /// Serializes to JSONL with sorted keys.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in self.records() {
            // serde_json::Value maps are BTreeMaps, so keys come out sorted.
            let value = serde_json::to_value(&rec).expect("corpus records serialize");
            out.push_str(&value.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut corpus = Corpus::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if let Some(v) = validate_record(&rec).first() {
                return Err(Error::Parse {
                    line: line_no,
                    message: v.to_string(),
                });
            }
            match rec {
                Record::Request(r) => corpus.insert_request(r)?,
                Record::Unit(u) => corpus.insert_unit(u)?,
                Record::Pair(p) => corpus.push_pair(p),
            }
        }
        corpus.check_integrity()?;
        Ok(corpus)
    }
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Corpus::from_jsonl(BufReader::new(file))
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(corpus.to_jsonl().as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl LengthStats {
    pub fn from_lengths(lengths: &[usize]) -> Option<Self> {
        if lengths.is_empty() {
            return None;
        }
        let n = lengths.len() as f64;
        let mean = lengths.iter().map(|&l| l as f64).sum::<f64>() / n;
        let var = lengths
            .iter()
            .map(|&l| (l as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        Some(LengthStats {
            mean,
            max: *lengths.iter().max().unwrap() as f64,
            min: *lengths.iter().min().unwrap() as f64,
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoStats {
    pub repo: String,
    pub pairs: usize,
    pub patch_len: LengthStats,
    pub problem_len: LengthStats,
}

impl RepoStats {
    pub const HEADER: &'static str = "Repo\tPLM\tPLX\tPLN\tPLS\tPrLM\tPrLX\tPrLN\tPrLS";

    /// Tab-separated row in the PLM/PLX/PLN/PLS/PrLM/PrLX/PrLN/PrLS layout.
    pub fn table_row(&self) -> String {
        let p = &self.patch_len;
        let q = &self.problem_len;
        format!(
            "{}\t{:.2}\t{}\t{}\t{:.2}\t{:.2}\t{}\t{}\t{:.2}",
            self.repo, p.mean, p.max, p.min, p.std, q.mean, q.max, q.min, q.std
        )
    }

    /// Parses a row written by [`RepoStats::table_row`]. Columns may be
    /// separated by tabs or by `&` (LaTeX table rows).
    pub fn parse_table_row(row: &str) -> Result<Self> {
        let cols: Vec<&str> = row
            .trim()
            .trim_end_matches("\\\\")
            .split(['\t', '&'])
            .map(str::trim)
            .collect();
        if cols.len() != 9 {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected 9 columns, found {}", cols.len()),
            });
        }
        let mut nums = [0.0; 8];
        for (slot, col) in nums.iter_mut().zip(&cols[1..]) {
            *slot = col.parse().map_err(|_| Error::Parse {
                line: 1,
                message: format!("not a number: {col:?}"),
            })?;
        }
        Ok(RepoStats {
            repo: cols[0].to_string(),
            pairs: 0,
            patch_len: LengthStats {
                mean: nums[0],
                max: nums[1],
                min: nums[2],
                std: nums[3],
            },
            problem_len: LengthStats {
                mean: nums[4],
                max: nums[5],
                min: nums[6],
                std: nums[7],
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub repos: Vec<RepoStats>,
}

impl CorpusStats {
    pub fn table(&self) -> String {
        let mut out = String::from(RepoStats::HEADER);
        out.push('\n');
        for r in &self.repos {
            out.push_str(&r.table_row());
            out.push('\n');
        }
        out
    }
}

/// Patch text of a pair: the sources of its units joined by newlines.
pub fn patch_text(corpus: &Corpus, pair: &AlignedPair) -> String {
    corpus
        .pair_units(pair)
        .map(|u| u.source.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Per-repository patch and problem lengths, in characters, one sample per pair.
pub fn compute_corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut by_repo: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for pair in corpus.pairs() {
        let Some(req) = corpus.request(&pair.query_id) else {
            continue;
        };
        let entry = by_repo.entry(req.repo.as_str()).or_default();
        entry.0.push(patch_text(corpus, pair).chars().count());
        entry.1.push(req.problem_text.chars().count());
    }
    let repos = by_repo
        .into_iter()
        .filter_map(|(repo, (patch, problem))| {
            Some(RepoStats {
                repo: repo.to_string(),
                pairs: patch.len(),
                patch_len: LengthStats::from_lengths(&patch)?,
                problem_len: LengthStats::from_lengths(&problem)?,
            })
        })
        .collect();
    CorpusStats { repos }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use chrono::TimeZone;

    pub const HASH: &str = "0123456789abcdef0123456789abcdef01234567";

    pub fn request(id: &str, repo: &str, text: &str) -> ChangeRequest {
        ChangeRequest {
            id: id.into(),
            repo: repo.into(),
            pr_id: 1,
            issue_id: Some(2),
            problem_text: text.into(),
            created_at: Utc.with_ymd_and_hms(2024, 1, 2, 3, 4, 5).unwrap(),
        }
    }

    pub fn unit(id: &str, repo: &str, source: &str) -> CodeUnit {
        let lines = source.split('\n').count();
        CodeUnit {
            id: id.into(),
            repo: repo.into(),
            path: "pkg/mod.py".into(),
            qualified_name: id.into(),
            kind: UnitKind::Function,
            span: Span::new(1, lines),
            signature: format!("def {id}()"),
            source: source.into(),
            provenance: ProvenanceMeta {
                repo: repo.into(),
                commit_hash: HASH.into(),
            },
        }
    }

    pub fn pair(query: &str, units: &[&str]) -> AlignedPair {
        AlignedPair {
            query_id: query.into(),
            code_unit_ids: units.iter().map(|s| s.to_string()).collect(),
            commit_hash: HASH.into(),
            tier: DifficultyTier::Challenge,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn minimal() -> Corpus {
        let mut c = Corpus::new();
        c.insert_request(request("q1", "org/repo", "Fix the parser")).unwrap();
        c.insert_unit(unit("f", "org/repo", "def f():\n    return 1")).unwrap();
        c.push_pair(pair("q1", &["f"]));
        c
    }

    #[test]
    fn three_line_fixture_reads_back() {
        let text = minimal().to_jsonl();
        assert_eq!(text.lines().count(), 3);
        let c = Corpus::from_jsonl(text.as_bytes()).unwrap();
        assert_eq!(c.requests().count(), 1);
        assert_eq!(c.units().count(), 1);
        assert_eq!(c.pairs().len(), 1);
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let c = Corpus::from_jsonl("".as_bytes()).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn dangling_query_id_names_the_id() {
        let mut c = minimal();
        c.push_pair(pair("ghost", &["f"]));
        let err = Corpus::from_jsonl(c.to_jsonl().as_bytes()).unwrap_err();
        match err {
            Error::Integrity(m) => assert!(m.contains("ghost"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let mut text = minimal().to_jsonl();
        text.push_str("{not json\n");
        match Corpus::from_jsonl(text.as_bytes()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn keys_sorted_and_type_tag_present() {
        let text = minimal().to_jsonl();
        let first = text.lines().next().unwrap();
        assert!(first.starts_with("{\"created_at\""), "{first}");
        assert!(first.contains("\"type\":\"request\""));
        let unit_line = text.lines().nth(1).unwrap();
        assert!(unit_line.contains("\"provenance\""));
    }

    #[test]
    fn unicode_round_trip_and_stable_bytes() {
        let mut c = Corpus::new();
        c.insert_request(request("q", "r/r", "Réparer l'écriture — ファイル 🚀"))
            .unwrap();
        c.insert_unit(unit("u", "r/r", "def u():\n    pass")).unwrap();
        c.push_pair(pair("q", &["u"]));
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.jsonl");
        let p2 = dir.path().join("b.jsonl");
        write_corpus(&c, &p1).unwrap();
        let back = read_corpus(&p1).unwrap();
        assert_eq!(back, c);
        write_corpus(&back, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn ten_record_round_trip_is_byte_identical() {
        let mut c = Corpus::new();
        for i in 0..4 {
            c.insert_request(request(&format!("q{i}"), "r/r", "text")).unwrap();
        }
        for i in 0..4 {
            c.insert_unit(unit(&format!("u{i}"), "r/r", "x\ny")).unwrap();
        }
        c.push_pair(pair("q1", &["u0", "u2"]));
        c.push_pair(pair("q0", &["u1"]));
        let once = c.to_jsonl();
        assert_eq!(once.lines().count(), 10);
        let twice = Corpus::from_jsonl(once.as_bytes()).unwrap().to_jsonl();
        assert_eq!(once, twice);
    }

    #[test]
    fn validate_inverted_span() {
        let mut u = unit("u", "r", "a\nb\nc");
        u.span = Span::new(5, 3);
        let v = validate_record(&Record::Unit(u));
        assert_eq!(v.len(), 1, "{v:?}");
    }

    #[test]
    fn validate_short_hash() {
        let mut u = unit("u", "r", "a");
        u.provenance.commit_hash = "abc".into();
        let v = validate_record(&Record::Unit(u));
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("length 3"));
    }

    #[test]
    fn validate_good_request() {
        assert!(validate_record(&Record::Request(request("q", "r", "do it"))).is_empty());
    }

    #[test]
    fn stats_two_point() {
        let s = LengthStats::from_lengths(&[2, 4]).unwrap();
        assert_eq!((s.mean, s.max, s.min, s.std), (3.0, 4.0, 2.0, 1.0));
        let one = LengthStats::from_lengths(&[7]).unwrap();
        assert_eq!(one.std, 0.0);
    }

    #[test]
    fn corpus_stats_counts_characters() {
        let mut c = Corpus::new();
        c.insert_request(request("q1", "a/a", "héllo")).unwrap();
        c.insert_request(request("q2", "a/a", "abc")).unwrap();
        c.insert_unit(unit("u1", "a/a", "ab")).unwrap();
        c.insert_unit(unit("u2", "a/a", "abcd")).unwrap();
        c.push_pair(pair("q1", &["u1"]));
        c.push_pair(pair("q2", &["u2"]));
        let stats = compute_corpus_stats(&c);
        assert_eq!(stats.repos.len(), 1);
        let r = &stats.repos[0];
        assert_eq!(r.patch_len.mean, 3.0);
        assert_eq!(r.patch_len.std, 1.0);
        assert_eq!(r.problem_len.max, 5.0);
    }

    #[test]
    fn table_one_astropy_row_parses() {
        let row = "astropy/astropy & 2502.09 & 13884 & 470 & 3670.94 & 2510.73 & 7910 & 162 & 1841.03 \\\\";
        let r = RepoStats::parse_table_row(row).unwrap();
        assert_eq!(r.repo, "astropy/astropy");
        assert_eq!(r.patch_len.mean, 2502.09);
        assert_eq!(r.patch_len.max, 13884.0);
        assert_eq!(r.patch_len.min, 470.0);
        assert_eq!(r.patch_len.std, 3670.94);
        let back = RepoStats::parse_table_row(&r.table_row()).unwrap();
        assert_eq!(back.patch_len, r.patch_len);
    }

    #[test]
    fn module_names() {
        assert_eq!(module_name("pkg/sub/mod.py"), "pkg.sub.mod");
        assert_eq!(module_name("a.py"), "a");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn stats_match_brute_force(lengths in proptest::collection::vec(0usize..20_000, 1..60)) {
                let s = LengthStats::from_lengths(&lengths).unwrap();
                let n = lengths.len() as f64;
                let mut sum = 0.0;
                let mut lo = usize::MAX;
                let mut hi = 0;
                for &l in &lengths { sum += l as f64; lo = lo.min(l); hi = hi.max(l); }
                let mean = sum / n;
                let mut ss = 0.0;
                for &l in &lengths { ss += (l as f64 - mean) * (l as f64 - mean); }
                prop_assert_eq!(s.mean, mean);
                prop_assert_eq!(s.max, hi as f64);
                prop_assert_eq!(s.min, lo as f64);
                prop_assert_eq!(s.std, (ss / n).sqrt());
                prop_assert!(s.min <= s.mean && s.mean <= s.max && s.std >= 0.0);
            }

            #[test]
            fn write_read_write_is_stable(texts in proptest::collection::vec("\\PC{1,40}", 1..8)) {
                let mut c = Corpus::new();
                for (i, t) in texts.iter().enumerate() {
                    let text = if t.trim().is_empty() { "x".to_string() } else { t.clone() };
                    c.insert_request(request(&format!("q{i}"), "r/r", &text)).unwrap();
                    c.insert_unit(unit(&format!("u{i}"), "r/r", &format!("def u{i}():\n    pass"))).unwrap();
                    c.push_pair(pair(&format!("q{i}"), &[&format!("u{i}")]));
                }
                let a = c.to_jsonl();
                let back = Corpus::from_jsonl(a.as_bytes()).unwrap();
                prop_assert_eq!(&back, &c);
                prop_assert_eq!(back.to_jsonl(), a);
            }
        }
    }
}
