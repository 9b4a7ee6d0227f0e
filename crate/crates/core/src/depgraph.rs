//! Typed dependency graphs over code units and the before/after screening
//! patterns (API propagation, co-change, dependency restructuring).
//!
//! Name resolution is purely lexical: a bare call resolves through the
//! enclosing function scopes, then module globals, then names imported into
//! the file. `self.m()` resolves against the enclosing class and `mod.f()`
//! against an imported module. Nothing is inferred from types.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{module_name, CodeUnit, ProvenanceMeta};
use crate::curation::{modified_definitions, PullRequest, RepoSnapshot};
use crate::error::{Error, Result};
use crate::syntax::{self, AstNode, Language, NodeKind, SyntaxTree, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Call,
    Inherit,
    Import,
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeKind::Call => "call",
            EdgeKind::Inherit => "inherit",
            EdgeKind::Import => "import",
        })
    }
}

impl std::str::FromStr for EdgeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "call" => Ok(EdgeKind::Call),
            "inherit" => Ok(EdgeKind::Inherit),
            "import" => Ok(EdgeKind::Import),
            other => Err(Error::domain(format!("unknown edge kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub src: String,
    pub dst: String,
    pub kind: EdgeKind,
}

/// Edge keyed by `module:qualified_name` on both ends, comparable across
/// snapshots whose unit ids differ.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NamedEdge {
    pub src: String,
    pub dst: String,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DepGraph {
    nodes: BTreeSet<String>,
    edges: BTreeSet<Edge>,
    module_of: BTreeMap<String, String>,
    name_of: BTreeMap<String, String>,
    path_of: BTreeMap<String, String>,
}

impl DepGraph {
    pub fn nodes(&self) -> &BTreeSet<String> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn module_of(&self, id: &str) -> Option<&str> {
        self.module_of.get(id).map(String::as_str)
    }

    pub fn qualified_name(&self, id: &str) -> Option<&str> {
        self.name_of.get(id).map(String::as_str)
    }

    pub fn path_of(&self, id: &str) -> Option<&str> {
        self.path_of.get(id).map(String::as_str)
    }

    pub fn add_node(&mut self, id: &str, path: &str, qualified_name: &str) {
        self.nodes.insert(id.to_string());
        self.module_of.insert(id.to_string(), module_name(path));
        self.name_of.insert(id.to_string(), qualified_name.to_string());
        self.path_of.insert(id.to_string(), path.to_string());
    }

    pub fn add_edge(&mut self, src: &str, dst: &str, kind: EdgeKind) -> Result<()> {
        if !self.nodes.contains(src) || !self.nodes.contains(dst) {
            return Err(Error::Integrity(format!(
                "edge {src} -> {dst} has an endpoint outside the graph"
            )));
        }
        self.edges.insert(Edge {
            src: src.to_string(),
            dst: dst.to_string(),
            kind,
        });
        Ok(())
    }

    /// Ids linked to `id` by an edge in either direction, excluding `id`.
    pub fn neighbors(&self, id: &str) -> BTreeSet<&str> {
        self.edges
            .iter()
            .filter_map(|e| {
                if e.src == id && e.dst != id {
                    Some(e.dst.as_str())
                } else if e.dst == id && e.src != id {
                    Some(e.src.as_str())
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn connected(&self, a: &str, b: &str) -> bool {
        self.edges
            .iter()
            .any(|e| (e.src == a && e.dst == b) || (e.src == b && e.dst == a))
    }

    pub fn callers_of(&self, id: &str) -> BTreeSet<&str> {
        self.edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Call && e.dst == id && e.src != id)
            .map(|e| e.src.as_str())
            .collect()
    }

    /// Edges touching any of `ids` whose two endpoints sit in different modules.
    pub fn cross_module_edges<'a>(&'a self, ids: &'a BTreeSet<&str>) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| {
            (ids.contains(e.src.as_str()) || ids.contains(e.dst.as_str()))
                && self.module_of.get(&e.src) != self.module_of.get(&e.dst)
        })
    }

    fn key(&self, id: &str) -> String {
        format!(
            "{}:{}",
            self.module_of.get(id).map_or("", String::as_str),
            self.name_of.get(id).map_or(id, String::as_str)
        )
    }

    pub fn named_edges(&self) -> BTreeSet<NamedEdge> {
        self.edges
            .iter()
            .map(|e| NamedEdge {
                src: self.key(&e.src),
                dst: self.key(&e.dst),
                kind: e.kind,
            })
            .collect()
    }

    /// `src<TAB>dst<TAB>kind` lines, sorted.
    pub fn edge_list(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            out.push_str(&format!("{}\t{}\t{}\n", e.src, e.dst, e.kind));
        }
        out
    }

    pub fn merge(&mut self, other: DepGraph) {
        self.nodes.extend(other.nodes);
        self.edges.extend(other.edges);
        self.module_of.extend(other.module_of);
        self.name_of.extend(other.name_of);
        self.path_of.extend(other.path_of);
    }
}

/// A parsed file prepared for graph construction.
struct FileInfo<'a> {
    path: &'a str,
    module: String,
    tree: SyntaxTree,
    /// qualified name -> unit id
    ids: BTreeMap<String, String>,
}

struct Imports {
    /// local alias -> (module, name)
    names: HashMap<String, (String, String)>,
    /// local alias -> module
    modules: HashMap<String, String>,
}

fn resolve_module<'m>(wanted: &str, modules: &'m BTreeSet<String>) -> Option<&'m String> {
    let strip = |m: &'m String| m.strip_suffix(".__init__").unwrap_or(m).to_string();
    modules
        .iter()
        .find(|m| strip(m) == wanted)
        .or_else(|| modules.iter().find(|m| strip(m).ends_with(&format!(".{wanted}"))))
}

fn parse_imports(file: &FileInfo<'_>, modules: &BTreeSet<String>) -> Imports {
    let mut imports = Imports {
        names: HashMap::new(),
        modules: HashMap::new(),
    };
    let package: Vec<&str> = {
        let mut parts: Vec<&str> = file.module.split('.').collect();
        parts.pop();
        parts
    };
    for node in file.tree.root.walk().filter(|n| n.kind == NodeKind::Import) {
        let toks = &node.tokens;
        if toks.first().is_some_and(|t| t.is_name("from")) {
            let Some(imp) = toks.iter().position(|t| t.is_name("import")) else {
                continue;
            };
            let mut dots = 0;
            let mut name = String::new();
            for t in &toks[1..imp] {
                if t.kind == TokenKind::Op && t.text.chars().all(|c| c == '.') && name.is_empty() {
                    dots += t.text.len();
                } else {
                    name.push_str(&t.text);
                }
            }
            let target = if dots > 0 {
                let keep = package.len().saturating_sub(dots - 1);
                let mut parts: Vec<&str> = package[..keep].to_vec();
                if !name.is_empty() {
                    parts.push(&name);
                }
                parts.join(".")
            } else {
                name
            };
            let Some(module) = resolve_module(&target, modules) else {
                continue;
            };
            for (name, alias) in import_list(&toks[imp + 1..]) {
                imports.names.insert(alias, (module.clone(), name));
            }
        } else if toks.first().is_some_and(|t| t.is_name("import")) {
            for (name, alias) in import_list(&toks[1..]) {
                if let Some(module) = resolve_module(&name, modules) {
                    imports.modules.insert(alias, module.clone());
                }
            }
        }
    }
    imports
}

/// `a, b.c as d` -> [("a","a"), ("b.c","d")]
fn import_list(toks: &[Token]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut name = String::new();
    let mut alias: Option<String> = None;
    let mut after_as = false;
    for t in toks {
        if t.is_op(",") {
            if !name.is_empty() {
                let a = alias.take().unwrap_or_else(|| name.clone());
                out.push((std::mem::take(&mut name), a));
            }
            after_as = false;
        } else if t.is_name("as") {
            after_as = true;
        } else if t.kind == TokenKind::Name || t.is_op(".") {
            if after_as {
                alias = Some(t.text.clone());
            } else {
                name.push_str(&t.text);
            }
        }
    }
    if !name.is_empty() {
        let a = alias.unwrap_or_else(|| name.clone());
        out.push((name, a));
    }
    out
}

/// Tokens belonging to a definition itself: header plus body, without
/// nested definitions.
fn own_tokens(node: &AstNode) -> Vec<&Token> {
    let mut toks: Vec<&Token> = node.tokens.iter().collect();
    for n in node.walk_own_body() {
        toks.extend(n.tokens.iter());
    }
    toks
}

struct Resolver<'a> {
    files: &'a [FileInfo<'a>],
    by_module: HashMap<&'a str, usize>,
    modules: BTreeSet<String>,
}

impl<'a> Resolver<'a> {
    fn lookup(&self, module: &str, qname: &str) -> Option<&'a str> {
        let file = &self.files[*self.by_module.get(module)?];
        file.ids.get(qname).map(String::as_str)
    }

    /// Bare-name resolution from inside the definition `qname` of `file`.
    fn bare(&self, file: &FileInfo<'_>, imports: &Imports, scope: &[(String, bool)], name: &str) -> Option<&'a str> {
        // innermost function scopes first; class bodies are not enclosing scopes for bare names
        for depth in (1..=scope.len()).rev() {
            if scope[depth - 1].1 {
                continue;
            }
            let prefix: Vec<&str> = scope[..depth].iter().map(|s| s.0.as_str()).collect();
            let q = format!("{}.{}", prefix.join("."), name);
            if let Some(id) = self.lookup(&file.module, &q) {
                return Some(id);
            }
        }
        if let Some(id) = self.lookup(&file.module, name) {
            return Some(id);
        }
        let (module, imported) = imports.names.get(name)?;
        self.lookup(module, imported)
    }

    fn dotted(&self, file: &FileInfo<'_>, imports: &Imports, scope: &[(String, bool)], obj: &str, name: &str) -> Option<&'a str> {
        if obj == "self" || obj == "cls" {
            let class_depth = scope.iter().rposition(|s| s.1)?;
            let prefix: Vec<&str> = scope[..=class_depth].iter().map(|s| s.0.as_str()).collect();
            return self.lookup(&file.module, &format!("{}.{}", prefix.join("."), name));
        }
        if let Some(module) = imports.modules.get(obj) {
            return self.lookup(module, name);
        }
        // Class.method, with the class itself resolved lexically
        let class_id = self.bare(file, imports, scope, obj)?;
        let owner = self.files.iter().find_map(|f| {
            f.ids
                .iter()
                .find(|(_, id)| id.as_str() == class_id)
                .map(|(q, _)| (f.module.as_str(), q.clone()))
        })?;
        self.lookup(owner.0, &format!("{}.{}", owner.1, name))
    }
}

fn build_from_files(files: &[FileInfo<'_>]) -> DepGraph {
    let mut graph = DepGraph::default();
    let modules: BTreeSet<String> = files.iter().map(|f| f.module.clone()).collect();
    let resolver = Resolver {
        files,
        by_module: files.iter().enumerate().map(|(i, f)| (f.module.as_str(), i)).collect(),
        modules,
    };
    for file in files {
        for (q, id) in &file.ids {
            graph.add_node(id, file.path, q);
        }
    }
    for file in files {
        let imports = parse_imports(file, &resolver.modules);
        for def in file.tree.definitions() {
            let Some(src) = file.ids.get(&def.qualified_name) else {
                continue;
            };
            let scope = scope_of(&file.tree, &def.qualified_name);
            let toks = own_tokens(def.node);
            // calls
            for i in 0..toks.len() {
                let t = toks[i];
                if t.kind != TokenKind::Name || !toks.get(i + 1).is_some_and(|n| n.is_op("(")) {
                    continue;
                }
                if i > 0 && (toks[i - 1].is_name("def") || toks[i - 1].is_name("class")) {
                    continue;
                }
                let dst = if i >= 2 && toks[i - 1].is_op(".") && toks[i - 2].kind == TokenKind::Name {
                    if i >= 3 && toks[i - 3].is_op(".") {
                        None
                    } else {
                        resolver.dotted(file, &imports, &scope, &toks[i - 2].text, &t.text)
                    }
                } else if i >= 1 && toks[i - 1].is_op(".") {
                    None
                } else {
                    resolver.bare(file, &imports, &scope, &t.text)
                };
                if let Some(dst) = dst {
                    let _ = graph.add_edge(src, dst, EdgeKind::Call);
                }
            }
            // inheritance
            let parent_scope = &scope[..scope.len().saturating_sub(1)];
            for base in def.node.class_bases() {
                let dst = match base.rsplit_once('.') {
                    Some((obj, name)) => resolver.dotted(file, &imports, parent_scope, obj, name),
                    None => resolver.bare(file, &imports, parent_scope, &base),
                };
                if let Some(dst) = dst {
                    let _ = graph.add_edge(src, dst, EdgeKind::Inherit);
                }
            }
            // imports used by this definition
            for (i, t) in toks.iter().enumerate() {
                if t.kind != TokenKind::Name || (i > 0 && toks[i - 1].is_op(".")) {
                    continue;
                }
                if let Some((module, name)) = imports.names.get(&t.text) {
                    if let Some(dst) = resolver.lookup(module, name) {
                        let _ = graph.add_edge(src, dst, EdgeKind::Import);
                    }
                } else if let Some(module) = imports.modules.get(&t.text) {
                    let attr = toks
                        .get(i + 1)
                        .filter(|d| d.is_op("."))
                        .and_then(|_| toks.get(i + 2))
                        .filter(|n| n.kind == TokenKind::Name);
                    if let Some(dst) = attr.and_then(|n| resolver.lookup(module, &n.text)) {
                        let _ = graph.add_edge(src, dst, EdgeKind::Import);
                    }
                }
            }
        }
    }
    graph
}

/// (name, is_class) for each component of a qualified name.
fn scope_of(tree: &SyntaxTree, qualified_name: &str) -> Vec<(String, bool)> {
    let defs = tree.definitions();
    let parts: Vec<&str> = qualified_name.split('.').collect();
    (1..=parts.len())
        .map(|n| {
            let q = parts[..n].join(".");
            let is_class = defs
                .iter()
                .any(|d| d.qualified_name == q && d.node.kind == NodeKind::ClassDef);
            (parts[n - 1].to_string(), is_class)
        })
        .collect()
}

/// Builds the graph of one repository snapshot. Files that fail to parse
/// are skipped with a warning on stderr.
pub fn build_graph(snapshot: &RepoSnapshot) -> DepGraph {
    let provenance = ProvenanceMeta {
        repo: snapshot.repo.clone(),
        commit_hash: snapshot.commit_hash.clone(),
    };
    let mut files = Vec::new();
    for (path, text) in &snapshot.files {
        if !path.ends_with(".py") {
            continue;
        }
        match syntax::parse_source(text, Language::Python) {
            Ok(tree) => {
                let ids = syntax::extract_definitions(&tree, path, &provenance)
                    .into_iter()
                    .map(|u| (u.qualified_name, u.id))
                    .collect();
                files.push(FileInfo {
                    path,
                    module: module_name(path),
                    tree,
                    ids,
                });
            }
            Err(e) => eprintln!("warning: skipping {path}: {e}"),
        }
    }
    build_from_files(&files)
}

/// Graph over stored code units, one view per repository. Units of the same
/// file are stitched together even when they come from different commits,
/// so calls resolve by name across the corpus. Each file is rebuilt from its
/// top-level units only, so module-level statements such as imports are not
/// seen. When several units share a path and qualified name, the one with
/// the greatest id represents it; the others become isolated nodes.
pub fn graph_for_units<'u>(units: impl IntoIterator<Item = &'u CodeUnit>) -> DepGraph {
    let mut repos: BTreeMap<&str, BTreeMap<&str, BTreeMap<&str, &CodeUnit>>> = BTreeMap::new();
    let mut shadowed = Vec::new();
    for u in units {
        let slot = repos
            .entry(u.repo.as_str())
            .or_default()
            .entry(u.path.as_str())
            .or_default()
            .entry(u.qualified_name.as_str());
        match slot {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(u);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                if u.id > o.get().id {
                    shadowed.push(o.insert(u));
                } else {
                    shadowed.push(u);
                }
            }
        }
    }
    let mut graph = DepGraph::default();
    for paths in repos.values() {
        let mut files = Vec::new();
        for (path, by_name) in paths {
            let mut top: Vec<&CodeUnit> = by_name.values().copied().filter(|u| !u.qualified_name.contains('.')).collect();
            top.sort_by(|a, b| (a.span.start, &a.id).cmp(&(b.span.start, &b.id)));
            let text: String = top.iter().map(|u| format!("{}\n\n", u.source.trim_end())).collect();
            let tree = match syntax::parse_source(&text, Language::Python) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("warning: skipping {path}: {e}");
                    continue;
                }
            };
            let ids = tree
                .definitions()
                .iter()
                .filter_map(|d| {
                    by_name
                        .get(d.qualified_name.as_str())
                        .map(|u| (d.qualified_name.clone(), u.id.clone()))
                })
                .collect();
            files.push(FileInfo {
                path,
                module: module_name(path),
                tree,
                ids,
            });
        }
        graph.merge(build_from_files(&files));
    }
    for u in shadowed {
        graph.add_node(&u.id, &u.path, &u.qualified_name);
    }
    graph
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDelta {
    pub added_edges: BTreeSet<NamedEdge>,
    pub removed_edges: BTreeSet<NamedEdge>,
}

impl GraphDelta {
    pub fn is_empty(&self) -> bool {
        self.added_edges.is_empty() && self.removed_edges.is_empty()
    }
}

pub fn graph_delta(before: &DepGraph, after: &DepGraph) -> GraphDelta {
    let b = before.named_edges();
    let a = after.named_edges();
    GraphDelta {
        added_edges: a.difference(&b).cloned().collect(),
        removed_edges: b.difference(&a).cloned().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiPropagation {
    pub detected: bool,
    /// `module:qualified_name` of units whose signature changed and whose
    /// modified callers span two or more modules.
    pub changed_apis: Vec<String>,
}

/// A signature change whose before-state callers were also modified, at
/// least two of them and in at least two distinct modules.
pub fn detect_api_propagation(pr: &PullRequest, before_graph: &DepGraph) -> Result<ApiPropagation> {
    let mods = modified_definitions(pr)?;
    let modified: BTreeSet<(String, String)> = mods
        .iter()
        .map(|m| (m.path.clone(), m.qualified_name.clone()))
        .collect();
    let mut changed_apis = Vec::new();
    for m in &mods {
        let (Some(b), Some(a)) = (&m.before, &m.after) else {
            continue;
        };
        if b.signature == a.signature {
            continue;
        }
        let Some(id) = before_graph.nodes().iter().find(|id| {
            before_graph.path_of(id) == Some(m.path.as_str())
                && before_graph.qualified_name(id) == Some(m.qualified_name.as_str())
        }) else {
            continue;
        };
        let callers: Vec<&str> = before_graph
            .callers_of(id)
            .into_iter()
            .filter(|c| {
                let key = (
                    before_graph.path_of(c).unwrap_or_default().to_string(),
                    before_graph.qualified_name(c).unwrap_or_default().to_string(),
                );
                modified.contains(&key)
            })
            .collect();
        let modules: BTreeSet<&str> = callers.iter().filter_map(|c| before_graph.module_of(c)).collect();
        if callers.len() >= 2 && modules.len() >= 2 {
            changed_apis.push(format!("{}:{}", module_name(&m.path), m.qualified_name));
        }
    }
    Ok(ApiPropagation {
        detected: !changed_apis.is_empty(),
        changed_apis,
    })
}

/// Unordered unit pairs changed together in at least `m` commits and not
/// joined by any edge of `graph`. Pairs are returned as `(smaller, larger)`.
pub fn detect_cochange(history: &[BTreeSet<String>], graph: &DepGraph, m: usize) -> Result<Vec<(String, String)>> {
    if m < 2 {
        return Err(Error::domain(format!("co-change threshold must be >= 2, got {m}")));
    }
    let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for commit in history {
        let ids: Vec<&String> = commit.iter().collect();
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                *counts.entry((ids[i], ids[j])).or_default() += 1;
            }
        }
    }
    Ok(counts
        .into_iter()
        .filter(|&((a, b), n)| n >= m && !graph.connected(a, b))
        .map(|((a, b), _)| (a.to_string(), b.to_string()))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Restructuring {
    pub detected: bool,
    pub added: Vec<NamedEdge>,
    pub removed: Vec<NamedEdge>,
}

pub fn detect_restructuring(delta: &GraphDelta) -> Restructuring {
    Restructuring {
        detected: !delta.is_empty(),
        added: delta.added_edges.iter().cloned().collect(),
        removed: delta.removed_edges.iter().cloned().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::HASH;

    fn snapshot(files: &[(&str, &str)]) -> RepoSnapshot {
        RepoSnapshot {
            repo: "org/repo".into(),
            commit_hash: HASH.into(),
            files: files.iter().map(|(p, t)| (p.to_string(), t.to_string())).collect(),
        }
    }

    fn named(g: &DepGraph) -> Vec<(String, String, EdgeKind)> {
        g.edges()
            .iter()
            .map(|e| {
                (
                    g.qualified_name(&e.src).unwrap().to_string(),
                    g.qualified_name(&e.dst).unwrap().to_string(),
                    e.kind,
                )
            })
            .collect()
    }

    #[test]
    fn call_edge() {
        let g = build_graph(&snapshot(&[("m.py", "def g(): pass\ndef f(): g()\n")]));
        assert_eq!(named(&g), [("f".into(), "g".into(), EdgeKind::Call)]);
    }

    #[test]
    fn inherit_edge() {
        let g = build_graph(&snapshot(&[("m.py", "class A:\n    pass\nclass B(A): pass\n")]));
        assert_eq!(named(&g), [("B".into(), "A".into(), EdgeKind::Inherit)]);
    }

    #[test]
    fn unresolvable_call_has_no_edge() {
        let g = build_graph(&snapshot(&[("m.py", "def f():\n    print(len(x))\n    obj.run()\n")]));
        assert!(g.edges().is_empty());
        assert_eq!(g.nodes().len(), 1);
    }

    #[test]
    fn recursion_gives_self_loop_only_when_present() {
        let g = build_graph(&snapshot(&[("m.py", "def f(n):\n    return f(n - 1)\ndef h():\n    pass\n")]));
        assert_eq!(named(&g), [("f".into(), "f".into(), EdgeKind::Call)]);
    }

    #[test]
    fn methods_and_imports_resolve() {
        let g = build_graph(&snapshot(&[
            ("pkg/a.py", "def helper():\n    pass\n\nclass Base:\n    def run(self):\n        return self.step()\n    def step(self):\n        pass\n"),
            ("pkg/b.py", "from pkg.a import helper, Base as B\nimport pkg.a as amod\n\nclass Child(B):\n    def go(self):\n        helper()\n        amod.helper()\n"),
        ]));
        let edges = named(&g);
        assert!(edges.contains(&("Base.run".into(), "Base.step".into(), EdgeKind::Call)));
        assert!(edges.contains(&("Child".into(), "Base".into(), EdgeKind::Inherit)));
        assert!(edges.contains(&("Child.go".into(), "helper".into(), EdgeKind::Call)));
        assert!(edges.contains(&("Child.go".into(), "helper".into(), EdgeKind::Import)));
        let cross: BTreeSet<&str> = g.nodes().iter().map(String::as_str).collect();
        assert!(g.cross_module_edges(&cross).count() >= 3);
    }

    #[test]
    fn relative_import() {
        let g = build_graph(&snapshot(&[
            ("pkg/a.py", "def helper():\n    pass\n"),
            ("pkg/b.py", "from .a import helper\ndef f():\n    helper()\n"),
        ]));
        assert!(named(&g).contains(&("f".into(), "helper".into(), EdgeKind::Call)));
    }

    #[test]
    fn edge_list_sorted_tab_separated() {
        let g = build_graph(&snapshot(&[("m.py", "def g(): pass\ndef f(): g()\n")]));
        let dump = g.edge_list();
        assert_eq!(dump.lines().count(), 1);
        assert!(dump.ends_with("\tcall\n"));
    }

    #[test]
    fn delta_cases() {
        let base = build_graph(&snapshot(&[("m.py", "def g(): pass\ndef h(): pass\ndef f(): g()\n")]));
        assert!(graph_delta(&base, &base).is_empty());
        let added = build_graph(&snapshot(&[("m.py", "def g(): pass\ndef h(): pass\ndef f():\n    g()\n    h()\n")]));
        let d = graph_delta(&base, &added);
        assert_eq!(d.added_edges.len(), 1);
        assert!(d.removed_edges.is_empty());
        let retarget = build_graph(&snapshot(&[("m.py", "def g(): pass\ndef h(): pass\ndef f(): h()\n")]));
        let d = graph_delta(&base, &retarget);
        assert_eq!((d.added_edges.len(), d.removed_edges.len()), (1, 1));
        let r = detect_restructuring(&d);
        assert!(r.detected);
        assert_eq!((r.added.len(), r.removed.len()), (1, 1));
        assert!(!detect_restructuring(&GraphDelta::default()).detected);
    }

    #[test]
    fn removed_import_edge_is_restructuring() {
        let before = build_graph(&snapshot(&[
            ("a.py", "def helper():\n    pass\n"),
            ("b.py", "from a import helper\ndef f():\n    return helper\n"),
        ]));
        let after = build_graph(&snapshot(&[
            ("a.py", "def helper():\n    pass\n"),
            ("b.py", "def f():\n    return None\n"),
        ]));
        let d = graph_delta(&before, &after);
        assert_eq!(d.removed_edges.len(), 1);
        assert_eq!(d.removed_edges.iter().next().unwrap().kind, EdgeKind::Import);
        assert!(detect_restructuring(&d).detected);
    }

    #[test]
    fn cochange() {
        let mut g = DepGraph::default();
        for id in ["u", "v", "w"] {
            g.add_node(id, "m.py", id);
        }
        let c = |ids: &[&str]| ids.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        let history = vec![c(&["u", "v"]), c(&["u", "v", "w"]), c(&["v", "u"])];
        assert_eq!(detect_cochange(&history, &g, 2).unwrap(), [("u".to_string(), "v".to_string())]);
        g.add_edge("u", "v", EdgeKind::Call).unwrap();
        assert!(detect_cochange(&history, &g, 2).unwrap().is_empty());
        assert!(detect_cochange(&[], &g, 2).unwrap().is_empty());
        assert!(detect_cochange(&history, &g, 1).is_err());
    }

    #[test]
    fn edges_outside_graph_rejected() {
        let mut g = DepGraph::default();
        g.add_node("a", "m.py", "a");
        assert!(g.add_edge("a", "zz", EdgeKind::Call).is_err());
    }

    #[test]
    fn unit_graph_matches_snapshot_graph_for_calls() {
        let snap = snapshot(&[("m.py", "def g():\n    pass\n\ndef f():\n    return g()\n")]);
        let tree = syntax::parse_source(&snap.files["m.py"], Language::Python).unwrap();
        let prov = ProvenanceMeta { repo: snap.repo.clone(), commit_hash: HASH.into() };
        let units = syntax::extract_definitions(&tree, "m.py", &prov);
        let g1 = build_graph(&snap);
        let g2 = graph_for_units(&units);
        assert_eq!(g1.edges(), g2.edges());
    }

    #[test]
    fn unit_graph_links_across_commits() {
        let prov = |c: char| ProvenanceMeta { repo: "r".into(), commit_hash: c.to_string().repeat(40) };
        let a = snapshot(&[("m.py", "def g():\n    pass\n")]);
        let b = snapshot(&[("m.py", "def f():\n    return g()\n")]);
        let ua = syntax::extract_definitions(&syntax::parse_source(&a.files["m.py"], Language::Python).unwrap(), "m.py", &prov('a'));
        let ub = syntax::extract_definitions(&syntax::parse_source(&b.files["m.py"], Language::Python).unwrap(), "m.py", &prov('b'));
        let g = graph_for_units(ua.iter().chain(&ub));
        assert!(g.connected(&ub[0].id, &ua[0].id));
        let older = syntax::extract_definitions(&syntax::parse_source(&a.files["m.py"], Language::Python).unwrap(), "m.py", &prov('0'));
        let g = graph_for_units(ua.iter().chain(&ub).chain(&older));
        assert!(g.nodes().contains(&older[0].id));
        assert!(g.neighbors(&older[0].id).is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn program() -> impl Strategy<Value = String> {
            proptest::collection::vec(proptest::collection::vec(0usize..6, 0..4), 1..6).prop_map(|calls| {
                let mut src = String::new();
                for (i, cs) in calls.iter().enumerate() {
                    src.push_str(&format!("def f{i}(x):\n"));
                    for c in cs {
                        src.push_str(&format!("    f{c}(x)\n"));
                    }
                    src.push_str("    return x\n");
                }
                src
            })
        }

        proptest! {
            #[test]
            fn deterministic_and_sound(a in program(), b in program()) {
                let sa = snapshot(&[("m.py", &a)]);
                let sb = snapshot(&[("m.py", &b)]);
                let ga = build_graph(&sa);
                prop_assert_eq!(&ga, &build_graph(&sa));
                let tree = syntax::parse_source(&a, Language::Python).unwrap();
                for e in ga.edges() {
                    let src_def = tree.definitions().into_iter()
                        .find(|d| Some(d.qualified_name.as_str()) == ga.qualified_name(&e.src)).unwrap();
                    let text = tree.text_of(src_def.node.span);
                    let dst_name = ga.qualified_name(&e.dst).unwrap();
                    prop_assert!(text.contains(dst_name.rsplit('.').next().unwrap()));
                }
                let gb = build_graph(&sb);
                let ab = graph_delta(&ga, &gb);
                let ba = graph_delta(&gb, &ga);
                prop_assert_eq!(ab.added_edges, ba.removed_edges);
                prop_assert_eq!(ab.removed_edges, ba.added_edges);
            }
        }
    }
}
