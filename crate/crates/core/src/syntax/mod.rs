//! Syntax trees for a Python-style subset: `def`, `class`, `if`/`elif`/`else`,
//! `for`, `while`, `try`/`except`/`finally`, `with`, `return` and plain
//! statements, with indentation-delimited blocks.
//!
//! Besides parsing, this module extracts definition units, locates the
//! smallest definition enclosing a line range, and computes McCabe
//! cyclomatic complexity.

mod lexer;
mod parser;

use std::fmt;

use sha2::{Digest, Sha256};

use crate::corpus::{CodeUnit, ProvenanceMeta, Span, UnitKind};
use crate::error::{Error, Result};

pub use lexer::{LineClass, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Language {
    Python,
}

impl std::str::FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "python" | "py" => Ok(Language::Python),
            other => Err(Error::domain(format!("unsupported language {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Module,
    FunctionDef,
    ClassDef,
    If,
    Elif,
    Else,
    For,
    While,
    Try,
    Except,
    Finally,
    With,
    /// Any other compound header ending in `:` (e.g. `match`, `case`).
    Block,
    Return,
    Import,
    Decorator,
    Statement,
    BooleanOp,
    Ternary,
}

impl NodeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeKind::Module => "module",
            NodeKind::FunctionDef => "function_def",
            NodeKind::ClassDef => "class_def",
            NodeKind::If => "if",
            NodeKind::Elif => "elif",
            NodeKind::Else => "else",
            NodeKind::For => "for",
            NodeKind::While => "while",
            NodeKind::Try => "try",
            NodeKind::Except => "except",
            NodeKind::Finally => "finally",
            NodeKind::With => "with",
            NodeKind::Block => "block",
            NodeKind::Return => "return",
            NodeKind::Import => "import",
            NodeKind::Decorator => "decorator",
            NodeKind::Statement => "statement",
            NodeKind::BooleanOp => "boolean_op",
            NodeKind::Ternary => "ternary",
        }
    }

    pub fn is_definition(&self) -> bool {
        matches!(self, NodeKind::FunctionDef | NodeKind::ClassDef)
    }

    /// Contributes one to cyclomatic complexity.
    pub fn is_decision_point(&self) -> bool {
        matches!(
            self,
            NodeKind::If
                | NodeKind::Elif
                | NodeKind::For
                | NodeKind::While
                | NodeKind::Except
                | NodeKind::BooleanOp
                | NodeKind::Ternary
        )
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstNode {
    pub kind: NodeKind,
    pub name: Option<String>,
    pub span: Span,
    pub children: Vec<AstNode>,
    /// Tokens of the node's own logical line (header for compound nodes).
    pub tokens: Vec<Token>,
    /// Last line of the header; equals `span.start` for one-line headers.
    pub header_end: usize,
}

impl AstNode {
    pub fn is_definition(&self) -> bool {
        self.kind.is_definition()
    }

    /// Pre-order walk over the subtree, including `self`.
    pub fn walk(&self) -> impl Iterator<Item = &AstNode> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let node = stack.pop()?;
            stack.extend(node.children.iter().rev());
            Some(node)
        })
    }

    /// Pre-order walk that does not descend into nested definitions
    /// (the nested definition nodes themselves are not yielded either).
    pub fn walk_own_body(&self) -> impl Iterator<Item = &AstNode> {
        let mut stack: Vec<&AstNode> = self.children.iter().rev().collect();
        std::iter::from_fn(move || loop {
            let node = stack.pop()?;
            if node.is_definition() {
                continue;
            }
            stack.extend(node.children.iter().rev());
            return Some(node);
        })
    }

    /// Base-class names written in a `class` header, e.g. `A` and `pkg.B`.
    pub fn class_bases(&self) -> Vec<String> {
        if self.kind != NodeKind::ClassDef {
            return Vec::new();
        }
        let toks = &self.tokens;
        let Some(open) = toks.iter().position(|t| t.is_op("(")) else {
            return Vec::new();
        };
        let base_depth = toks[open].depth + 1;
        let mut out = Vec::new();
        let mut current = String::new();
        for t in &toks[open + 1..] {
            if t.depth < base_depth {
                break;
            }
            if t.depth == base_depth && t.is_op(",") {
                out.push(std::mem::take(&mut current));
                continue;
            }
            if t.depth == base_depth && (t.kind == TokenKind::Name || t.is_op(".")) {
                current.push_str(&t.text);
            } else if t.depth == base_depth && t.is_op("=") {
                // keyword argument such as metaclass=...
                current.clear();
                current.push('=');
            }
        }
        out.push(current);
        out.into_iter()
            .filter(|b| !b.is_empty() && !b.starts_with('='))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxTree {
    pub root: AstNode,
    /// Hex SHA-256 of the parsed text.
    pub source_hash: String,
    lines: Vec<String>,
    classes: Vec<LineClass>,
}

impl SyntaxTree {
    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    pub fn line(&self, n: usize) -> Option<&str> {
        self.lines.get(n.checked_sub(1)?).map(String::as_str)
    }

    pub fn line_class(&self, n: usize) -> Option<LineClass> {
        self.classes.get(n.checked_sub(1)?).copied()
    }

    pub fn text_of(&self, span: Span) -> String {
        let end = span.end.min(self.lines.len());
        if span.start == 0 || span.start > end {
            return String::new();
        }
        self.lines[span.start - 1..end].join("\n")
    }

    /// All definition nodes with their qualified names and kinds, in source order.
    pub fn definitions(&self) -> Vec<Definition<'_>> {
        let mut out = Vec::new();
        collect_definitions(&self.root, &mut Vec::new(), false, &mut out);
        out
    }
}

/// A definition node with its scope-qualified name.
#[derive(Debug, Clone)]
pub struct Definition<'a> {
    pub node: &'a AstNode,
    pub qualified_name: String,
    pub kind: UnitKind,
}

fn collect_definitions<'a>(
    node: &'a AstNode,
    scope: &mut Vec<String>,
    in_class: bool,
    out: &mut Vec<Definition<'a>>,
) {
    for child in &node.children {
        if child.is_definition() {
            let name = child.name.clone().unwrap_or_default();
            scope.push(name);
            let kind = match child.kind {
                NodeKind::ClassDef => UnitKind::Class,
                _ if in_class => UnitKind::Method,
                _ => UnitKind::Function,
            };
            out.push(Definition {
                node: child,
                qualified_name: scope.join("."),
                kind,
            });
            collect_definitions(child, scope, child.kind == NodeKind::ClassDef, out);
            scope.pop();
        } else {
            collect_definitions(child, scope, in_class, out);
        }
    }
}

pub fn parse_source(text: &str, language: Language) -> Result<SyntaxTree> {
    match language {
        Language::Python => {}
    }
    let lexed = lexer::lex(text)?;
    let root = parser::parse(&lexed.lines)?;
    let mut lines: Vec<String> = text.split('\n').map(|l| l.trim_end_matches('\r').to_string()).collect();
    if text.is_empty() || text.ends_with('\n') {
        lines.pop();
    }
    let mut classes = lexed.classes;
    classes.truncate(lines.len());
    Ok(SyntaxTree {
        root,
        source_hash: hex::encode(Sha256::digest(text.as_bytes())),
        lines,
        classes,
    })
}

/// Tokens of `text` with comments and layout dropped.
pub fn tokenize(text: &str) -> Result<Vec<Token>> {
    Ok(lexer::lex(text)?.lines.into_iter().flat_map(|l| l.tokens).collect())
}

/// Signature text of a definition: its header with whitespace collapsed
/// and the trailing `:` removed.
pub fn signature_of(tree: &SyntaxTree, node: &AstNode) -> String {
    let header = tree.text_of(Span::new(node.span.start, node.header_end));
    let collapsed = header.split_whitespace().collect::<Vec<_>>().join(" ");
    let trimmed = collapsed.trim_end();
    match trimmed.rfind(':') {
        Some(i) if trimmed[i + 1..].trim().is_empty() => trimmed[..i].trim_end().to_string(),
        _ => trimmed.to_string(),
    }
}

/// Identifier for a unit: repository, abbreviated commit, path and qualified name.
pub fn unit_id(provenance: &ProvenanceMeta, path: &str, qualified_name: &str) -> String {
    let short = &provenance.commit_hash[..provenance.commit_hash.len().min(12)];
    format!("{}@{}:{}::{}", provenance.repo, short, path, qualified_name)
}

pub fn extract_definitions(tree: &SyntaxTree, path: &str, provenance: &ProvenanceMeta) -> Vec<CodeUnit> {
    let mut seen = std::collections::HashSet::new();
    tree.definitions()
        .into_iter()
        .map(|d| {
            let mut id = unit_id(provenance, path, &d.qualified_name);
            if !seen.insert(id.clone()) {
                // redefinition of the same name in one file
                id = format!("{id}@L{}", d.node.span.start);
                seen.insert(id.clone());
            }
            CodeUnit {
                id,
                repo: provenance.repo.clone(),
                path: path.to_string(),
                qualified_name: d.qualified_name,
                kind: d.kind,
                span: d.node.span,
                signature: signature_of(tree, d.node),
                source: tree.text_of(d.node.span),
                provenance: provenance.clone(),
            }
        })
        .collect()
}

/// Smallest definition node whose span contains `start..=end`.
pub fn node_at_span(tree: &SyntaxTree, start_line: usize, end_line: usize) -> Option<&AstNode> {
    definition_at_span(tree, start_line, end_line).map(|d| d.node)
}

/// Like [`node_at_span`], also returning the qualified name.
pub fn definition_at_span(tree: &SyntaxTree, start_line: usize, end_line: usize) -> Option<Definition<'_>> {
    if start_line == 0 || start_line > end_line {
        return None;
    }
    let want = Span::new(start_line, end_line);
    tree.definitions()
        .into_iter()
        .filter(|d| d.node.span.contains(want))
        .min_by_key(|d| (d.node.span.len(), std::cmp::Reverse(d.node.span.start)))
}

/// McCabe complexity: 1 + decision points (`if`, `elif`, `for`, `while`,
/// `except`, `and`/`or`, conditional expressions), not counting nested
/// definitions.
pub fn cyclomatic_complexity(node: &AstNode) -> Result<u32> {
    if !node.is_definition() {
        return Err(Error::domain(format!(
            "cyclomatic complexity needs a definition node, got {}",
            node.kind
        )));
    }
    let decisions = node
        .walk_own_body()
        .filter(|n| n.kind.is_decision_point())
        .count();
    Ok(1 + decisions as u32)
}

#[cfg(test)]
mod tests;
