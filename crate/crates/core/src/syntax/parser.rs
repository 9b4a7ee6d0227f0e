use super::lexer::{LogicalLine, Token, TokenKind};
use super::{AstNode, NodeKind};
use crate::corpus::Span;
use crate::error::{Error, Result};

fn syntax(line: usize, msg: &str) -> Error {
    Error::Syntax {
        line,
        message: msg.to_string(),
    }
}

pub(super) fn parse(lines: &[LogicalLine]) -> Result<AstNode> {
    let mut p = Parser { lines, pos: 0 };
    let children = match lines.first() {
        None => Vec::new(),
        Some(first) if first.indent != 0 => return Err(syntax(first.start, "unexpected indent")),
        Some(_) => p.block(0)?,
    };
    let end = lines.last().map_or(1, |l| l.end);
    Ok(AstNode {
        kind: NodeKind::Module,
        name: None,
        span: Span::new(1, end.max(1)),
        children,
        tokens: Vec::new(),
        header_end: 1,
    })
}

struct Parser<'a> {
    lines: &'a [LogicalLine],
    pos: usize,
}

fn keyword_kind(tok: &Token) -> Option<NodeKind> {
    if tok.kind != TokenKind::Name {
        return None;
    }
    Some(match tok.text.as_str() {
        "def" => NodeKind::FunctionDef,
        "class" => NodeKind::ClassDef,
        "if" => NodeKind::If,
        "elif" => NodeKind::Elif,
        "else" => NodeKind::Else,
        "for" => NodeKind::For,
        "while" => NodeKind::While,
        "try" => NodeKind::Try,
        "except" => NodeKind::Except,
        "finally" => NodeKind::Finally,
        "with" => NodeKind::With,
        _ => return None,
    })
}

fn simple_kind(tokens: &[Token]) -> NodeKind {
    match tokens.first() {
        Some(t) if t.is_name("return") => NodeKind::Return,
        Some(t) if t.is_name("import") || t.is_name("from") => NodeKind::Import,
        Some(t) if t.is_op("@") => NodeKind::Decorator,
        _ => NodeKind::Statement,
    }
}

/// `and`/`or` operators and conditional expressions found in `tokens`.
/// `skip` marks a leading keyword that must not be read as an expression.
fn expression_nodes(tokens: &[Token], skip: Option<usize>) -> Vec<AstNode> {
    let mut out = Vec::new();
    let mut ifs = Vec::new();
    let mut elses = 0;
    for (i, t) in tokens.iter().enumerate() {
        if Some(i) == skip || t.kind != TokenKind::Name {
            continue;
        }
        match t.text.as_str() {
            "and" | "or" => out.push(leaf(NodeKind::BooleanOp, t.line, Vec::new())),
            "if" => ifs.push(t.line),
            "else" => elses += 1,
            _ => {}
        }
    }
    // comprehension filters have no `else`; each `else` closes one conditional
    for &line in ifs.iter().take(elses) {
        out.push(leaf(NodeKind::Ternary, line, Vec::new()));
    }
    out.sort_by_key(|n| n.span.start);
    out
}

fn leaf(kind: NodeKind, line: usize, tokens: Vec<Token>) -> AstNode {
    AstNode {
        kind,
        name: None,
        span: Span::new(line, line),
        children: Vec::new(),
        tokens,
        header_end: line,
    }
}

fn split_semicolons(tokens: &[Token]) -> Vec<Vec<Token>> {
    let mut out = vec![Vec::new()];
    for t in tokens {
        if t.depth == 0 && t.is_op(";") {
            out.push(Vec::new());
        } else {
            out.last_mut().unwrap().push(t.clone());
        }
    }
    out.retain(|s| !s.is_empty());
    out
}

fn simple_statements(tokens: &[Token]) -> Vec<AstNode> {
    split_semicolons(tokens)
        .into_iter()
        .map(|stmt| {
            let line = stmt[0].line;
            let end = stmt.last().map_or(line, |t| t.end_line);
            let kind = simple_kind(&stmt);
            let children = expression_nodes(&stmt, None);
            AstNode {
                kind,
                name: None,
                span: Span::new(line, end),
                children,
                tokens: stmt,
                header_end: end,
            }
        })
        .collect()
}

impl<'a> Parser<'a> {
    fn block(&mut self, indent: usize) -> Result<Vec<AstNode>> {
        let mut out = Vec::new();
        while let Some(line) = self.lines.get(self.pos) {
            if line.indent < indent {
                break;
            }
            if line.indent > indent {
                return Err(syntax(line.start, "unexpected indent"));
            }
            self.pos += 1;
            out.extend(self.statement(line)?);
        }
        Ok(out)
    }

    fn statement(&mut self, line: &'a LogicalLine) -> Result<Vec<AstNode>> {
        let toks = &line.tokens;
        let head = usize::from(toks.len() > 1 && toks[0].is_name("async"));
        let compound = keyword_kind(&toks[head]);
        let colon = toks.iter().position(|t| t.depth == 0 && t.is_op(":"));
        let (kind, colon) = match (compound, colon) {
            (Some(kind), Some(c)) => (kind, c),
            (Some(kind), None) => {
                return Err(syntax(line.start, &format!("expected ':' after {kind}")));
            }
            (None, Some(c)) if c == toks.len() - 1 && c > 0 => (NodeKind::Block, c),
            (None, _) => return Ok(simple_statements(toks)),
        };

        let header: Vec<Token> = toks[..=colon].to_vec();
        let header_end = header.last().map_or(line.start, |t| t.end_line);
        let name = match kind {
            NodeKind::FunctionDef | NodeKind::ClassDef => match toks.get(head + 1) {
                Some(t) if t.kind == TokenKind::Name => Some(t.text.clone()),
                _ => return Err(syntax(line.start, &format!("{kind} without a name"))),
            },
            _ => None,
        };
        let skip = (kind != NodeKind::Block).then_some(head);
        let mut children = expression_nodes(&header, skip);

        let inline = &toks[colon + 1..];
        if !inline.is_empty() {
            children.extend(simple_statements(inline));
        } else {
            let Some(next) = self.lines.get(self.pos) else {
                return Err(syntax(line.start, "expected an indented block"));
            };
            if next.indent <= line.indent {
                return Err(syntax(next.start, "expected an indented block"));
            }
            children.extend(self.block(next.indent)?);
            if let Some(after) = self.lines.get(self.pos) {
                if after.indent > line.indent {
                    return Err(syntax(
                        after.start,
                        "unindent does not match any outer indentation level",
                    ));
                }
            }
        }
        let end = children
            .iter()
            .map(|c| c.span.end)
            .max()
            .unwrap_or(line.end)
            .max(line.end);
        Ok(vec![AstNode {
            kind,
            name,
            span: Span::new(line.start, end),
            children,
            tokens: header,
            header_end,
        }])
    }
}
