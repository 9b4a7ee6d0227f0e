//! Line-aware tokenizer for the Python-style subset.
//!
//! Produces logical lines: physical lines joined across open brackets and
//! backslash continuations, with comments removed and string literals kept
//! as single tokens.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Name,
    Number,
    Str,
    Op,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: usize,
    pub end_line: usize,
    /// Bracket nesting depth at the token (opening brackets carry the outer depth).
    pub depth: usize,
}

impl Token {
    pub fn is_name(&self, s: &str) -> bool {
        self.kind == TokenKind::Name && self.text == s
    }

    pub fn is_op(&self, s: &str) -> bool {
        self.kind == TokenKind::Op && self.text == s
    }
}

#[derive(Debug, Clone)]
pub struct LogicalLine {
    pub start: usize,
    pub end: usize,
    pub indent: usize,
    pub tokens: Vec<Token>,
}

/// What a physical line holds once tokenized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineClass {
    Blank,
    Comment,
    /// Only string-literal content (docstrings and their continuation lines).
    StringOnly,
    Code,
}

const OPERATORS: [&str; 24] = [
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "==", "!=", "<=", ">=", "**", "//", "<<", ">>",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=",
];

const STRING_PREFIXES: [&str; 12] = [
    "rb", "br", "fr", "rf", "Rb", "bR", "RB", "BR", "r", "b", "f", "u",
];

#[derive(Debug)]
pub struct Lexed {
    pub lines: Vec<LogicalLine>,
    pub classes: Vec<LineClass>,
}

pub fn lex(text: &str) -> Result<Lexed> {
    Lexer::new(text).run()
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    depth: usize,
    brackets: Vec<(char, usize)>,
    out: Vec<LogicalLine>,
    current: Vec<Token>,
    current_start: usize,
    current_indent: usize,
    at_line_start: bool,
    has_code: Vec<bool>,
    has_string: Vec<bool>,
    has_comment: Vec<bool>,
}

impl Lexer {
    fn new(text: &str) -> Self {
        let physical = text.split('\n').count();
        Lexer {
            chars: text.chars().collect(),
            pos: 0,
            line: 1,
            depth: 0,
            brackets: Vec::new(),
            out: Vec::new(),
            current: Vec::new(),
            current_start: 1,
            current_indent: 0,
            at_line_start: true,
            has_code: vec![false; physical + 1],
            has_string: vec![false; physical + 1],
            has_comment: vec![false; physical + 1],
        }
    }

    fn peek(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(i, c)| self.peek(i) == Some(c))
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Syntax {
            line,
            message: msg.into(),
        }
    }

    fn push(&mut self, kind: TokenKind, text: String, line: usize) {
        if self.current.is_empty() {
            self.current_start = line;
        }
        let end_line = self.line;
        for l in line..=end_line {
            if kind == TokenKind::Str {
                self.has_string[l] = true;
            } else {
                self.has_code[l] = true;
            }
        }
        self.current.push(Token {
            kind,
            text,
            line,
            end_line,
            depth: self.depth,
        });
    }

    fn finish_logical(&mut self) {
        if !self.current.is_empty() {
            let tokens = std::mem::take(&mut self.current);
            let end = tokens.last().map(|t| t.end_line).unwrap_or(self.line);
            self.out.push(LogicalLine {
                start: self.current_start,
                end,
                indent: self.current_indent,
                tokens,
            });
        }
    }

    fn run(mut self) -> Result<Lexed> {
        while self.pos < self.chars.len() {
            if self.at_line_start && self.depth == 0 {
                self.read_indent();
                self.at_line_start = false;
                continue;
            }
            let c = self.chars[self.pos];
            match c {
                '\n' => {
                    self.pos += 1;
                    if self.depth == 0 {
                        self.finish_logical();
                        self.at_line_start = true;
                    }
                    self.line += 1;
                }
                ' ' | '\t' | '\r' | '\x0c' => self.pos += 1,
                '#' => {
                    self.has_comment[self.line] = true;
                    while self.pos < self.chars.len() && self.chars[self.pos] != '\n' {
                        self.pos += 1;
                    }
                }
                '\\' if self.peek(1) == Some('\n')
                    || (self.peek(1) == Some('\r') && self.peek(2) == Some('\n')) =>
                {
                    self.pos += if self.peek(1) == Some('\n') { 2 } else { 3 };
                    self.line += 1;
                }
                _ if self.string_prefix_len().is_some() => self.read_string()?,
                _ if c.is_alphabetic() || c == '_' => {
                    let start = self.pos;
                    while self
                        .peek(0)
                        .is_some_and(|ch| ch.is_alphanumeric() || ch == '_')
                    {
                        self.pos += 1;
                    }
                    let text: String = self.chars[start..self.pos].iter().collect();
                    self.push(TokenKind::Name, text, self.line);
                }
                _ if c.is_ascii_digit()
                    || (c == '.' && self.peek(1).is_some_and(|d| d.is_ascii_digit())) =>
                {
                    let start = self.pos;
                    while self
                        .peek(0)
                        .is_some_and(|ch| ch.is_alphanumeric() || ch == '_' || ch == '.')
                    {
                        self.pos += 1;
                    }
                    let text: String = self.chars[start..self.pos].iter().collect();
                    self.push(TokenKind::Number, text, self.line);
                }
                '(' | '[' | '{' => {
                    self.pos += 1;
                    self.push(TokenKind::Op, c.to_string(), self.line);
                    self.brackets.push((c, self.line));
                    self.depth += 1;
                }
                ')' | ']' | '}' => {
                    let want = match c {
                        ')' => '(',
                        ']' => '[',
                        _ => '{',
                    };
                    match self.brackets.pop() {
                        Some((open, _)) if open == want => {}
                        _ => return Err(self.err(self.line, format!("unmatched '{c}'"))),
                    }
                    self.depth -= 1;
                    self.pos += 1;
                    self.push(TokenKind::Op, c.to_string(), self.line);
                }
                _ => {
                    let op = OPERATORS
                        .iter()
                        .find(|op| self.starts_with(op))
                        .map(|s| s.to_string())
                        .unwrap_or_else(|| c.to_string());
                    if c == '\\' {
                        return Err(self.err(self.line, "unexpected character after line continuation"));
                    }
                    self.pos += op.chars().count();
                    self.push(TokenKind::Op, op, self.line);
                }
            }
        }
        if let Some(&(open, line)) = self.brackets.last() {
            return Err(self.err(line, format!("'{open}' was never closed")));
        }
        self.finish_logical();
        let physical = self.has_code.len() - 1;
        let classes = (1..=physical)
            .map(|l| {
                if self.has_code[l] {
                    LineClass::Code
                } else if self.has_string[l] {
                    LineClass::StringOnly
                } else if self.has_comment[l] {
                    LineClass::Comment
                } else {
                    LineClass::Blank
                }
            })
            .collect();
        Ok(Lexed {
            lines: self.out,
            classes,
        })
    }

    fn read_indent(&mut self) {
        let mut width = 0;
        while let Some(c) = self.peek(0) {
            match c {
                ' ' => width += 1,
                '\t' => width = (width / 8 + 1) * 8,
                '\x0c' => width = 0,
                _ => break,
            }
            self.pos += 1;
        }
        if self.current.is_empty() {
            self.current_indent = width;
        }
    }

    fn string_prefix_len(&self) -> Option<usize> {
        let c = self.peek(0)?;
        if c == '"' || c == '\'' {
            return Some(0);
        }
        // a prefix only counts when it is not the tail of a longer name
        if self.pos > 0 {
            let prev = self.chars[self.pos - 1];
            if prev.is_alphanumeric() || prev == '_' {
                return None;
            }
        }
        STRING_PREFIXES.iter().find_map(|p| {
            let n = p.chars().count();
            let lower_match = p
                .chars()
                .enumerate()
                .all(|(i, pc)| self.peek(i).is_some_and(|c| c.eq_ignore_ascii_case(&pc)));
            let quote = self.peek(n);
            (lower_match && matches!(quote, Some('"') | Some('\''))).then_some(n)
        })
    }

    fn read_string(&mut self) -> Result<()> {
        let start_line = self.line;
        let start = self.pos;
        self.pos += self.string_prefix_len().unwrap_or(0);
        let quote = self.chars[self.pos];
        let triple = self.peek(1) == Some(quote) && self.peek(2) == Some(quote);
        self.pos += if triple { 3 } else { 1 };
        loop {
            let Some(c) = self.peek(0) else {
                return Err(self.err(start_line, "unterminated string literal"));
            };
            match c {
                '\\' => {
                    if self.peek(1) == Some('\n') {
                        self.line += 1;
                    }
                    self.pos += 2;
                }
                '\n' if !triple => {
                    return Err(self.err(start_line, "unterminated string literal"));
                }
                '\n' => {
                    self.line += 1;
                    self.pos += 1;
                }
                _ if c == quote => {
                    if !triple {
                        self.pos += 1;
                        break;
                    }
                    if self.peek(1) == Some(quote) && self.peek(2) == Some(quote) {
                        self.pos += 3;
                        break;
                    }
                    self.pos += 1;
                }
                _ => self.pos += 1,
            }
        }
        let text: String = self.chars[start..self.pos.min(self.chars.len())].iter().collect();
        self.push(TokenKind::Str, text, start_line);
        Ok(())
    }
}
