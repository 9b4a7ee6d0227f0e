use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];
pub const MAX_LEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Code,
    Text,
}

/// Token list with the four specials first and the rest sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

const OPERATORS: [&str; 24] = [
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "==", "!=", "<=", ">=", "**", "//", "<<", ">>", "+=", "-=",
    "*=", "/=", "%=", "&=", "|=", "^=", "@=",
];

/// `read_file` -> read _ file, `HTTPServer` -> http server.
fn split_identifier(ident: &str, out: &mut Vec<String>) {
    for (i, part) in ident.split('_').enumerate() {
        if i > 0 {
            out.push("_".into());
        }
        let chars: Vec<char> = part.chars().collect();
        let mut start = 0;
        for j in 1..chars.len() {
            let (prev, cur) = (chars[j - 1], chars[j]);
            let next_lower = chars.get(j + 1).is_some_and(|c| c.is_lowercase());
            let boundary = (prev.is_lowercase() || prev.is_ascii_digit()) && cur.is_uppercase()
                || prev.is_uppercase() && cur.is_uppercase() && next_lower;
            if boundary {
                out.push(chars[start..j].iter().collect::<String>().to_lowercase());
                start = j;
            }
        }
        if start < chars.len() {
            out.push(chars[start..].iter().collect::<String>().to_lowercase());
        }
    }
}

fn code_pieces(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            split_identifier(&chars[start..i].iter().collect::<String>(), &mut out);
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            out.push(chars[start..i].iter().collect());
        } else {
            let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
            let op = OPERATORS.iter().find(|op| rest.starts_with(*op));
            match op {
                Some(op) => {
                    out.push(op.to_string());
                    i += op.chars().count();
                }
                None => {
                    out.push(c.to_string());
                    i += 1;
                }
            }
        }
    }
    out
}

fn text_pieces(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Surface tokens of `text` before vocabulary lookup.
pub fn pieces(text: &str, modality: Modality) -> Vec<String> {
    match modality {
        Modality::Code => code_pieces(text),
        Modality::Text => text_pieces(text),
    }
}

impl Vocabulary {
    pub fn build<'a>(texts: impl IntoIterator<Item = (&'a str, Modality)>) -> Self {
        let mut set = BTreeSet::new();
        for (text, modality) in texts {
            set.extend(pieces(text, modality));
        }
        set.retain(|t| !SPECIALS.contains(&t.as_str()));
        let tokens = SPECIALS.iter().map(|s| s.to_string()).chain(set).collect();
        Self::from_list(tokens).expect("built lists are well-formed")
    }

    fn from_list(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Format("vocabulary must start with <pad> <unk> <bos> <eos>".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    /// Token indices framed by BOS/EOS, at most [`MAX_LEN`] long.
    pub fn tokenize(&self, text: &str, modality: Modality) -> Vec<usize> {
        let mut ids = vec![BOS];
        ids.extend(
            pieces(text, modality)
                .iter()
                .take(MAX_LEN - 2)
                .map(|p| self.index_of(p)),
        );
        ids.push(EOS);
        ids
    }

    /// One token per line.
    pub fn to_text(&self) -> String {
        self.tokens.iter().map(|t| format!("{t}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_list(text.lines().map(String::from).collect())
    }
}
