//! Dual-tower transformer encoder with configurable parameter sharing.
//!
//! Each tower is a token-embedding table, a transformer core and an output
//! projection. Which of these the two towers share is set by
//! [`SharingMode`]; aliasing is structural, i.e. both towers hold the same
//! tensor index.

mod io;
pub mod vocab;

use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autograd::{Matrix, Tape, Var};
use crate::error::{Error, Result};

pub use io::{load_model, save_model, PARAMS_MAGIC, PARAMS_VERSION};
pub use vocab::{Modality, Vocabulary, MAX_LEN, PAD};

/// Unit-norm embedding vector.
pub type Embedding = Array1<f64>;

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SharingMode {
    /// One tower, one tokenizer, for both modalities.
    SingleTower,
    /// Two tokenizers over fully shared parameters.
    FullSharing,
    /// Shared core; separate token tables and projections.
    PartialSharing,
    NonSharing,
}

impl SharingMode {
    pub const ALL: [SharingMode; 4] = [
        SharingMode::SingleTower,
        SharingMode::FullSharing,
        SharingMode::PartialSharing,
        SharingMode::NonSharing,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SharingMode::SingleTower => "single-tower",
            SharingMode::FullSharing => "full-sharing",
            SharingMode::PartialSharing => "partial-sharing",
            SharingMode::NonSharing => "non-sharing",
        }
    }

    fn code(&self) -> u8 {
        match self {
            SharingMode::SingleTower => 0,
            SharingMode::FullSharing => 1,
            SharingMode::PartialSharing => 2,
            SharingMode::NonSharing => 3,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

impl fmt::Display for SharingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SharingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
        match key.as_str() {
            "singletower" | "single" => Ok(SharingMode::SingleTower),
            "fullsharing" | "full" => Ok(SharingMode::FullSharing),
            "partialsharing" | "partial" => Ok(SharingMode::PartialSharing),
            "nonsharing" | "none" | "non" => Ok(SharingMode::NonSharing),
            _ => Err(Error::domain(format!("unknown sharing mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDims {
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    pub vocab: usize,
    pub max_len: usize,
}

impl EncoderDims {
    pub fn new(d: usize, layers: usize, heads: usize, vocab: usize) -> Self {
        EncoderDims {
            d,
            layers,
            heads,
            vocab,
            max_len: MAX_LEN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.layers == 0 || self.heads == 0 || self.vocab == 0 || self.max_len < 2 {
            return Err(Error::domain(format!("encoder dimensions must be positive: {self:?}")));
        }
        if !self.d.is_multiple_of(self.heads) {
            return Err(Error::domain(format!(
                "width {} is not divisible by {} heads",
                self.d, self.heads
            )));
        }
        Ok(())
    }

    fn ffn(&self) -> usize {
        2 * self.d
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct LayerIds {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct CoreIds {
    pos: usize,
    layers: Vec<LayerIds>,
    lnf_g: usize,
    lnf_b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Tower {
    core: usize,
    embed: usize,
    proj: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Normal,
    Ones,
    Zeros,
}

/// Which tensors make up each tower, and how each tensor is initialised.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    shapes: Vec<(usize, usize, Init)>,
    cores: Vec<CoreIds>,
    token_tables: Vec<usize>,
    code: Tower,
    text: Tower,
}

impl Layout {
    fn new(dims: &EncoderDims, mode: SharingMode) -> Self {
        let mut shapes = Vec::new();
        let mut add = |r: usize, c: usize, init: Init| {
            shapes.push((r, c, init));
            shapes.len() - 1
        };
        let (d, f) = (dims.d, dims.ffn());
        let core = |add: &mut dyn FnMut(usize, usize, Init) -> usize| CoreIds {
            pos: add(dims.max_len, d, Init::Normal),
            layers: (0..dims.layers)
                .map(|_| LayerIds {
                    ln1_g: add(1, d, Init::Ones),
                    ln1_b: add(1, d, Init::Zeros),
                    wq: add(d, d, Init::Normal),
                    wk: add(d, d, Init::Normal),
                    wv: add(d, d, Init::Normal),
                    wo: add(d, d, Init::Normal),
                    ln2_g: add(1, d, Init::Ones),
                    ln2_b: add(1, d, Init::Zeros),
                    w1: add(d, f, Init::Normal),
                    b1: add(1, f, Init::Zeros),
                    w2: add(f, d, Init::Normal),
                    b2: add(1, d, Init::Zeros),
                })
                .collect(),
            lnf_g: add(1, d, Init::Ones),
            lnf_b: add(1, d, Init::Zeros),
        };
        let shared_core = !matches!(mode, SharingMode::NonSharing);
        let shared_heads = matches!(mode, SharingMode::SingleTower | SharingMode::FullSharing);
        let mut cores = vec![core(&mut add)];
        let code_embed = add(dims.vocab, d, Init::Normal);
        let code_proj = add(d, d, Init::Normal);
        let (text_embed, text_proj) = if shared_heads {
            (code_embed, code_proj)
        } else {
            (add(dims.vocab, d, Init::Normal), add(d, d, Init::Normal))
        };
        if !shared_core {
            cores.push(core(&mut add));
        }
        let mut token_tables = vec![code_embed];
        if text_embed != code_embed {
            token_tables.push(text_embed);
        }
        Layout {
            shapes,
            cores,
            token_tables,
            code: Tower {
                core: 0,
                embed: code_embed,
                proj: code_proj,
            },
            text: Tower {
                core: if shared_core { 0 } else { 1 },
                embed: text_embed,
                proj: text_proj,
            },
        }
    }
}

/// Encoder weights. Tensors are stored once; towers refer to them by index.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub mode: SharingMode,
    pub dims: EncoderDims,
    pub tensors: Vec<Matrix>,
    layout: Layout,
}

pub fn init_params(dims: EncoderDims, mode: SharingMode, seed: u64) -> Result<EncoderParams> {
    dims.validate()?;
    let layout = Layout::new(&dims, mode);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("positive std");
    let tensors = layout
        .shapes
        .iter()
        .map(|&(r, c, init)| match init {
            Init::Normal => Matrix::from_shape_simple_fn((r, c), || normal.sample(&mut rng)),
            Init::Ones => Matrix::ones((r, c)),
            Init::Zeros => Matrix::zeros((r, c)),
        })
        .collect();
    Ok(EncoderParams {
        mode,
        dims,
        tensors,
        layout,
    })
}

impl EncoderParams {
    fn tower(&self, modality: Modality) -> Tower {
        match modality {
            Modality::Code => self.layout.code,
            Modality::Text if self.mode == SharingMode::SingleTower => self.layout.code,
            Modality::Text => self.layout.text,
        }
    }

    /// Tokenizer used for a modality: the single tower reads everything as code.
    pub fn tokenizer_modality(&self, modality: Modality) -> Modality {
        match self.mode {
            SharingMode::SingleTower => Modality::Code,
            _ => modality,
        }
    }

    /// Tensor indices of the token-embedding tables.
    pub fn token_tables(&self) -> &[usize] {
        &self.layout.token_tables
    }

    pub fn embedding_table(&self, modality: Modality) -> usize {
        self.tower(modality).embed
    }

    pub fn projection(&self, modality: Modality) -> usize {
        self.tower(modality).proj
    }

    /// Tensor indices of the transformer core a modality runs through.
    pub fn core_tensors(&self, modality: Modality) -> Vec<usize> {
        let c = &self.layout.cores[self.tower(modality).core];
        let mut out = vec![c.pos, c.lnf_g, c.lnf_b];
        for l in &c.layers {
            out.extend([l.ln1_g, l.ln1_b, l.wq, l.wk, l.wv, l.wo, l.ln2_g, l.ln2_b, l.w1, l.b1, l.w2, l.b2]);
        }
        out
    }

    /// Indices of every tensor that holds normally initialised weights.
    pub fn weight_tensors(&self) -> Vec<usize> {
        (0..self.tensors.len())
            .filter(|&i| self.layout.shapes[i].2 == Init::Normal)
            .collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        if ids.is_empty() || ids.iter().all(|&i| i == PAD) {
            return Err(Error::domain("cannot encode an empty or all-padding sequence"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.dims.vocab) {
            return Err(Error::domain(format!(
                "token index {bad} outside vocabulary of {}",
                self.dims.vocab
            )));
        }
        Ok(())
    }

    /// Records the forward pass for one sequence on `tape`; returns a `1 x d`
    /// unit-norm row.
    pub fn forward(&self, tape: &mut Tape<'_>, modality: Modality, ids: &[usize]) -> Result<Var> {
        self.check_ids(ids)?;
        let ids = &ids[..ids.len().min(self.dims.max_len)];
        let tower = self.tower(modality);
        let core = &self.layout.cores[tower.core];
        let n = ids.len();
        let d = self.dims.d;
        let hd = d / self.dims.heads;
        let tok = tape.gather(tower.embed, ids);
        let positions: Vec<usize> = (0..n).collect();
        let pos = tape.gather(core.pos, &positions);
        let mut x = tape.add(tok, pos);
        for l in &core.layers {
            let (g, b) = (tape.param(l.ln1_g), tape.param(l.ln1_b));
            let h = tape.layer_norm(x, g, b);
            let (wq, wk, wv, wo) = (tape.param(l.wq), tape.param(l.wk), tape.param(l.wv), tape.param(l.wo));
            let q = tape.matmul(h, wq);
            let k = tape.matmul(h, wk);
            let v = tape.matmul(h, wv);
            let heads: Vec<Var> = (0..self.dims.heads)
                .map(|i| {
                    let qh = tape.col_slice(q, i * hd, hd);
                    let kh = tape.col_slice(k, i * hd, hd);
                    let vh = tape.col_slice(v, i * hd, hd);
                    let scores = tape.matmul_t(qh, kh);
                    let scores = tape.scale(scores, 1.0 / (hd as f64).sqrt());
                    let att = tape.softmax_rows(scores);
                    tape.matmul(att, vh)
                })
                .collect();
            let cat = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads) };
            let att_out = tape.matmul(cat, wo);
            x = tape.add(x, att_out);
            let (g, b) = (tape.param(l.ln2_g), tape.param(l.ln2_b));
            let h = tape.layer_norm(x, g, b);
            let (w1, b1, w2, b2) = (tape.param(l.w1), tape.param(l.b1), tape.param(l.w2), tape.param(l.b2));
            let h = tape.matmul(h, w1);
            let h = tape.add_row(h, b1);
            let h = tape.gelu(h);
            let h = tape.matmul(h, w2);
            let h = tape.add_row(h, b2);
            x = tape.add(x, h);
        }
        let (g, b) = (tape.param(core.lnf_g), tape.param(core.lnf_b));
        let x = tape.layer_norm(x, g, b);
        let pooled = tape.mean_rows(x);
        let proj = tape.param(tower.proj);
        let out = tape.matmul(pooled, proj);
        Ok(tape.l2_normalize_rows(out))
    }

    pub fn encode(&self, modality: Modality, ids: &[usize]) -> Result<Embedding> {
        let mut tape = Tape::new(&self.tensors);
        let v = self.forward(&mut tape, modality, ids)?;
        Ok(tape.value(v).row(0).to_owned())
    }
}

pub fn encode_code(ids: &[usize], params: &EncoderParams) -> Result<Embedding> {
    params.encode(Modality::Code, ids)
}

pub fn encode_text(ids: &[usize], params: &EncoderParams) -> Result<Embedding> {
    params.encode(Modality::Text, ids)
}

/// Encoder parameters together with the vocabulary they were trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: EncoderParams,
    pub vocab: Vocabulary,
}

impl Model {
    pub fn tokenize(&self, text: &str, modality: Modality) -> Vec<usize> {
        self.vocab.tokenize(text, self.params.tokenizer_modality(modality))
    }

    pub fn embed(&self, text: &str, modality: Modality) -> Result<Embedding> {
        self.params.encode(modality, &self.tokenize(text, modality))
    }

    pub fn embed_code(&self, source: &str) -> Result<Embedding> {
        self.embed(source, Modality::Code)
    }

    pub fn embed_text(&self, query: &str) -> Result<Embedding> {
        self.embed(query, Modality::Text)
    }

    /// Hex SHA-256 over the serialized parameters and vocabulary.
    pub fn digest(&self) -> String {
        io::digest(self)
    }
}

#[cfg(test)]
mod tests;
