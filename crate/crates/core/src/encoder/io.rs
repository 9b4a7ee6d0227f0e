//! Binary parameter files: magic, version, dimension record, then every
//! tensor as `rows, cols, f64 LE data`. The vocabulary is stored next to the
//! parameters as a token-per-line file with a `.vocab` suffix.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{EncoderDims, EncoderParams, Layout, Model, SharingMode, Vocabulary};
use crate::autograd::Matrix;
use crate::error::{Error, Result};

pub const PARAMS_MAGIC: &[u8; 8] = b"RAENCODR";
pub const PARAMS_VERSION: u32 = 1;

pub(super) fn to_bytes(params: &EncoderParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.num_scalars() * 8);
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
    let d = &params.dims;
    for v in [d.d, d.layers, d.heads, d.vocab, d.max_len] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(params.mode.code());
    out.extend_from_slice(&(params.tensors.len() as u32).to_le_bytes());
    for t in &params.tensors {
        out.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("parameter file truncated at byte {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub(super) fn from_bytes(bytes: &[u8]) -> Result<EncoderParams> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(8)? != PARAMS_MAGIC {
        return Err(Error::Format("not an encoder parameter file".into()));
    }
    let version = r.u32()?;
    if version != PARAMS_VERSION {
        return Err(Error::Format(format!("unsupported parameter file version {version}")));
    }
    let mut dims = [0usize; 5];
    for v in &mut dims {
        *v = r.u32()? as usize;
    }
    let dims = EncoderDims {
        d: dims[0],
        layers: dims[1],
        heads: dims[2],
        vocab: dims[3],
        max_len: dims[4],
    };
    dims.validate()?;
    let mode_code = r.take(1)?[0];
    let mode = SharingMode::from_code(mode_code)
        .ok_or_else(|| Error::Format(format!("unknown sharing mode code {mode_code}")))?;
    let layout = Layout::new(&dims, mode);
    let count = r.u32()? as usize;
    if count != layout.shapes.len() {
        return Err(Error::Format(format!(
            "expected {} tensors for {mode}, found {count}",
            layout.shapes.len()
        )));
    }
    let mut tensors = Vec::with_capacity(count);
    for &(rows, cols, _) in &layout.shapes {
        let (fr, fc) = (r.u32()? as usize, r.u32()? as usize);
        if (fr, fc) != (rows, cols) {
            return Err(Error::Format(format!(
                "tensor {} has shape {fr}x{fc}, expected {rows}x{cols}",
                tensors.len()
            )));
        }
        let data = (0..rows * cols).map(|_| r.f64()).collect::<Result<Vec<f64>>>()?;
        tensors.push(Matrix::from_shape_vec((rows, cols), data).expect("length checked"));
    }
    if r.at != bytes.len() {
        return Err(Error::Format("trailing bytes after parameter tensors".into()));
    }
    Ok(EncoderParams {
        mode,
        dims,
        tensors,
        layout,
    })
}

pub(super) fn digest(model: &Model) -> String {
    let mut h = Sha256::new();
    h.update(to_bytes(&model.params));
    h.update(model.vocab.to_text().as_bytes());
    hex::encode(h.finalize())
}

fn vocab_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".vocab");
    PathBuf::from(s)
}

/// Writes `path` and `path.vocab`.
pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(&model.params)).map_err(|e| Error::io(path, e))?;
    let vp = vocab_path(path);
    std::fs::write(&vp, model.vocab.to_text()).map_err(|e| Error::io(&vp, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let params = from_bytes(&bytes)?;
    let vp = vocab_path(path);
    let text = std::fs::read_to_string(&vp).map_err(|e| Error::io(&vp, e))?;
    let vocab = Vocabulary::from_text(&text)?;
    if vocab.len() != params.dims.vocab {
        return Err(Error::Format(format!(
            "vocabulary has {} tokens but parameters expect {}",
            vocab.len(),
            params.dims.vocab
        )));
    }
    Ok(Model { params, vocab })
}
