//! Versioned binary checkpoint container, shared by dense and sparse models.
//!
//! ```text
//! magic      8 bytes  "LWX3CKPT"
//! version    u32      1
//! flags      u32      bit 0: sparse payloads allowed
//! digest     32 bytes SHA-256 of the config text
//! config     u32 length + UTF-8 `key = value` model config
//! meta       u32 length + UTF-8 free-form provenance
//! count      u32      number of tensor records
//! record     u16 name length + name, u8 dtype (0 = f32), u8 encoding
//!            (0 dense, 1 sparse), u8 kind, u8 ndim, ndim x u32 dims,
//!            payload
//! ```
//!
//! A dense payload is the tensor's `f32` values. A sparse payload is a
//! `u32` entry count followed by `(u16 gap, f32 value)` entries: the first
//! gap is the first index, later gaps are index deltas. Gaps wider than
//! `u16::MAX` are bridged with zero-valued filler entries, which decoding
//! drops. All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::net::LeadwiseNet;
use crate::model::params::{ParamKind, Parameterized};
use crate::rng::Stream;

pub const MAGIC: &[u8; 8] = b"LWX3CKPT";
pub const VERSION: u32 = 1;
const FLAG_SPARSE: u32 = 1;
const DTYPE_F32: u8 = 0;
const ENC_DENSE: u8 = 0;
const ENC_SPARSE: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Dense,
    /// Pruned weight tensors stored as `(index, value)` pairs whenever that
    /// is smaller than the dense form.
    Sparse,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Dense(Vec<f32>),
    /// Strictly increasing indices of nonzero entries and their values.
    Sparse { indices: Vec<u32>, values: Vec<f32> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTensor {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub payload: Payload,
}

impl StoredTensor {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// The dense values this tensor represents.
    pub fn densify(&self) -> Vec<f32> {
        match &self.payload {
            Payload::Dense(v) => v.clone(),
            Payload::Sparse { indices, values } => {
                let mut out = vec![0.0; self.numel()];
                for (&i, &v) in indices.iter().zip(values) {
                    out[i as usize] = v;
                }
                out
            }
        }
    }

    fn sparse_entries(&self) -> Option<usize> {
        match &self.payload {
            Payload::Dense(_) => None,
            Payload::Sparse { indices, .. } => {
                let mut entries = 0usize;
                let mut prev: Option<u32> = None;
                for &i in indices {
                    let gap = prev.map_or(i, |p| i - p);
                    entries += 1 + (gap as usize).saturating_sub(1) / u16::MAX as usize;
                    prev = Some(i);
                }
                Some(entries)
            }
        }
    }

    /// Encoded payload size in bytes.
    pub fn payload_bytes(&self) -> usize {
        match self.sparse_entries() {
            None => 4 * self.numel(),
            Some(entries) => 4 + 6 * entries,
        }
    }
}

/// Every parameter tensor of a model (trainable and running statistics)
/// plus provenance text.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseModel {
    pub config: ModelConfig,
    pub meta: String,
    pub tensors: Vec<StoredTensor>,
}

impl SparseModel {
    /// Captures a model. In sparse format, conv/FC weight tensors containing
    /// zeros are stored as index/value pairs when that encodes smaller;
    /// everything else stays dense.
    pub fn capture(model: &LeadwiseNet<f32>, format: Format, meta: &str) -> Self {
        let mut tensors = Vec::new();
        model.visit("", &mut |p| {
            let dense = StoredTensor {
                name: p.name,
                kind: p.kind,
                shape: p.shape,
                payload: Payload::Dense(p.value.to_vec()),
            };
            let stored = if format == Format::Sparse && p.kind.is_weight() {
                let (indices, values): (Vec<u32>, Vec<f32>) = p
                    .value
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, &v)| (i as u32, v))
                    .unzip();
                let sparse = StoredTensor {
                    payload: Payload::Sparse { indices, values },
                    ..dense.clone()
                };
                if sparse.payload_bytes() < dense.payload_bytes() {
                    sparse
                } else {
                    dense
                }
            } else {
                dense
            };
            tensors.push(stored);
        });
        Self {
            config: model.config.clone(),
            meta: meta.to_string(),
            tensors,
        }
    }

    pub fn is_sparse(&self) -> bool {
        self.tensors
            .iter()
            .any(|t| matches!(t.payload, Payload::Sparse { .. }))
    }

    /// Rebuilds the dense model.
    pub fn densify(&self) -> Result<LeadwiseNet<f32>> {
        let mut model = LeadwiseNet::<f32>::new(self.config.clone(), &Stream::new(0))?;
        let mut it = self.tensors.iter();
        let mut err = None;
        model.visit_mut("", &mut |p| {
            if err.is_some() {
                return;
            }
            match it.next() {
                Some(t) if t.name == p.name && t.shape == p.shape && t.kind == p.kind => {
                    p.value.copy_from_slice(&t.densify());
                }
                Some(t) => {
                    err = Some(Error::invalid(format!(
                        "stored tensor `{}` {:?} does not match model parameter `{}` {:?}",
                        t.name, t.shape, p.name, p.shape
                    )))
                }
                None => err = Some(Error::invalid(format!("checkpoint lacks parameter `{}`", p.name))),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if let Some(t) = it.next() {
            return Err(Error::invalid(format!(
                "checkpoint has unexpected extra tensor `{}`",
                t.name
            )));
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let config = self.config.to_text();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let flags = if self.is_sparse() { FLAG_SPARSE } else { 0 };
        out.extend_from_slice(&flags.to_le_bytes());
        out.extend_from_slice(&Sha256::digest(config.as_bytes()));
        for text in [config.as_str(), self.meta.as_str()] {
            out.extend_from_slice(&(text.len() as u32).to_le_bytes());
            out.extend_from_slice(text.as_bytes());
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            let enc = match t.payload {
                Payload::Dense(_) => ENC_DENSE,
                Payload::Sparse { .. } => ENC_SPARSE,
            };
            out.extend_from_slice(&[DTYPE_F32, enc, t.kind.code(), t.shape.len() as u8]);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            match &t.payload {
                Payload::Dense(v) => {
                    for x in v {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
                Payload::Sparse { indices, values } => {
                    let entries = t.sparse_entries().unwrap_or(0);
                    out.extend_from_slice(&(entries as u32).to_le_bytes());
                    let mut prev: Option<u32> = None;
                    for (&i, &v) in indices.iter().zip(values) {
                        let mut gap = prev.map_or(i, |p| i - p);
                        while gap > u16::MAX as u32 {
                            out.extend_from_slice(&u16::MAX.to_le_bytes());
                            out.extend_from_slice(&0f32.to_le_bytes());
                            gap -= u16::MAX as u32;
                        }
                        out.extend_from_slice(&(gap as u16).to_le_bytes());
                        out.extend_from_slice(&v.to_le_bytes());
                        prev = Some(i);
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8, "magic")?;
        if magic != MAGIC {
            return Err(r.fail(0, "not a checkpoint (bad magic)"));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(r.fail(8, &format!("unsupported version {version}")));
        }
        let flags = r.u32("flags")?;
        let digest_at = r.pos;
        let digest = r.take(32, "config digest")?.to_vec();
        let config_at = r.pos;
        let config_text = r.text("config")?;
        if Sha256::digest(config_text.as_bytes()).as_slice() != digest.as_slice() {
            return Err(r.fail(digest_at, "config digest does not match config text"));
        }
        let config = ModelConfig::from_text(&config_text).map_err(|e| r.fail(config_at, &e.to_string()))?;
        let meta = r.text("meta")?;
        let count = r.u32("tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let start = r.pos;
            let name_len = r.u16("name length")? as usize;
            let name = String::from_utf8(r.take(name_len, "name")?.to_vec())
                .map_err(|_| r.fail(start, "tensor name is not UTF-8"))?;
            let head = r.take(4, "tensor header")?;
            let (dtype, enc, kind_code, ndim) = (head[0], head[1], head[2], head[3] as usize);
            if dtype != DTYPE_F32 {
                return Err(r.fail(start, &format!("tensor `{name}`: unknown dtype {dtype}")));
            }
            let kind = ParamKind::from_code(kind_code)
                .ok_or_else(|| r.fail(start, &format!("tensor `{name}`: unknown kind {kind_code}")))?;
            let shape = (0..ndim)
                .map(|_| r.u32("dimension").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let payload = match enc {
                ENC_DENSE => {
                    let raw = r.take(4 * numel, &format!("values of `{name}`"))?;
                    Payload::Dense(raw.chunks_exact(4).map(f32_le).collect())
                }
                ENC_SPARSE => {
                    if flags & FLAG_SPARSE == 0 {
                        return Err(r.fail(start, &format!("sparse tensor `{name}` in a dense checkpoint")));
                    }
                    let entries = r.u32("entry count")? as usize;
                    let raw = r.take(6 * entries, &format!("entries of `{name}`"))?;
                    let mut indices = Vec::new();
                    let mut values = Vec::new();
                    let mut pos: Option<u64> = None;
                    for (e, chunk) in raw.chunks_exact(6).enumerate() {
                        let gap = u16::from_le_bytes([chunk[0], chunk[1]]) as u64;
                        let next = match pos {
                            None => gap,
                            Some(_) if gap == 0 => {
                                return Err(r.fail(
                                    start,
                                    &format!("tensor `{name}`: zero index gap at entry {e}"),
                                ))
                            }
                            Some(p) => p + gap,
                        };
                        if next >= numel as u64 {
                            return Err(r.fail(
                                start,
                                &format!("tensor `{name}`: index {next} out of range for {numel} elements"),
                            ));
                        }
                        pos = Some(next);
                        let v = f32_le(&chunk[2..6]);
                        if v != 0.0 {
                            indices.push(next as u32);
                            values.push(v);
                        }
                    }
                    Payload::Sparse { indices, values }
                }
                other => return Err(r.fail(start, &format!("tensor `{name}`: unknown encoding {other}"))),
            };
            tensors.push(StoredTensor {
                name,
                kind,
                shape,
                payload,
            });
        }
        if r.pos != bytes.len() {
            return Err(r.fail(r.pos, &format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            config,
            meta,
            tensors,
        })
    }
}

fn f32_le(b: &[u8]) -> f32 {
    f32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, offset: usize, msg: &str) -> Error {
        Error::Checkpoint {
            offset,
            msg: msg.to_string(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(
                self.pos,
                &format!("truncated while reading {what} ({n} bytes needed, {} left)", self.bytes.len() - self.pos),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn text(&mut self, what: &str) -> Result<String> {
        let at = self.pos;
        let n = self.u32(what)? as usize;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.fail(at, &format!("{what} is not UTF-8")))
    }
}

pub fn serialize(model: &LeadwiseNet<f32>, format: Format, meta: &str) -> Vec<u8> {
    SparseModel::capture(model, format, meta).to_bytes()
}

/// Returns the model and its provenance text.
pub fn deserialize(bytes: &[u8]) -> Result<(LeadwiseNet<f32>, String)> {
    let sm = SparseModel::from_bytes(bytes)?;
    Ok((sm.densify()?, sm.meta))
}

pub fn save_checkpoint(path: &Path, model: &LeadwiseNet<f32>, format: Format, meta: &str) -> Result<usize> {
    let bytes = serialize(model, format, meta);
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len())
}

pub fn load_checkpoint(path: &Path) -> Result<(LeadwiseNet<f32>, String)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    deserialize(&bytes).map_err(|e| match e {
        Error::Checkpoint { offset, msg } => Error::Checkpoint {
            offset,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compress::prune::{prune_global_l1, PruneScope};
    use crate::model::config::{BackboneConfig, Task};
    use crate::tensor::Tensor3;

    fn tiny_model() -> LeadwiseNet<f32> {
        let mut cfg = ModelConfig::new(BackboneConfig::tiny(), 3, Task::MultiClass);
        cfg.input_length = 64;
        LeadwiseNet::new(cfg, &Stream::new(5)).unwrap()
    }

    #[test]
    fn dense_round_trip_forwards_identically() {
        let mut m = tiny_model();
        let bytes = serialize(&m, Format::Dense, "seed = 5");
        let (mut back, meta) = deserialize(&bytes).unwrap();
        assert_eq!(meta, "seed = 5");
        let x = Tensor3::from_vec(2, 3, 64, (0..384).map(|i| ((i * 7) % 13) as f32 - 6.0).collect()).unwrap();
        assert_eq!(m.forward_eval(&x).unwrap().logits, back.forward_eval(&x).unwrap().logits);
    }

    #[test]
    fn sparse_round_trip_and_smaller() {
        let mut m = tiny_model();
        prune_global_l1(&mut m, 0.8, PruneScope::Global).unwrap();
        let dense = serialize(&m, Format::Dense, "");
        let sparse = serialize(&m, Format::Sparse, "");
        assert!(sparse.len() < dense.len());
        let (back, _) = deserialize(&sparse).unwrap();
        assert_eq!(back.flat_params(), m.flat_params());
    }

    #[test]
    fn long_gaps_use_fillers() {
        let mut values = vec![0.0f32; 200_000];
        values[3] = 1.0;
        values[150_000] = -2.0;
        let t = StoredTensor {
            name: "w".into(),
            kind: ParamKind::FcWeight,
            shape: vec![200_000],
            payload: Payload::Sparse { indices: vec![3, 150_000], values: vec![1.0, -2.0] },
        };
        // 3 -> 150000 needs two fillers plus the real entry.
        assert_eq!(t.sparse_entries(), Some(4));
        assert_eq!(t.densify(), values);
    }

    #[test]
    fn corruption_reports_offset() {
        let m = tiny_model();
        let mut bytes = serialize(&m, Format::Dense, "");
        let msg = deserialize(&bytes[..bytes.len() - 3]).unwrap_err().to_string();
        assert!(msg.contains("offset"), "{msg}");
        bytes[0] = b'X';
        assert!(matches!(deserialize(&bytes), Err(Error::Checkpoint { offset: 0, .. })));
    }
}
