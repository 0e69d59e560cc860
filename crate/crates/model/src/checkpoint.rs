//! Binary checkpoint format.
//!
//! Layout: the magic bytes `LSMT`, a little-endian `u32` format version, a
//! `u32`-length-prefixed JSON header, then tensors until end of file. Each
//! tensor is a `u32`-length-prefixed UTF-8 name, a one-byte dtype tag, a
//! `u32` rank, `rank` `u32` dimensions and the little-endian payload.
//! Parameters come first in name order, followed by the Adam moments as
//! `adam.m.<name>` and `adam.v.<name>`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use treeattn_core::Mat;
use treeattn_data::Vocab;

use crate::config::ModelConfig;
use crate::model::Model;
use crate::params::ParamStore;
use crate::train::{Adam, TrainConfig, TrainState};
use crate::ModelError;

pub const MAGIC: &[u8; 4] = b"LSMT";
pub const VERSION: u32 = 1;
pub const DTYPE_F64: u8 = 1;
const MOMENT_M: &str = "adam.m.";
const MOMENT_V: &str = "adam.v.";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub source_vocab: Vocab,
    pub target_vocab: Vocab,
    pub training: TrainConfig,
    pub state: TrainState,
    pub adam: Adam,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    source_vocab: Vec<String>,
    target_vocab: Vec<String>,
    training: TrainConfig,
    state: TrainState,
    adam: Adam,
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("checkpoint field exceeds u32");
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, m: &Mat) {
    put_u32(out, name.len());
    out.extend_from_slice(name.as_bytes());
    out.push(DTYPE_F64);
    put_u32(out, 2);
    put_u32(out, m.rows());
    put_u32(out, m.cols());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], ModelError> {
        if self.bytes.len() - self.pos < n {
            return Err(corrupt(format!("truncated file while reading {}", what)));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<usize, ModelError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

impl Checkpoint {
    pub fn new(model: Model, source_vocab: Vocab, target_vocab: Vocab, training: TrainConfig) -> Self {
        let adam = Adam::new(&model);
        Checkpoint {
            state: TrainState::new(&training),
            model,
            source_vocab,
            target_vocab,
            training,
            adam,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            model: self.model.config.clone(),
            source_vocab: self.source_vocab.regular_tokens().to_vec(),
            target_vocab: self.target_vocab.regular_tokens().to_vec(),
            training: self.training.clone(),
            state: self.state.clone(),
            adam: self.adam.clone(),
        };
        let json = serde_json::to_string(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_u32(&mut out, json.len());
        out.extend_from_slice(json.as_bytes());
        for (name, m) in self.model.params.iter() {
            put_tensor(&mut out, name, m);
        }
        for (prefix, moments) in [(MOMENT_M, &self.adam.m), (MOMENT_V, &self.adam.v)] {
            for (name, m) in moments {
                put_tensor(&mut out, &format!("{}{}", prefix, name), m);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(corrupt("bad magic bytes, not a checkpoint"));
        }
        let version = r.u32("version")?;
        if version != VERSION as usize {
            return Err(corrupt(format!("format version {} is not supported (expected {})", version, VERSION)));
        }
        let len = r.u32("header length")?;
        let json = std::str::from_utf8(r.take(len, "header")?).map_err(|_| corrupt("header is not UTF-8"))?;
        let header: Header = serde_json::from_str(json).map_err(|e| corrupt(format!("bad header: {}", e)))?;

        let mut tensors: BTreeMap<String, Mat> = BTreeMap::new();
        while !r.done() {
            let name_len = r.u32("tensor name length")?;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|_| corrupt("tensor name is not UTF-8"))?
                .to_owned();
            let dtype = r.take(1, "dtype")?[0];
            if dtype != DTYPE_F64 {
                return Err(corrupt(format!("tensor '{}' has unknown dtype tag {}", name, dtype)));
            }
            let rank = r.u32("rank")?;
            if rank != 2 {
                return Err(corrupt(format!("tensor '{}' has unsupported rank {}", name, rank)));
            }
            let rows = r.u32("dimension")?;
            let cols = r.u32("dimension")?;
            let count = rows.checked_mul(cols).ok_or_else(|| corrupt("tensor too large"))?;
            let payload = r.take(count.checked_mul(8).ok_or_else(|| corrupt("tensor too large"))?, &name)?;
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            if tensors.insert(name.clone(), Mat::from_vec(rows, cols, data)).is_some() {
                return Err(corrupt(format!("tensor '{}' appears twice", name)));
            }
        }

        let mut params = BTreeMap::new();
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for (name, t) in tensors {
            if let Some(base) = name.strip_prefix(MOMENT_M) {
                m.insert(base.to_owned(), t);
            } else if let Some(base) = name.strip_prefix(MOMENT_V) {
                v.insert(base.to_owned(), t);
            } else {
                params.insert(name, t);
            }
        }
        let model = Model::from_parts(header.model, ParamStore::from_map(params))?;
        for (kind, moments) in [("first", &m), ("second", &v)] {
            for name in model.params.names() {
                let shape = model.params.get(name).map(Mat::shape);
                if moments.get(name).map(Mat::shape) != shape {
                    return Err(corrupt(format!("{} moment for '{}' is missing or misshapen", kind, name)));
                }
            }
            if let Some(extra) = moments.keys().find(|k| model.params.get(k).is_none()) {
                return Err(corrupt(format!("unknown tensor '{}'", extra)));
            }
        }
        let mut adam = header.adam;
        adam.m = m;
        adam.v = v;
        Ok(Checkpoint {
            model,
            source_vocab: Vocab::from_tokens(header.source_vocab),
            target_vocab: Vocab::from_tokens(header.target_vocab),
            training: header.training,
            state: header.state,
            adam,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_bytes(&bytes)
    }
}
