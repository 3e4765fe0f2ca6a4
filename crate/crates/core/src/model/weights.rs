//! Named parameter storage and the checkpoint file format.
//!
//! Checkpoint layout (all integers little-endian):
//!
//! ```text
//! "ARCW" u16 version
//! u32 config_len, config JSON
//! u32 param_count
//! per param: u16 name_len, name, u8 rank, rank x u32 extent, f64 payload
//! u8 has_optimizer
//! if 1: u64 step, then per param (same order): f64 first moment, f64 second moment
//! ```

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::tensors::{Tensor, Var};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ARCW";
pub const CHECKPOINT_VERSION: u16 = 1;

const MAX_RANK: usize = 8;
const MAX_NAME: usize = 1024;

/// Ordered named tensors; the order is the canonical parameter order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Invalid(format!("duplicate parameter {name}")));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(t);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Wraps every tensor in a tape variable (trainable leaves or constants).
    pub fn bind(&self, trainable: bool) -> BoundParams<'_> {
        let vars = self
            .tensors
            .iter()
            .map(|t| if trainable { Var::leaf(t.clone()) } else { Var::constant(t.clone()) })
            .collect();
        BoundParams { store: self, vars }
    }
}

/// Tape variables for one forward pass over a [`ParamStore`].
pub struct BoundParams<'a> {
    store: &'a ParamStore,
    vars: Vec<Var>,
}

impl BoundParams<'_> {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.store
            .position(name)
            .map(|i| self.vars[i].clone())
            .ok_or_else(|| Error::Invalid(format!("missing parameter {name}")))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// The same binding with parameter `index` replaced by `value`; other
    /// parameters are shared, not copied.
    pub fn with_value(&self, index: usize, value: Tensor) -> Result<Self> {
        let old = self.vars.get(index).ok_or_else(|| Error::Invalid(format!("no parameter {index}")))?;
        if old.shape() != value.shape() {
            return Err(Error::Shape(format!("parameter {index} is {:?}, got {:?}", old.shape(), value.shape())));
        }
        let mut vars = self.vars.clone();
        vars[index] = if old.requires_grad() { Var::leaf(value) } else { Var::constant(value) };
        Ok(Self { store: self.store, vars })
    }

    /// Gradients in canonical order; parameters not reached are zero.
    pub fn take_grads(&self) -> Vec<Tensor> {
        self.vars
            .iter()
            .zip(self.store.tensors())
            .map(|(v, t)| v.take_grad().unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect()
    }
}

/// Adam moments, aligned with the parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl OptimizerState {
    pub fn zeros(params: &ParamStore) -> Self {
        let z: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self { step: 0, m: z.clone(), v: z }
    }
}

/// A configured model's weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl ModelWeights {
    /// 64-bit digest over the configuration and every parameter payload.
    pub fn digest(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.config).expect("config serializes"));
        for (name, t) in self.params.iter() {
            h.update((name.len() as u32).to_le_bytes());
            h.update(name.as_bytes());
            for &d in t.shape() {
                h.update((d as u32).to_le_bytes());
            }
            for &v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        let out = h.finalize();
        u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub weights: ModelWeights,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let cfg = serde_json::to_vec(&self.weights.config).expect("config serializes");
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(&cfg);
        let params = &self.weights.params;
        out.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for (name, t) in params.iter() {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            put_f64s(&mut out, t.data());
        }
        match &self.optimizer {
            None => out.push(0),
            Some(opt) => {
                out.push(1);
                out.extend_from_slice(&opt.step.to_le_bytes());
                for (m, v) in opt.m.iter().zip(&opt.v) {
                    put_f64s(&mut out, m.data());
                    put_f64s(&mut out, v.data());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format("checkpoint", format!("unsupported version {version}")));
        }
        let cfg_len = r.u32()? as usize;
        let config: ModelConfig = serde_json::from_slice(r.take(cfg_len)?)
            .map_err(|e| Error::format("checkpoint", format!("config: {e}")))?;
        config.validate()?;
        let count = r.u32()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            if name_len == 0 || name_len > MAX_NAME {
                return Err(Error::format("checkpoint", "bad parameter name length"));
            }
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::format("checkpoint", "parameter name is not UTF-8"))?
                .to_owned();
            let rank = r.u8()? as usize;
            if rank == 0 || rank > MAX_RANK {
                return Err(Error::format("checkpoint", format!("rank {rank} for {name}")));
            }
            let mut shape = Vec::with_capacity(rank);
            let mut n: usize = 1;
            for _ in 0..rank {
                let d = r.u32()? as usize;
                n = n
                    .checked_mul(d)
                    .filter(|&n| n > 0 && n * 8 <= r.remaining())
                    .ok_or_else(|| Error::format("checkpoint", format!("extent overflow in {name}")))?;
                shape.push(d);
            }
            let data = r.f64s(n)?;
            params.insert(name, Tensor::new(shape, data)?)?;
        }
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                let mut m = Vec::with_capacity(params.len());
                let mut v = Vec::with_capacity(params.len());
                for t in params.tensors() {
                    m.push(Tensor::new(t.shape().to_vec(), r.f64s(t.len())?)?);
                    v.push(Tensor::new(t.shape().to_vec(), r.f64s(t.len())?)?);
                }
                Some(OptimizerState { step, m, v })
            }
            f => return Err(Error::format("checkpoint", format!("optimizer flag {f}"))),
        };
        if r.remaining() != 0 {
            return Err(Error::format("checkpoint", format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self { weights: ModelWeights { config, params }, optimizer })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn put_f64s(out: &mut Vec<u8>, data: &[f64]) {
    out.reserve(data.len() * 8);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::format("checkpoint", "unexpected end of file"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::format("checkpoint", "size overflow"))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}
