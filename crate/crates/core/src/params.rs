//! Named parameter collections and the binary checkpoint format.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! "DQFG" | version | tensor count |
//!   per tensor: name length | UTF-8 name | rank | dims... | f32 values (LE)
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::autograd::{Gradients, Graph, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{numel, Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DQFG";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Ordered map from names to tensors. Iteration follows insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    entries: Vec<(String, Tensor<T>)>,
    index: HashMap<String, usize>,
}

impl<T> Default for ParamStore<T> {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::DuplicateParam { name });
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor.with_requires_grad(true)));
        Ok(())
    }

    /// Kaiming-style normal weight (std = sqrt(2 / fan_in)).
    pub fn insert_kaiming(&mut self, name: impl Into<String>, shape: &[usize], fan_in: usize, rng: &mut Rng) -> Result<()> {
        let std = (2.0 / fan_in as f64).sqrt();
        self.insert(name, Tensor::from_fn(shape, |_| T::lit(rng.normal() * std)))
    }

    pub fn insert_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> Result<()> {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i].1)
            .ok_or_else(|| Error::MissingParam { name: name.into() })
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.entries[i].1),
            None => Err(Error::MissingParam { name: name.into() }),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Total number of scalar parameters.
    pub fn num_elements(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Registers every tensor as a leaf of `g`.
    pub fn bind(&self, g: &Graph<T>) -> BoundParams {
        let vars = self
            .entries
            .iter()
            .map(|(n, t)| (n.clone(), g.leaf(t.clone())))
            .collect();
        BoundParams { vars }
    }

    /// Registers every tensor as a constant of `g` (no gradients).
    pub fn bind_frozen(&self, g: &Graph<T>) -> BoundParams {
        let vars = self
            .entries
            .iter()
            .map(|(n, t)| (n.clone(), g.constant(t.clone())))
            .collect();
        BoundParams { vars }
    }

    /// Adds the gradients of `bound` leaves into each tensor's grad buffer.
    pub fn accumulate(&mut self, bound: &BoundParams, grads: &mut Gradients<T>) {
        for (name, t) in self.entries.iter_mut() {
            if let Some(v) = bound.vars.get(name.as_str()) {
                if let Some(g) = grads.take(*v) {
                    t.accumulate_grad(&g);
                }
            }
        }
    }

    pub fn zero_grads(&mut self) {
        self.entries.iter_mut().for_each(|(_, t)| t.zero_grad());
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for (n, t) in &self.entries {
            out.insert(n.clone(), t.cast()).expect("names already unique");
        }
        out
    }

    /// Bitwise equality of names, shapes and values.
    pub fn bit_identical(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|((na, ta), (nb, tb))| {
                na == nb
                    && ta.shape() == tb.shape()
                    && ta
                        .data()
                        .iter()
                        .zip(tb.data())
                        .all(|(a, b)| a.as_f64().to_bits() == b.as_f64().to_bits())
            })
    }

    /// Checks that `other` has exactly the names and shapes of `self`.
    pub fn check_compatible<U: Scalar>(&self, other: &ParamStore<U>) -> Result<()> {
        for (name, t) in self.iter() {
            let o = other.get(name)?;
            if o.shape() != t.shape() {
                return Err(Error::ShapeMismatch {
                    name: name.into(),
                    expected: t.shape().to_vec(),
                    found: o.shape().to_vec(),
                });
            }
        }
        if let Some(extra) = other.names().find(|n| !self.contains(n)) {
            return Err(Error::ShapeMismatch {
                name: extra.into(),
                expected: Vec::new(),
                found: other.get(extra)?.shape().to_vec(),
            });
        }
        Ok(())
    }
}

/// Graph handles for a [`ParamStore`], looked up by name.
#[derive(Debug, Clone, Default)]
pub struct BoundParams {
    vars: HashMap<String, Var>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParam { name: name.into() })
    }

    /// Replaces the handle for `name` (used to probe one tensor in checks).
    pub fn set(&mut self, name: &str, v: Var) {
        self.vars.insert(name.into(), v);
    }
}

/// Serializes `params` as single-precision values.
pub fn encode_checkpoint<T: Scalar>(params: &ParamStore<T>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + params.num_elements() * 4);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated { what: what.into() });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses a checkpoint; nothing is returned unless the whole file is valid.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParamStore<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::VersionMismatch(format!("bad magic {magic:02x?}")));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch(format!(
            "file version {version}, supported {CHECKPOINT_VERSION}"
        )));
    }
    let count = r.u32("tensor count")?;
    let mut store = ParamStore::new();
    for i in 0..count {
        let len = r.u32(&format!("name length of tensor {i}"))? as usize;
        let name = std::str::from_utf8(r.take(len, &format!("name of tensor {i}"))?)
            .map_err(|_| Error::VersionMismatch(format!("tensor {i} name is not UTF-8")))?
            .to_string();
        let rank = r.u32(&format!("rank of `{name}`"))? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32(&format!("dims of `{name}`"))? as usize);
        }
        let n = numel(&shape);
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Truncated { what: name.clone() })?, &format!("values of `{name}`"))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let t = Tensor::new(shape, data)
            .map_err(|e| Error::VersionMismatch(format!("tensor `{name}`: {e}")))?;
        store.insert(name, t)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::VersionMismatch(format!(
            "{} unexpected trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(store)
}

pub fn save_checkpoint<T: Scalar>(params: &ParamStore<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamStore<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Loads a checkpoint and verifies it matches `expected` name for name.
pub fn load_checkpoint_matching<T: Scalar>(
    path: impl AsRef<Path>,
    expected: &ParamStore<T>,
) -> Result<ParamStore<f32>> {
    let store = load_checkpoint(path)?;
    expected.check_compatible(&store)?;
    Ok(store)
}
