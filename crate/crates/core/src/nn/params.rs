//! Named parameter tensors and the ECFW1 weight container.
//!
//! Layout (little-endian): magic `ECFW1`, `u32` entry count, then per entry
//! `u32` name length, UTF-8 name, `u8` dtype (0 = float32), `u32` rank and
//! `u64` dims; the raw tensor payloads follow in manifest order.

use std::fs;
use std::path::Path;

use rand::Rng;

use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const WEIGHTS_MAGIC: &[u8; 5] = b"ECFW1";

const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LayerInit {
    Kaiming,
    Zero,
}

/// Uniform in `±sqrt(6 / fan_in)` (He initialization for leaky activations).
pub(crate) fn kaiming_uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (6.0 / fan_in.max(1) as f32).sqrt();
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-bound..bound)).collect())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor. Panics on a duplicate name.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        assert!(self.get(&name).is_none(), "duplicate parameter {name}");
        self.entries.push((name, tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// True when every tensor is entirely zero.
    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.data().iter().all(|&v| v == 0.0))
    }

    /// Checks that `self` has exactly the names and shapes of `reference`,
    /// in the same order.
    pub fn check_layout(&self, reference: &ParamSet) -> Result<()> {
        if self.len() != reference.len() {
            return Err(Error::Config(format!(
                "weight file has {} tensors, network expects {}",
                self.len(),
                reference.len()
            )));
        }
        for ((n, t), (rn, rt)) in self.entries.iter().zip(&reference.entries) {
            if n != rn {
                return Err(Error::Config(format!("weight tensor {n} found where {rn} was expected")));
            }
            if t.shape() != rt.shape() {
                return Err(Error::Config(format!(
                    "weight tensor {n} has shape {:?}, network expects {:?}",
                    t.shape(),
                    rt.shape()
                )));
            }
        }
        Ok(())
    }

    /// Records every tensor as a tape leaf.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        BoundParams {
            names: self.entries.iter().map(|(n, _)| n.clone()).collect(),
            vars: self.entries.iter().map(|(_, t)| tape.leaf(t.clone())).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(DTYPE_F32);
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        for (_, t) in &self.entries {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(WEIGHTS_MAGIC.len())? != WEIGHTS_MAGIC {
            return Err(Error::codec(0, "missing ECFW1 magic"));
        }
        let count = r.u32()? as usize;
        let mut manifest = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let at = r.pos;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::codec(at as u64, "tensor name is not UTF-8"))?
                .to_owned();
            let at = r.pos;
            let dtype = r.take(1)?[0];
            if dtype != DTYPE_F32 {
                return Err(Error::codec(at as u64, format!("unsupported dtype {dtype}")));
            }
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            manifest.push((name, shape));
        }
        let mut set = ParamSet::new();
        for (name, shape) in manifest {
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::codec(r.pos as u64, format!("tensor {name} is too large")))?;
            let at = r.pos;
            let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::codec(at as u64, "tensor too large"))?)?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if let Some(k) = data.iter().position(|v| !v.is_finite()) {
                return Err(Error::codec((at + 4 * k) as u64, format!("non-finite value in {name}")));
            }
            if set.get(&name).is_some() {
                return Err(Error::codec(at as u64, format!("duplicate tensor {name}")));
            }
            set.insert(name, Tensor::from_vec(&shape, data));
        }
        if r.pos != bytes.len() {
            return Err(Error::codec(r.pos as u64, "trailing bytes after last tensor"));
        }
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Tape handles for a [`ParamSet`], in insertion order.
pub struct BoundParams {
    names: Vec<String>,
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Var {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.vars[i]
    }

    /// Gradients for every parameter, zero where none flowed.
    pub fn gradients(&self, grads: &Gradients, params: &ParamSet) -> Vec<Tensor> {
        self.vars
            .iter()
            .zip(params.iter())
            .map(|(&v, (_, t))| grads.get_or_zeros(v, t))
            .collect()
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::codec(self.pos as u64, "unexpected end of weight file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn sample() -> ParamSet {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut p = ParamSet::new();
        p.insert("enc.w", kaiming_uniform(&[4, 2, 3, 3], 18, &mut rng));
        p.insert("enc.b", Tensor::zeros(&[4]));
        p.insert("scale", Tensor::from_vec(&[1], vec![0.5]));
        p
    }

    #[test]
    fn round_trips_bit_exact() {
        let p = sample();
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..5], b"ECFW1");
        assert_eq!(ParamSet::from_bytes(&bytes).unwrap(), p);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.ecfw");
        let p = sample();
        p.save(&path).unwrap();
        assert_eq!(ParamSet::load(&path).unwrap(), p);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        assert!(ParamSet::from_bytes(b"ECFW2").is_err());
        assert!(ParamSet::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(ParamSet::from_bytes(&extra).is_err());
        let mut nan = bytes.clone();
        let n = nan.len();
        nan[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(ParamSet::from_bytes(&nan), Err(Error::Codec { .. })));
    }

    #[test]
    fn layout_check() {
        let p = sample();
        assert!(p.check_layout(&p).is_ok());
        let mut q = ParamSet::new();
        q.insert("enc.w", Tensor::zeros(&[4, 2, 3, 3]));
        q.insert("enc.b", Tensor::zeros(&[5]));
        q.insert("scale", Tensor::zeros(&[1]));
        assert!(matches!(q.check_layout(&p), Err(Error::Config(_))));
        assert!(matches!(ParamSet::new().check_layout(&p), Err(Error::Config(_))));
    }

    #[test]
    fn kaiming_bound() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let t = kaiming_uniform(&[1000], 6, &mut rng);
        assert!(t.data().iter().all(|v| v.abs() <= 1.0));
        assert!(t.data().iter().any(|v| v.abs() > 0.9));
    }
}
