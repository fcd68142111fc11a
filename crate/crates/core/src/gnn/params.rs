use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::binfile::{self, BinFileError, Reader, Writer};
use crate::tensorcore::{Tape, Tensor, Var};

const CHECKPOINT_MAGIC: &[u8; 8] = b"GMXCKPT\x01";
const CHECKPOINT_VERSION: u32 = 1;

/// Named parameter tensors in creation order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params {
    names: Vec<String>,
    tensors: Vec<Tensor<f64>>,
    index: HashMap<String, usize>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor<f64>) -> usize {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(t);
        self.names.len() - 1
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f64>> {
        self.position(name).map(|i| &self.tensors[i])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<f64>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<f64>] {
        &mut self.tensors
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Records every parameter as a gradient-tracked leaf.
    pub fn bind(&self, tape: &mut Tape<f64>) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.param(t.clone())).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.len() as u64);
        for (n, t) in self.names.iter().zip(&self.tensors) {
            w.str(n);
            w.usizes(t.shape());
            w.f64s(t.data());
        }
        w.into_bytes()
    }

    pub fn read_from(r: &mut Reader) -> Result<Params, BinFileError> {
        let count = r.u64()? as usize;
        let mut p = Params::new();
        for _ in 0..count {
            let name = r.str()?;
            let shape = r.usizes()?;
            let data = r.f64s()?;
            let t = Tensor::new(shape, data).map_err(|e| BinFileError::Payload(e.to_string()))?;
            if p.position(&name).is_some() {
                return Err(BinFileError::Payload(format!("duplicate parameter {name}")));
            }
            p.push(name, t);
        }
        Ok(p)
    }
}

/// Uniform Glorot initialization: `U(−a, a)`, `a = √(6 / (fan_in + fan_out))`,
/// so the variance is `2 / (fan_in + fan_out)`.
pub fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-a..a)).collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("shape matches data")
}

/// Writes a checkpoint: a metadata string (JSON by convention) and the
/// parameters, in a versioned binary container.
pub fn save_checkpoint(path: &Path, meta: &str, params: &Params) -> std::io::Result<()> {
    let mut w = Writer::new();
    w.str(meta);
    let mut bytes = w.into_bytes();
    bytes.extend_from_slice(&params.to_bytes());
    binfile::write_atomic(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, &bytes)
}

pub fn load_checkpoint(path: &Path) -> Result<(String, Params), BinFileError> {
    let bytes = binfile::read(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let mut r = Reader::new(&bytes);
    let meta = r.str()?;
    let params = Params::read_from(&mut r)?;
    r.finish()?;
    Ok((meta, params))
}
