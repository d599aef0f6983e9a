//! Named trainable tensors with gradient buffers, plus the CKP1 checkpoint
//! container: magic `CKP1`, then per entry `name_len u16, name utf-8,
//! rank u8, dims u32 each, f32 data`, little-endian, read to EOF.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{EvactError, Result};
use crate::nn::tensor::Tensor;

const CKP1_MAGIC: &[u8; 4] = b"CKP1";

#[derive(Debug, Clone)]
struct Param {
    value: Tensor,
    grad: Tensor,
}

/// Map of parameter name to value + gradient buffer.
#[derive(Debug, Clone)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
    pub seed: u64,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            params: BTreeMap::new(),
            seed,
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        let grad = Tensor::zeros(value.shape().to_vec());
        self.params.insert(name.to_string(), Param { value, grad });
    }

    /// Registers a matrix initialized uniformly in `+-1/sqrt(fan_in)`.
    pub fn insert_init(&mut self, name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng) {
        let bound = 1.0 / (rows.max(1) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        self.insert(name, Tensor::matrix(rows, cols, data).expect("init"));
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| EvactError::State(format!("unknown parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.params
            .get_mut(name)
            .map(|p| &mut p.value)
            .ok_or_else(|| EvactError::State(format!("unknown parameter `{name}`")))
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.grad)
            .ok_or_else(|| EvactError::State(format!("unknown parameter `{name}`")))
    }

    pub fn accumulate_grad(&mut self, name: &str, grad: &[f64]) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| EvactError::State(format!("unknown parameter `{name}`")))?;
        if p.grad.len() != grad.len() {
            return Err(EvactError::shape(
                "accumulate_grad",
                p.grad.shape(),
                &[grad.len()],
            ));
        }
        for (g, &d) in p.grad.data_mut().iter_mut().zip(grad) {
            *g += d;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.data_mut().fill(0.0);
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CKP1_MAGIC)?;
        for (name, p) in &self.params {
            let bytes = name.as_bytes();
            w.write_all(&(bytes.len() as u16).to_le_bytes())?;
            w.write_all(bytes)?;
            let shape = p.value.shape();
            w.write_all(&[shape.len() as u8])?;
            for &d in shape {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for &v in p.value.data() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| EvactError::Format("CKP1 header truncated".into()))?;
        if &magic != CKP1_MAGIC {
            return Err(EvactError::Format("bad CKP1 magic".into()));
        }
        let mut store = ParamStore::new(0);
        loop {
            let mut lenb = [0u8; 2];
            match r.read_exact(&mut lenb) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(e.into()),
            }
            let name_len = u16::from_le_bytes(lenb) as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)
                .map_err(|_| EvactError::Format("CKP1 name truncated".into()))?;
            let name = String::from_utf8(name)
                .map_err(|_| EvactError::Format("CKP1 name not utf-8".into()))?;
            let mut rank = [0u8; 1];
            r.read_exact(&mut rank)
                .map_err(|_| EvactError::Format("CKP1 rank truncated".into()))?;
            let mut shape = Vec::with_capacity(rank[0] as usize);
            for _ in 0..rank[0] {
                let mut dim = [0u8; 4];
                r.read_exact(&mut dim)
                    .map_err(|_| EvactError::Format("CKP1 dims truncated".into()))?;
                shape.push(u32::from_le_bytes(dim) as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let mut v = [0u8; 4];
                r.read_exact(&mut v)
                    .map_err(|_| EvactError::Format("CKP1 data truncated".into()))?;
                data.push(f32::from_le_bytes(v) as f64);
            }
            store.insert(&name, Tensor::new(shape, data)?);
        }
        Ok(store)
    }
}

/// Deterministic RNG for parameter initialization and sampling.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One standard-normal draw (Box-Muller over the seeded uniform stream).
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
