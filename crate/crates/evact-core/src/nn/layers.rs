//! Two-layer MLP and single-head self-attention, parameterized by name
//! against a [`ParamStore`].

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::params::ParamStore;
use crate::nn::tape::{Tape, ValueId};
use crate::nn::tensor::Tensor;

/// Two affine layers with a ReLU between.
#[derive(Debug, Clone)]
pub struct Mlp2 {
    prefix: String,
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
}

impl Mlp2 {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_dim: usize,
        hidden_dim: usize,
        out_dim: usize,
    ) -> Self {
        store.insert_init(&format!("{prefix}.w1"), in_dim, hidden_dim, rng);
        store.insert(&format!("{prefix}.b1"), Tensor::matrix(1, hidden_dim, vec![0.0; hidden_dim]).unwrap());
        store.insert_init(&format!("{prefix}.w2"), hidden_dim, out_dim, rng);
        store.insert(&format!("{prefix}.b2"), Tensor::matrix(1, out_dim, vec![0.0; out_dim]).unwrap());
        Self {
            prefix: prefix.to_string(),
            in_dim,
            hidden_dim,
            out_dim,
        }
    }

    /// Reconstructs the handle for parameters that already exist in a store.
    pub fn attach(store: &ParamStore, prefix: &str) -> Result<Self> {
        let w1 = store.get(&format!("{prefix}.w1"))?;
        let w2 = store.get(&format!("{prefix}.w2"))?;
        Ok(Self {
            prefix: prefix.to_string(),
            in_dim: w1.shape()[0],
            hidden_dim: w1.shape()[1],
            out_dim: w2.shape()[1],
        })
    }

    /// `x (m x in) -> relu(x W1 + b1) W2 + b2 (m x out)`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: ValueId) -> Result<ValueId> {
        let w1 = tape.param(store, &format!("{}.w1", self.prefix))?;
        let b1 = tape.param(store, &format!("{}.b1", self.prefix))?;
        let w2 = tape.param(store, &format!("{}.w2", self.prefix))?;
        let b2 = tape.param(store, &format!("{}.b2", self.prefix))?;
        let h = tape.matmul(x, w1)?;
        let h = tape.add_row(h, b1)?;
        let h = tape.relu(h);
        let y = tape.matmul(h, w2)?;
        tape.add_row(y, b2)
    }
}

/// Single-head self-attention with query/key/value/output projections.
#[derive(Debug, Clone)]
pub struct AttentionBlock {
    prefix: String,
    pub dim: usize,
}

impl AttentionBlock {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        dim: usize,
    ) -> Self {
        for w in ["wq", "wk", "wv", "wo"] {
            store.insert_init(&format!("{prefix}.{w}"), dim, dim, rng);
        }
        for b in ["bq", "bk", "bv", "bo"] {
            store.insert(&format!("{prefix}.{b}"), Tensor::matrix(1, dim, vec![0.0; dim]).unwrap());
        }
        Self {
            prefix: prefix.to_string(),
            dim,
        }
    }

    pub fn attach(store: &ParamStore, prefix: &str) -> Result<Self> {
        let wq = store.get(&format!("{prefix}.wq"))?;
        Ok(Self {
            prefix: prefix.to_string(),
            dim: wq.shape()[0],
        })
    }

    /// `x (L x dim) -> softmax(Q K^T / sqrt(dim)) V` with output projection.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: ValueId) -> Result<ValueId> {
        let name = |s: &str| format!("{}.{s}", self.prefix);
        let wq = tape.param(store, &name("wq"))?;
        let bq = tape.param(store, &name("bq"))?;
        let wk = tape.param(store, &name("wk"))?;
        let bk = tape.param(store, &name("bk"))?;
        let wv = tape.param(store, &name("wv"))?;
        let bv = tape.param(store, &name("bv"))?;
        let wo = tape.param(store, &name("wo"))?;
        let bo = tape.param(store, &name("bo"))?;

        let q = tape.matmul(x, wq)?;
        let q = tape.add_row(q, bq)?;
        let k = tape.matmul(x, wk)?;
        let k = tape.add_row(k, bk)?;
        let v = tape.matmul(x, wv)?;
        let v = tape.add_row(v, bv)?;

        let kt = tape.transpose(k);
        let scores = tape.matmul(q, kt)?;
        let scores = tape.scale(scores, 1.0 / (self.dim as f64).sqrt());
        let attn = tape.softmax_rows(scores);
        let ctx = tape.matmul(attn, v)?;
        let out = tape.matmul(ctx, wo)?;
        tape.add_row(out, bo)
    }

    /// Forward on a plain tensor (scratch tape, no gradients kept).
    pub fn forward_tensor(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let xi = tape.constant_tensor(x)?;
        let y = self.forward(&mut tape, store, xi)?;
        Ok(tape.tensor(y))
    }
}
