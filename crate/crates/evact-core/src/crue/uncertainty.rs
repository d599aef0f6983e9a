//! Gaussian uncertainty estimation: split the fused embedding into halves,
//! run each half through its own attention block, and read off mu and sigma.
//!
//! A half of width D/2 is reshaped into D/4 tokens of width 2 so
//! self-attention is well-typed on a single vector; sigma passes through a
//! softplus so it is strictly positive.

use rand_chacha::ChaCha8Rng;

use crate::error::{EvactError, Result};
use crate::nn::{standard_normal, AttentionBlock, ParamStore, Tape, Tensor, ValueId};

/// An embedding as an axis-aligned Gaussian over R^(D/2).
#[derive(Debug, Clone)]
pub struct GaussianEmbedding {
    pub mu: Tensor,
    pub sigma: Tensor,
}

impl GaussianEmbedding {
    pub fn new(mu: Tensor, sigma: Tensor) -> Result<Self> {
        if mu.shape() != sigma.shape() {
            return Err(EvactError::shape("gaussian", mu.shape(), sigma.shape()));
        }
        if !mu.is_finite() || !sigma.is_finite() {
            return Err(EvactError::Validation("non-finite Gaussian embedding".into()));
        }
        if sigma.data().iter().any(|&s| s < 0.0) {
            return Err(EvactError::Validation("negative sigma entry".into()));
        }
        Ok(Self { mu, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Which branch a sample set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Event,
    Text,
}

/// Reparameterized draws from a [`GaussianEmbedding`].
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub samples: Vec<Tensor>,
    pub source: Modality,
    pub seed: u64,
}

/// Tape handles produced by [`uncertainty_estimate`].
#[derive(Debug, Clone, Copy)]
pub struct UncertaintyNodes {
    /// 1 x D/2 mean.
    pub mu: ValueId,
    /// 1 x D/2 standard deviations (softplus output, strictly positive).
    pub sigma: ValueId,
    /// 1 x D/2 raw first half of the input (the mu path's input), kept so
    /// callers can build the normalized smooth-L1 target from it.
    pub mu_input: ValueId,
}

/// Splits `f` (1 x D, D divisible by 4) and attends over each half.
pub fn uncertainty_estimate(
    tape: &mut Tape,
    store: &ParamStore,
    att_mu: &AttentionBlock,
    att_sigma: &AttentionBlock,
    f: ValueId,
) -> Result<UncertaintyNodes> {
    let (rows, d) = tape.shape(f);
    if rows != 1 || d % 4 != 0 || d == 0 {
        return Err(EvactError::shape("uncertainty_estimate", &[rows, d], &[1, 4]));
    }
    let half = d / 2;
    let h1 = tape.slice_cols(f, 0, half)?;
    let h2 = tape.slice_cols(f, half, half)?;

    let tokens1 = tape.reshape(h1, half / 2, 2)?;
    let a1 = att_mu.forward(tape, store, tokens1)?;
    let mu = tape.reshape(a1, 1, half)?;

    let tokens2 = tape.reshape(h2, half / 2, 2)?;
    let a2 = att_sigma.forward(tape, store, tokens2)?;
    let raw = tape.reshape(a2, 1, half)?;
    let sigma = tape.softplus(raw);

    Ok(UncertaintyNodes {
        mu,
        sigma,
        mu_input: h1,
    })
}

/// Forward-only variant on a plain tensor.
pub fn uncertainty_estimate_tensor(
    store: &ParamStore,
    att_mu: &AttentionBlock,
    att_sigma: &AttentionBlock,
    f: &Tensor,
) -> Result<GaussianEmbedding> {
    let mut tape = Tape::new();
    let fi = tape.constant_tensor(f)?;
    let nodes = uncertainty_estimate(&mut tape, store, att_mu, att_sigma, fi)?;
    GaussianEmbedding::new(tape.tensor(nodes.mu), tape.tensor(nodes.sigma))
}

/// Draws `n` reparameterized samples `mu + delta * sigma`, `delta ~ N(0, I)`,
/// deterministically from `seed`.
pub fn reparam_sample(
    g: &GaussianEmbedding,
    n: usize,
    seed: u64,
    source: Modality,
) -> Result<SampleSet> {
    if n == 0 {
        return Err(EvactError::Validation("need at least one sample".into()));
    }
    let mut rng = crate::nn::seeded_rng(seed);
    let samples = (0..n)
        .map(|_| sample_once(g, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleSet {
        samples,
        source,
        seed,
    })
}

fn sample_once(g: &GaussianEmbedding, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let data = g
        .mu
        .data()
        .iter()
        .zip(g.sigma.data())
        .map(|(&m, &s)| m + standard_normal(rng) * s)
        .collect();
    Tensor::new(g.mu.shape().to_vec(), data)
}

/// Tape-level sampling: the noise enters as a constant so gradients flow to
/// mu and sigma only. Returns `n` nodes of the same shape as `mu`.
pub fn reparam_sample_tape(
    tape: &mut Tape,
    mu: ValueId,
    sigma: ValueId,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ValueId>> {
    if n == 0 {
        return Err(EvactError::Validation("need at least one sample".into()));
    }
    let (rows, cols) = tape.shape(mu);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let delta: Vec<f64> = (0..rows * cols).map(|_| standard_normal(rng)).collect();
        let noise = tape.mul_const(sigma, &delta)?;
        out.push(tape.add(mu, noise)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::seeded_rng;

    fn blocks(seed: u64) -> (ParamStore, AttentionBlock, AttentionBlock) {
        let mut store = ParamStore::new(0);
        let mut rng = seeded_rng(seed);
        let a1 = AttentionBlock::init(&mut store, &mut rng, "att1", 2);
        let a2 = AttentionBlock::init(&mut store, &mut rng, "att2", 2);
        (store, a1, a2)
    }

    #[test]
    fn zeroed_sigma_output_projection_gives_ln2() {
        let (mut store, a1, a2) = blocks(7);
        store.get_mut("att2.wo").unwrap().data_mut().fill(0.0);
        let f = Tensor::matrix(1, 8, vec![0.3; 8]).unwrap();
        let g = uncertainty_estimate_tensor(&store, &a1, &a2, &f).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert_eq!(g.sigma.len(), 4);
        for &s in g.sigma.data() {
            assert!((s - ln2).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_mu_path_single_token_returns_input_half() {
        // D = 4: the mu half is one width-2 token; identity projections make
        // single-token attention the identity map.
        let (mut store, a1, a2) = blocks(7);
        for w in ["wq", "wk", "wv", "wo"] {
            let t = store.get_mut(&format!("att1.{w}")).unwrap();
            t.data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        }
        let f = Tensor::matrix(1, 4, vec![0.6, -0.9, 0.2, 0.4]).unwrap();
        let g = uncertainty_estimate_tensor(&store, &a1, &a2, &f).unwrap();
        assert!((g.mu.data()[0] - 0.6).abs() < 1e-12);
        assert!((g.mu.data()[1] + 0.9).abs() < 1e-12);
    }

    #[test]
    fn random_input_matches_reference_attention() {
        let (store, a1, a2) = blocks(13);
        let fv: Vec<f64> = (0..8).map(|i| (i as f64 * 0.53).sin()).collect();
        let f = Tensor::matrix(1, 8, fv.clone()).unwrap();
        let g = uncertainty_estimate_tensor(&store, &a1, &a2, &f).unwrap();

        let t1 = Tensor::matrix(2, 2, fv[0..4].to_vec()).unwrap();
        let mu_ref = a1.forward_tensor(&store, &t1).unwrap();
        for (a, b) in g.mu.data().iter().zip(mu_ref.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let t2 = Tensor::matrix(2, 2, fv[4..8].to_vec()).unwrap();
        let raw = a2.forward_tensor(&store, &t2).unwrap();
        for (a, b) in g.sigma.data().iter().zip(raw.data()) {
            let sp = b.max(0.0) + (-b.abs()).exp().ln_1p();
            assert!((a - sp).abs() < 1e-12);
        }
    }

    #[test]
    fn indivisible_dim_is_shape_error() {
        let (store, a1, a2) = blocks(7);
        let f = Tensor::matrix(1, 6, vec![0.0; 6]).unwrap();
        assert!(matches!(
            uncertainty_estimate_tensor(&store, &a1, &a2, &f),
            Err(EvactError::Shape { .. })
        ));
    }

    #[test]
    fn zero_sigma_collapses_samples_to_mu() {
        let g = GaussianEmbedding::new(
            Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5]).unwrap(),
            Tensor::matrix(1, 3, vec![0.0; 3]).unwrap(),
        )
        .unwrap();
        let set = reparam_sample(&g, 7, 42, Modality::Event).unwrap();
        for s in &set.samples {
            assert_eq!(s.data(), g.mu.data());
        }
    }

    #[test]
    fn same_seed_gives_identical_sample_sets() {
        let g = GaussianEmbedding::new(
            Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5]).unwrap(),
            Tensor::matrix(1, 3, vec![0.3, 0.1, 2.0]).unwrap(),
        )
        .unwrap();
        let a = reparam_sample(&g, 5, 9, Modality::Text).unwrap();
        let b = reparam_sample(&g, 5, 9, Modality::Text).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.data(), y.data());
        }
    }

    #[test]
    fn sample_statistics_match_the_gaussian() {
        let mu = [0.7, -1.2, 0.0, 3.5];
        let sigma = [0.5, 1.5, 0.1, 2.0];
        let g = GaussianEmbedding::new(
            Tensor::matrix(1, 4, mu.to_vec()).unwrap(),
            Tensor::matrix(1, 4, sigma.to_vec()).unwrap(),
        )
        .unwrap();
        let n = 100_000;
        let set = reparam_sample(&g, n, 1234, Modality::Event).unwrap();
        for j in 0..4 {
            let vals: Vec<f64> = set.samples.iter().map(|s| s.data()[j]).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            assert!(
                (mean - mu[j]).abs() < 3.0 * sigma[j] / (n as f64).sqrt(),
                "coord {j}: mean {mean} vs {}",
                mu[j]
            );
            assert!(
                (std - sigma[j]).abs() < 0.05 * sigma[j],
                "coord {j}: std {std} vs {}",
                sigma[j]
            );
        }
    }

    #[test]
    fn tape_sampling_routes_gradient_to_mu_and_sigma() {
        let mut tape = Tape::new();
        let mut store = ParamStore::new(0);
        store.insert("mu", Tensor::matrix(1, 2, vec![0.5, -0.5]).unwrap());
        store.insert("sigma", Tensor::matrix(1, 2, vec![0.4, 0.2]).unwrap());
        let mu = tape.param(&store, "mu").unwrap();
        let sigma = tape.param(&store, "sigma").unwrap();
        let mut rng = seeded_rng(3);
        let samples = reparam_sample_tape(&mut tape, mu, sigma, 2, &mut rng).unwrap();
        let stacked = tape.concat_rows(&samples).unwrap();
        let loss = tape.sum_all(stacked);
        tape.backward_into(loss, &mut store).unwrap();
        // d(sum)/d(mu) = n per coordinate; d/d(sigma) = sum of deltas != 0 a.s.
        assert_eq!(store.grad("mu").unwrap().data(), &[2.0, 2.0]);
        assert!(store.grad("sigma").unwrap().data().iter().all(|&g| g != 0.0));
    }
}
