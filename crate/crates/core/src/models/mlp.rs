//! Fully connected ReLU network with flat parameter storage and manual
//! backpropagation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of a ReLU network. Hidden layers use ReLU, the output is linear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize, seed: u64) -> Self {
        Self {
            input_dim,
            hidden: hidden.to_vec(),
            output_dim,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Domain("all layer sizes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-layer weights are stored row-major `(out, in)` followed by the biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations recorded by a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Default, Clone)]
pub struct ForwardCache {
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

impl Mlp {
    /// He-normal weights for ReLU layers, zero biases.
    pub fn new(spec: &MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut sizes = vec![spec.input_dim];
        sizes.extend(&spec.hidden);
        sizes.push(spec.output_dim);
        let n_params: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let mut params = Vec::with_capacity(n_params);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let last = sizes.len() - 2;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let gain = if l == last { 1.0 } else { 2.0 };
            let dist = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("finite std");
            params.extend((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self { sizes, params })
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Checkpoint("invalid layer sizes".into()));
        }
        let n: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if n != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {n} parameters, found {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(Self { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        thread_local! {
            static SCRATCH: std::cell::RefCell<ForwardCache> = std::cell::RefCell::default();
        }
        SCRATCH.with(|c| {
            let mut cache = c.borrow_mut();
            self.forward_cached(x, &mut cache);
            cache.output().to_vec()
        })
    }

    pub fn forward_cached(&self, x: &[f64], cache: &mut ForwardCache) {
        debug_assert_eq!(x.len(), self.sizes[0]);
        let n_layers = self.sizes.len() - 1;
        cache.acts.resize(n_layers + 1, Vec::new());
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        let mut off = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + fan_in * fan_out];
            let b = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            off += fan_in * fan_out + fan_out;
            let (prev, rest) = cache.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut rest[0];
            out.clear();
            for j in 0..fan_out {
                let row = &w[j * fan_in..(j + 1) * fan_in];
                let mut z = b[j];
                for (wi, xi) in row.iter().zip(input) {
                    z += wi * xi;
                }
                out.push(if l + 1 < n_layers { z.max(0.0) } else { z });
            }
        }
    }

    /// Accumulates `scale * d(output . dout)/d(params)` into `grad`.
    pub fn backward(&self, cache: &ForwardCache, dout: &[f64], scale: f64, grad: &mut [f64]) {
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta: Vec<f64> = dout.iter().map(|d| d * scale).collect();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &cache.acts[l];
            for j in 0..fan_out {
                let d = delta[j];
                if d == 0.0 {
                    continue;
                }
                let g = &mut grad[off + j * fan_in..off + (j + 1) * fan_in];
                for (gi, xi) in g.iter_mut().zip(input) {
                    *gi += d * xi;
                }
                grad[off + fan_in * fan_out + j] += d;
            }
            if l > 0 {
                let w = &self.params[off..off + fan_in * fan_out];
                let mut next = vec![0.0; fan_in];
                for j in 0..fan_out {
                    let d = delta[j];
                    if d == 0.0 {
                        continue;
                    }
                    for (ni, wi) in next.iter_mut().zip(&w[j * fan_in..(j + 1) * fan_in]) {
                        *ni += d * wi;
                    }
                }
                // ReLU derivative; the activation is exactly zero on the flat side
                for (ni, ai) in next.iter_mut().zip(input) {
                    if *ai <= 0.0 {
                        *ni = 0.0;
                    }
                }
                delta = next;
            }
        }
    }
}
