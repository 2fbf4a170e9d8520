//! Small dense networks with hand-written backprop, plus Adam and SGD.
//!
//! Parameters live in one flat vector, layer by layer, each layer stored as its
//! row-major `out × in` weight matrix followed by the `out` biases.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Fully connected net: tanh on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Layer activations from a forward pass; `acts[0]` is the input.
#[derive(Debug, Clone)]
pub struct Forward {
    pub acts: Vec<Vec<f64>>,
}

impl Forward {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least input layer")
    }
}

impl Mlp {
    /// Glorot-normal weights, zero biases; the output layer is scaled by `out_scale`.
    pub fn new(sizes: &[usize], out_scale: f64, rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let mut params = Vec::with_capacity(Self::count(sizes));
        let last = sizes.len() - 2;
        for (l, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let mut std = (2.0 / (fan_in + fan_out) as f64).sqrt();
            if l == last {
                std *= out_scale;
            }
            for _ in 0..fan_in * fan_out {
                let z: f64 = StandardNormal.sample(rng);
                params.push(z * std);
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            sizes: sizes.to_vec(),
            params,
        }
    }

    fn count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
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

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Checks the flat parameter length against the architecture.
    pub fn is_consistent(&self) -> bool {
        self.sizes.len() >= 2 && self.params.len() == Self::count(&self.sizes)
    }

    pub fn forward(&self, input: &[f64]) -> Forward {
        debug_assert_eq!(input.len(), self.input_dim());
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input.to_vec());
        let mut offset = 0;
        let n_layers = self.sizes.len() - 1;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            let x = &acts[l];
            let mut z: Vec<f64> = (0..fan_out)
                .map(|j| {
                    b[j] + w[j * fan_in..(j + 1) * fan_in]
                        .iter()
                        .zip(x)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                })
                .collect();
            if l + 1 < n_layers {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
            offset += fan_in * fan_out + fan_out;
        }
        Forward { acts }
    }

    pub fn predict(&self, input: &[f64]) -> Vec<f64> {
        self.forward(input).acts.pop().unwrap()
    }

    /// Adds `d(loss)/d(params)` into `grad`, given `d(loss)/d(output)`.
    pub fn backward(&self, fwd: &Forward, d_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = d_out.to_vec();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < n_layers {
                // acts[l + 1] = tanh(z)
                for (d, a) in delta.iter_mut().zip(&fwd.acts[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let x = &fwd.acts[l];
            let base = offsets[l];
            for j in 0..fan_out {
                let row = &mut grad[base + j * fan_in..base + (j + 1) * fan_in];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += delta[j] * xi;
                }
                grad[base + fan_in * fan_out + j] += delta[j];
            }
            if l > 0 {
                let w = &self.params[base..base + fan_in * fan_out];
                let mut prev = vec![0.0; fan_in];
                for j in 0..fan_out {
                    for (p, wij) in prev.iter_mut().zip(&w[j * fan_in..(j + 1) * fan_in]) {
                        *p += delta[j] * wij;
                    }
                }
                delta = prev;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// Descends `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Optimizer {
    Adam(Adam),
    Sgd { lr: f64 },
}

impl Optimizer {
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self {
            Optimizer::Adam(a) => a.step(params, grad),
            Optimizer::Sgd { lr } => params.iter_mut().zip(grad).for_each(|(p, g)| *p -= *lr * g),
        }
    }
}
