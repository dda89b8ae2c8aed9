use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::Error;

/// Fully connected network with tanh hidden layers and a linear output layer.
///
/// Parameters live in one flat vector, layer by layer: the row-major
/// `out x in` weight matrix followed by the `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations of one forward pass, kept for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    /// `acts[0]` is the input; `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next_delta: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl MlpNet {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "network needs input and output sizes");
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        }
    }

    /// Orthogonal weights scaled by `gains[l]` per layer, zero biases.
    pub fn orthogonal<R: Rng + ?Sized>(sizes: &[usize], gains: &[f64], rng: &mut R) -> Self {
        assert_eq!(gains.len(), sizes.len() - 1, "one gain per layer");
        let mut net = Self::zeros(sizes);
        let mut offset = 0;
        for (l, w) in sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let q = orthogonal_matrix(n_out, n_in, rng);
            for r in 0..n_out {
                for c in 0..n_in {
                    net.params[offset + r * n_in + c] = gains[l] * q[(r, c)];
                }
            }
            offset += n_out * n_in + n_out;
        }
        net
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self, Error> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Format(format!("invalid layer sizes {sizes:?}")));
        }
        if params.len() != param_count(&sizes) {
            return Err(Error::Dimension {
                expected: param_count(&sizes),
                got: params.len(),
            });
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
        self.sizes[self.sizes.len() - 1]
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

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, Error> {
        let mut cache = ForwardCache::default();
        self.forward_cached(x, &mut cache)?;
        Ok(cache.output().to_vec())
    }

    /// Forward pass storing every activation in `cache`.
    pub fn forward_cached(&self, x: &[f64], cache: &mut ForwardCache) -> Result<(), Error> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let layers = self.n_layers();
        cache.acts.resize_with(layers + 1, Vec::new);
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, rest) = self.params[offset..].split_at(n_in * n_out);
            let b = &rest[..n_out];
            let (prev, next) = cache.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut next[0];
            out.clear();
            for r in 0..n_out {
                let row = &w[r * n_in..(r + 1) * n_in];
                let mut s = b[r];
                for (wi, xi) in row.iter().zip(input) {
                    s += wi * xi;
                }
                out.push(if l + 1 < layers { s.tanh() } else { s });
            }
            offset += n_in * n_out + n_out;
        }
        Ok(())
    }

    /// Accumulate `d loss / d params` into `grads` given `d loss / d output`
    /// for the pass stored in `cache`.
    pub fn backward(&self, cache: &mut ForwardCache, grad_out: &[f64], grads: &mut [f64]) {
        debug_assert_eq!(grads.len(), self.params.len());
        let layers = self.n_layers();
        let mut offsets = Vec::with_capacity(layers);
        let mut o = 0;
        for l in 0..layers {
            offsets.push(o);
            o += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let ForwardCache {
            acts,
            delta,
            next_delta,
        } = cache;
        delta.clear();
        delta.extend_from_slice(grad_out);
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &acts[l];
            {
                let (gw, gb) = grads[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for r in 0..n_out {
                    let d = delta[r];
                    if d == 0.0 {
                        continue;
                    }
                    gb[r] += d;
                    let row = &mut gw[r * n_in..(r + 1) * n_in];
                    for (g, xi) in row.iter_mut().zip(input) {
                        *g += d * xi;
                    }
                }
            }
            if l == 0 {
                break;
            }
            // Propagate through W and the tanh of the previous layer.
            let w = &self.params[off..off + n_in * n_out];
            next_delta.clear();
            next_delta.resize(n_in, 0.0);
            for r in 0..n_out {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                let row = &w[r * n_in..(r + 1) * n_in];
                for (nd, wi) in next_delta.iter_mut().zip(row) {
                    *nd += d * wi;
                }
            }
            for (nd, a) in next_delta.iter_mut().zip(input) {
                *nd *= 1.0 - a * a;
            }
            std::mem::swap(delta, next_delta);
        }
    }
}

/// `rows x cols` matrix with orthonormal rows or columns (whichever is fewer).
fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let tall = rows >= cols;
    let (r, c) = if tall { (rows, cols) } else { (cols, rows) };
    let a = DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let rdiag = qr.r();
    for j in 0..c {
        if rdiag[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if tall {
        q
    } else {
        q.transpose()
    }
}
