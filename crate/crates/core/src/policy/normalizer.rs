use serde::{Deserialize, Serialize};

/// Per-dimension running mean and variance (Welford / Chan merge).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub count: f64,
    pub mean: Vec<f64>,
    /// Sum of squared deviations.
    pub m2: Vec<f64>,
    pub clip: f64,
}

const VAR_EPS: f64 = 1e-8;

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            clip: 10.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, x: &[f64]) {
        self.count += 1.0;
        for i in 0..self.mean.len() {
            let d = x[i] - self.mean[i];
            self.mean[i] += d / self.count;
            self.m2[i] += d * (x[i] - self.mean[i]);
        }
    }

    /// Fold in a batch of rows in order.
    pub fn update_batch<'a>(&mut self, rows: impl IntoIterator<Item = &'a [f64]>) {
        for r in rows {
            self.update(r);
        }
    }

    pub fn variance(&self, i: usize) -> f64 {
        if self.count > 1.0 {
            self.m2[i] / self.count
        } else {
            1.0
        }
    }

    /// `(x - mean) / sqrt(var + eps)`, clipped to `+-clip`. Before any data
    /// has been seen the input passes through unchanged.
    pub fn normalize_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        if self.count < 1.0 {
            out.extend_from_slice(x);
            return;
        }
        for i in 0..self.mean.len() {
            let z = (x[i] - self.mean[i]) / (self.variance(i) + VAR_EPS).sqrt();
            out.push(z.clamp(-self.clip, self.clip));
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        self.normalize_into(x, &mut out);
        out
    }
}
