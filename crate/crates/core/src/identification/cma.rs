//! (mu/mu_w, lambda)-CMA-ES with cumulative step-size adaptation and
//! rank-one plus rank-mu covariance updates, using the default strategy
//! parameters for the problem dimension and population size.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaState {
    pub dim: usize,
    pub population: usize,
    pub mean: Vec<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    pub path_sigma: Vec<f64>,
    pub path_c: Vec<f64>,
    pub generation: usize,
    /// Optional box; candidates are reflected into it.
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    // Eigendecomposition of `cov`: cov = B diag(d^2) B^T.
    basis: DMatrix<f64>,
    scales: Vec<f64>,
    // Strategy parameters.
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
}

impl CmaState {
    pub fn new(mean: Vec<f64>, sigma: f64, population: usize) -> Result<Self, Error> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::Config("CMA-ES needs at least one dimension".into()));
        }
        if !(sigma > 0.0) || population < 2 {
            return Err(Error::Config(format!(
                "CMA-ES needs sigma > 0 and population >= 2 (got {sigma}, {population})"
            )));
        }
        let nf = n as f64;
        let mu = population / 2;
        let raw: Vec<f64> = (0..mu)
            .map(|i| (mu as f64 + 0.5).ln() - ((i + 1) as f64).ln())
            .collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Ok(Self {
            dim: n,
            population,
            mean,
            sigma,
            cov: DMatrix::identity(n, n),
            path_sigma: vec![0.0; n],
            path_c: vec![0.0; n],
            generation: 0,
            lower: None,
            upper: None,
            basis: DMatrix::identity(n, n),
            scales: vec![1.0; n],
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        })
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, Error> {
        if lower.len() != self.dim || upper.len() != self.dim || lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::Config("CMA-ES bounds need one lo <= hi pair per dimension".into()));
        }
        for i in 0..self.dim {
            self.mean[i] = reflect(self.mean[i], lower[i], upper[i]);
        }
        self.lower = Some(lower);
        self.upper = Some(upper);
        Ok(self)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest standard deviation of the sampling distribution along any coordinate.
    pub fn max_coordinate_std(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.sigma * self.cov[(i, i)].sqrt())
            .fold(0.0, f64::max)
    }

    /// Draw `population` candidates `mean + sigma B D z`, reflected into the box.
    pub fn ask<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        let n = self.dim;
        (0..self.population)
            .map(|_| {
                let z: Vec<f64> = (0..n)
                    .map(|i| self.scales[i] * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let mut x = self.mean.clone();
                for r in 0..n {
                    let mut y = 0.0;
                    for c in 0..n {
                        y += self.basis[(r, c)] * z[c];
                    }
                    x[r] += self.sigma * y;
                }
                if let (Some(lo), Some(hi)) = (&self.lower, &self.upper) {
                    for i in 0..n {
                        x[i] = reflect(x[i], lo[i], hi[i]);
                    }
                }
                x
            })
            .collect()
    }

    /// Update from evaluated candidates; larger fitness is better and
    /// non-finite fitness ranks last. Only the ranking is used.
    pub fn tell(&mut self, candidates: &[Vec<f64>], fitness: &[f64]) -> Result<(), Error> {
        if candidates.len() != self.population || fitness.len() != self.population {
            return Err(Error::Dimension {
                expected: self.population,
                got: candidates.len().min(fitness.len()),
            });
        }
        let n = self.dim;
        let order = rank_order(candidates, fitness);
        let old = DVector::from_column_slice(&self.mean);
        let mut new_mean = DVector::zeros(n);
        for (w, &k) in self.weights.iter().zip(&order) {
            new_mean += DVector::from_column_slice(&candidates[k]) * *w;
        }
        let step = (&new_mean - &old) / self.sigma;

        // C^{-1/2} step = B D^{-1} B^T step
        let bt_step = self.basis.transpose() * &step;
        let scaled = DVector::from_iterator(n, (0..n).map(|i| bt_step[i] / self.scales[i]));
        let whitened = &self.basis * scaled;

        let cs = self.c_sigma;
        let ps_coef = (cs * (2.0 - cs) * self.mu_eff).sqrt();
        for i in 0..n {
            self.path_sigma[i] = (1.0 - cs) * self.path_sigma[i] + ps_coef * whitened[i];
        }
        let ps_norm = self.path_sigma.iter().map(|v| v * v).sum::<f64>().sqrt();
        let gen = (self.generation + 1) as f64;
        let h_sigma = ps_norm / (1.0 - (1.0 - cs).powf(2.0 * gen)).sqrt()
            < (1.4 + 2.0 / (n as f64 + 1.0)) * self.chi_n;
        let h = if h_sigma { 1.0 } else { 0.0 };
        let cc = self.c_c;
        let pc_coef = (cc * (2.0 - cc) * self.mu_eff).sqrt();
        for i in 0..n {
            self.path_c[i] = (1.0 - cc) * self.path_c[i] + h * pc_coef * step[i];
        }

        let pc = DVector::from_column_slice(&self.path_c);
        let mut rank_mu = DMatrix::zeros(n, n);
        for (w, &k) in self.weights.iter().zip(&order) {
            let y = (DVector::from_column_slice(&candidates[k]) - &old) / self.sigma;
            rank_mu += &y * y.transpose() * *w;
        }
        let decay = 1.0 - self.c_1 - self.c_mu;
        let correction = (1.0 - h) * cc * (2.0 - cc);
        self.cov = &self.cov * (decay + self.c_1 * correction) + (&pc * pc.transpose()) * self.c_1 + rank_mu * self.c_mu;
        self.cov = (&self.cov + self.cov.transpose()) * 0.5;

        self.sigma *= ((cs / self.d_sigma) * (ps_norm / self.chi_n - 1.0)).exp();
        self.mean = new_mean.iter().copied().collect();
        if let (Some(lo), Some(hi)) = (&self.lower, &self.upper) {
            for i in 0..n {
                self.mean[i] = reflect(self.mean[i], lo[i], hi[i]);
            }
        }
        self.generation += 1;
        self.decompose()
    }

    fn decompose(&mut self) -> Result<(), Error> {
        let eig = SymmetricEigen::new(self.cov.clone());
        if eig.eigenvalues.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Training("CMA-ES covariance lost positive definiteness".into()));
        }
        self.scales = eig.eigenvalues.iter().map(|v| v.sqrt()).collect();
        self.basis = eig.eigenvectors;
        Ok(())
    }
}

/// Candidate indices from best to worst. Ties (including non-finite values)
/// are broken by the candidate coordinates so the order never depends on
/// how the pairs were listed.
fn rank_order(candidates: &[Vec<f64>], fitness: &[f64]) -> Vec<usize> {
    let key = |f: f64| if f.is_finite() { f } else { f64::NEG_INFINITY };
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| {
        key(fitness[b]).total_cmp(&key(fitness[a])).then_with(|| {
            candidates[a]
                .iter()
                .zip(&candidates[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    order
}

/// Mirror `x` back into `[lo, hi]` (periodically for far excursions).
pub fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    if w <= 0.0 {
        return lo;
    }
    if x >= lo && x <= hi {
        return x;
    }
    let t = (x - lo).rem_euclid(2.0 * w);
    lo + if t > w { 2.0 * w - t } else { t }
}
