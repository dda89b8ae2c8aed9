use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::mdp::Controller;
use crate::Error;

use super::{ForwardCache, MlpNet, RunningNorm};

pub const LOG_STD_MIN: f64 = -4.0;
pub const LOG_STD_MAX: f64 = 1.0;

/// Diagonal Gaussian policy: MLP mean and a state-independent log-std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub net: MlpNet,
    pub log_std: Vec<f64>,
}

/// Log-density of `a` under N(mean, diag(exp(log_std))^2).
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], a: &[f64]) -> f64 {
    let mut lp = -0.5 * mean.len() as f64 * (2.0 * PI).ln();
    for i in 0..mean.len() {
        let z = (a[i] - mean[i]) * (-log_std[i]).exp();
        lp -= log_std[i] + 0.5 * z * z;
    }
    lp
}

impl PolicyNet {
    /// 2 x `hidden` tanh MLP, orthogonal init (gain 1, output gain 0.01),
    /// log-std initialized at `init_log_std`.
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: usize, init_log_std: f64, rng: &mut R) -> Self {
        Self {
            net: MlpNet::orthogonal(&[obs_dim, hidden, hidden, act_dim], &[1.0, 1.0, 0.01], rng),
            log_std: vec![init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); act_dim],
        }
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>, Error> {
        self.net.forward(obs)
    }

    pub fn clamp_log_std(&mut self) {
        for v in &mut self.log_std {
            *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    /// `a = mean + std * z` with `z ~ N(0, I)`; returns the action and its log-density.
    pub fn sample_action<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64), Error> {
        let mean = self.mean(obs)?;
        let a: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let lp = gaussian_log_prob(&mean, &self.log_std, &a);
        Ok((a, lp))
    }

    pub fn log_prob(&self, obs: &[f64], a: &[f64]) -> Result<f64, Error> {
        Ok(gaussian_log_prob(&self.mean(obs)?, &self.log_std, a))
    }

    /// Log-density at `a` plus its gradient: `d lp / d mean` is written to
    /// `d_mean` and `d lp / d log_std` added to `d_log_std`. `cache` must hold
    /// the forward pass for the observation.
    pub fn log_prob_grad(&self, cache: &ForwardCache, a: &[f64], d_mean: &mut Vec<f64>, d_log_std: &mut [f64]) -> f64 {
        let mean = cache.output();
        d_mean.clear();
        let mut lp = -0.5 * mean.len() as f64 * (2.0 * PI).ln();
        for i in 0..mean.len() {
            // Same arithmetic as `gaussian_log_prob`, so ratios at the
            // collection parameters are exactly 1.
            let inv_std = (-self.log_std[i]).exp();
            let z = (a[i] - mean[i]) * inv_std;
            lp -= self.log_std[i] + 0.5 * z * z;
            d_mean.push(z * inv_std);
            d_log_std[i] += z * z - 1.0;
        }
        lp
    }

    /// Differential entropy of the action distribution.
    pub fn entropy(&self) -> f64 {
        self.log_std
            .iter()
            .map(|ls| ls + 0.5 * (2.0 * PI * std::f64::consts::E).ln())
            .sum()
    }
}

/// Mean action of a policy behind frozen observation statistics.
#[derive(Debug, Clone)]
pub struct DeterministicPolicy<'a> {
    pub policy: &'a PolicyNet,
    pub norm: &'a RunningNorm,
    buf: Vec<f64>,
}

impl<'a> DeterministicPolicy<'a> {
    pub fn new(policy: &'a PolicyNet, norm: &'a RunningNorm) -> Self {
        Self {
            policy,
            norm,
            buf: Vec::new(),
        }
    }
}

impl Controller for DeterministicPolicy<'_> {
    fn act(&mut self, obs: &[f64]) -> Vec<f64> {
        self.norm.normalize_into(obs, &mut self.buf);
        self.policy
            .mean(&self.buf)
            .unwrap_or_else(|_| vec![0.0; self.policy.act_dim()])
    }
}
