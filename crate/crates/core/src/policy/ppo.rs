use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::Error;

use super::{ForwardCache, MlpNet, PolicyNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch: usize,
    /// Environment steps collected per iteration.
    pub batch_size: usize,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: usize,
    pub init_log_std: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            learning_rate: 3e-4,
            epochs: 4,
            minibatch: 256,
            batch_size: 16384,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            hidden: 128,
            init_log_std: -1.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |key: &str, why: &str| Err(Error::Config(format!("ppo.{key}: {why}")));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip", "must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", "must lie in (0, 1]");
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad("lambda", "must lie in (0, 1]");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate", "must be positive");
        }
        if self.epochs == 0 || self.minibatch == 0 || self.batch_size == 0 || self.hidden == 0 {
            return bad("epochs/minibatch/batch_size/hidden", "must be at least 1");
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm", "must be positive");
        }
        Ok(())
    }
}

/// Transitions of one collection round, concatenated episode by episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryBatch {
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Normalized observations, row-major.
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// The episode (or its collected segment) ends after this step.
    pub ends: Vec<bool>,
    /// The episode ended by failure: no bootstrapping.
    pub terminals: Vec<bool>,
    /// Value of the next observation where a segment is cut without failure.
    pub bootstrap: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl TrajectoryBatch {
    pub fn new(obs_dim: usize, act_dim: usize) -> Self {
        Self {
            obs_dim,
            act_dim,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn obs_row(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action_row(&self, i: usize) -> &[f64] {
        &self.actions[i * self.act_dim..(i + 1) * self.act_dim]
    }

    pub fn append(&mut self, other: TrajectoryBatch) {
        self.obs.extend(other.obs);
        self.actions.extend(other.actions);
        self.log_probs.extend(other.log_probs);
        self.rewards.extend(other.rewards);
        self.values.extend(other.values);
        self.ends.extend(other.ends);
        self.terminals.extend(other.terminals);
        self.bootstrap.extend(other.bootstrap);
        self.advantages.extend(other.advantages);
        self.returns.extend(other.returns);
    }

    /// Fill `advantages` and `returns` by generalized advantage estimation.
    pub fn compute_gae(&mut self, gamma: f64, lambda: f64) {
        let (a, r) = gae(
            &self.rewards,
            &self.values,
            &self.ends,
            &self.terminals,
            &self.bootstrap,
            gamma,
            lambda,
        );
        self.advantages = a;
        self.returns = r;
    }
}

/// Generalized advantage estimation over concatenated episodes.
///
/// `delta_t = r_t + gamma V_{t+1} - V_t` with `V_{t+1}` taken from `bootstrap`
/// at a cut segment end and zero at a failure; `A_t = sum_k (gamma lambda)^k
/// delta_{t+k}` within an episode; returns are `A + V`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    ends: &[bool],
    terminals: &[bool],
    bootstrap: &[f64],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut last = 0.0;
    for t in (0..n).rev() {
        let next_value = if ends[t] {
            if terminals[t] {
                0.0
            } else {
                bootstrap[t]
            }
        } else {
            values[t + 1]
        };
        let delta = rewards[t] + gamma * next_value - values[t];
        let carry = if ends[t] { 0.0 } else { last };
        last = delta + gamma * lambda * carry;
        adv[t] = last;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Adam optimizer state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Scale `g` so its Euclidean norm is at most `max_norm`; returns the original norm.
pub fn clip_grad_norm(g: &mut [f64], max_norm: f64) -> f64 {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for x in g.iter_mut() {
            *x *= s;
        }
    }
    norm
}

/// Clipped surrogate for one sample: `min(rho A, clip(rho, 1-eps, 1+eps) A)`.
pub fn clipped_surrogate(ratio: f64, adv: f64, clip: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - clip, 1.0 + clip) * adv)
}

/// Mean negative clipped surrogate (minus entropy bonus) over `idx`, with its
/// gradient: network parameters first, then log-std entries.
pub fn policy_loss_grad(
    policy: &PolicyNet,
    batch: &TrajectoryBatch,
    advantages: &[f64],
    idx: &[usize],
    clip: f64,
    entropy_coef: f64,
) -> Result<(f64, Vec<f64>, PolicyStats), Error> {
    let n_net = policy.net.n_params();
    let act_dim = policy.act_dim();
    let mut grads = vec![0.0; n_net + act_dim];
    let mut cache = ForwardCache::default();
    let mut d_mean = Vec::with_capacity(act_dim);
    let mut d_ls = vec![0.0; act_dim];
    let mut stats = PolicyStats::default();
    let scale = 1.0 / idx.len() as f64;
    let mut loss = 0.0;
    for &i in idx {
        policy.net.forward_cached(batch.obs_row(i), &mut cache)?;
        d_ls.iter_mut().for_each(|x| *x = 0.0);
        let lp = policy.log_prob_grad(&cache, batch.action_row(i), &mut d_mean, &mut d_ls);
        let log_ratio = lp - batch.log_probs[i];
        let ratio = log_ratio.exp();
        let a = advantages[i];
        let unclipped = ratio * a;
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * a;
        loss -= unclipped.min(clipped) * scale;
        stats.approx_kl += ((ratio - 1.0) - log_ratio) * scale;
        if (ratio - 1.0).abs() > clip {
            stats.clip_fraction += scale;
        }
        // Gradient flows only through the unclipped branch when it is the minimum.
        if unclipped <= clipped {
            let coef = -a * ratio * scale;
            for g in d_mean.iter_mut() {
                *g *= coef;
            }
            policy.net.backward(&mut cache, &d_mean, &mut grads[..n_net]);
            for k in 0..act_dim {
                grads[n_net + k] += coef * d_ls[k];
            }
        }
    }
    if entropy_coef != 0.0 {
        loss -= entropy_coef * policy.entropy();
        for k in 0..act_dim {
            grads[n_net + k] -= entropy_coef;
        }
    }
    stats.loss = loss;
    Ok((loss, grads, stats))
}

/// `0.5 mean (V(s) - R)^2` over `idx` and its gradient.
pub fn value_loss_grad(value: &MlpNet, batch: &TrajectoryBatch, idx: &[usize]) -> Result<(f64, Vec<f64>), Error> {
    let mut grads = vec![0.0; value.n_params()];
    let mut cache = ForwardCache::default();
    let scale = 1.0 / idx.len() as f64;
    let mut loss = 0.0;
    for &i in idx {
        value.forward_cached(batch.obs_row(i), &mut cache)?;
        let err = cache.output()[0] - batch.returns[i];
        loss += 0.5 * err * err * scale;
        value.backward(&mut cache, &[err * scale], &mut grads);
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyStats {
    pub loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
}

/// Advantages standardized to zero mean and unit variance.
pub fn normalized_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    adv.iter().map(|a| (a - mean) / std).collect()
}

/// PPO epochs over `batch` (advantages already computed): shuffled minibatches,
/// clipped surrogate for the policy, squared error for the value network, each
/// with its own Adam state and gradient-norm clipping.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut PolicyNet,
    value: &mut MlpNet,
    opt_policy: &mut Adam,
    opt_value: &mut Adam,
    batch: &TrajectoryBatch,
    config: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats, Error> {
    if batch.is_empty() {
        return Err(Error::Training("empty batch".into()));
    }
    let adv = normalized_advantages(&batch.advantages);
    let n = batch.len();
    let mut order: Vec<usize> = (0..n).collect();
    let n_net = policy.net.n_params();
    let mut flat = Vec::with_capacity(n_net + policy.act_dim());
    let mut stats = UpdateStats::default();
    let mut count = 0.0;
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(config.minibatch) {
            let (pl, mut pg, ps) = policy_loss_grad(policy, batch, &adv, chunk, config.clip, config.entropy_coef)?;
            let (vl, mut vg) = value_loss_grad(value, batch, chunk)?;
            if !pl.is_finite() || !vl.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss (policy {pl}, value {vl}); update aborted"
                )));
            }
            clip_grad_norm(&mut pg, config.max_grad_norm);
            clip_grad_norm(&mut vg, config.max_grad_norm);

            flat.clear();
            flat.extend_from_slice(policy.net.params());
            flat.extend_from_slice(&policy.log_std);
            opt_policy.step(&mut flat, &pg);
            policy.net.params_mut().copy_from_slice(&flat[..n_net]);
            policy.log_std.copy_from_slice(&flat[n_net..]);
            policy.clamp_log_std();
            opt_value.step(value.params_mut(), &vg);

            stats.policy_loss += pl;
            stats.value_loss += vl;
            stats.approx_kl += ps.approx_kl;
            stats.clip_fraction += ps.clip_fraction;
            count += 1.0;
        }
    }
    stats.policy_loss /= count;
    stats.value_loss /= count;
    stats.approx_kl /= count;
    stats.clip_fraction /= count;
    stats.entropy = policy.entropy();
    Ok(stats)
}
