//! CMA-ES and PPO checks.

use anyhow::Result;
use biogait::identification::CmaState;
use biogait::policy::{
    normalized_advantages, policy_loss_grad, ppo_update, value_loss_grad, Adam, ForwardCache, MlpNet, PolicyNet,
    PpoConfig, TrajectoryBatch,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Checks;

fn sphere(x: &[f64]) -> f64 {
    -x.iter().map(|v| v * v).sum::<f64>()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn generations(fitness: impl Fn(&[f64]) -> f64, permute: bool) -> Result<CmaState> {
    let mut state = CmaState::new(vec![0.2, -0.1, 0.4, 0.3], 0.5, 8)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let mut c = state.ask(&mut rng);
        if permute {
            c.reverse();
            c.swap(1, 5);
        }
        let f: Vec<f64> = c.iter().map(|x| fitness(x)).collect();
        state.tell(&c, &f)?;
    }
    Ok(state)
}

fn random_batch(obs_dim: usize, act_dim: usize, n: usize, rng: &mut ChaCha8Rng) -> TrajectoryBatch {
    let mut b = TrajectoryBatch::new(obs_dim, act_dim);
    for t in 0..n {
        b.obs.extend((0..obs_dim).map(|_| rng.random_range(-1.0..1.0)));
        b.actions.extend((0..act_dim).map(|_| rng.random_range(-1.0..1.0)));
        b.log_probs.push(rng.random_range(-3.0..-1.0));
        b.rewards.push(rng.random_range(0.0..1.0));
        b.values.push(rng.random_range(-1.0..1.0));
        b.ends.push(t % 7 == 6 || t + 1 == n);
        b.terminals.push(t % 14 == 13);
        b.bootstrap.push(rng.random_range(-1.0..1.0));
    }
    b.compute_gae(0.99, 0.95);
    b
}

/// Network weights first, then the log-std entries.
fn policy_param(p: &mut PolicyNet, k: usize) -> &mut f64 {
    let n = p.net.n_params();
    if k < n {
        &mut p.net.params_mut()[k]
    } else {
        &mut p.log_std[k - n]
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Largest relative disagreement between `analytic` and central differences
/// of `f` over the `n` parameters reached by `param`.
fn fd_check<T>(
    target: &mut T,
    n: usize,
    analytic: &[f64],
    param: impl Fn(&mut T, usize) -> &mut f64,
    f: impl Fn(&T) -> f64,
) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (k, a) in analytic.iter().enumerate().take(n) {
        *param(target, k) += h;
        let up = f(target);
        *param(target, k) -= 2.0 * h;
        let down = f(target);
        *param(target, k) += h;
        let fd = (up - down) / (2.0 * h);
        if (a - fd).abs() > 1e-10 {
            worst = worst.max(rel_err(*a, fd));
        }
    }
    worst
}

fn small_policy(rng: &mut ChaCha8Rng, log_std: f64) -> PolicyNet {
    PolicyNet {
        net: MlpNet::orthogonal(&[4, 2, 1], &[1.0, 1.0], rng),
        log_std: vec![log_std],
    }
}

pub fn optimizers(c: &mut Checks) -> Result<()> {
    let mut state = CmaState::new(vec![0.5; 12], 0.3, 8)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut evaluations = 0;
    while norm(&state.mean) >= 1e-6 && evaluations < 2000 {
        let cands = state.ask(&mut rng);
        let f: Vec<f64> = cands.iter().map(|x| sphere(x)).collect();
        evaluations += f.len();
        state.tell(&cands, &f)?;
    }
    c.below("cma_sphere12_mean_norm", norm(&state.mean), 1e-6);
    c.at_most("cma_sphere12_evaluations", evaluations as f64, 2000.0);

    let base = generations(sphere, false)?;
    let warped = generations(|x| (-sphere(x)).sqrt().mul_add(-3.0, 7.0).powi(3), false)?;
    c.holds("cma_rank_invariance_bit_exact", base == warped);
    c.holds("cma_permutation_invariance_bit_exact", base == generations(sphere, true)?);

    let mut r = ChaCha8Rng::seed_from_u64(5);
    let mut p = small_policy(&mut r, -0.3);
    let mut b = random_batch(4, 1, 12, &mut r);
    // log-probs next to the current policy keep every sample on the unclipped branch
    for i in 0..b.len() {
        b.log_probs[i] = p.log_prob(b.obs_row(i), b.action_row(i))? + 0.01;
    }
    let adv = normalized_advantages(&b.advantages);
    let idx: Vec<usize> = (0..b.len()).collect();
    let loss = |p: &PolicyNet| policy_loss_grad(p, &b, &adv, &idx, 0.2, 0.01).map_or(f64::NAN, |r| r.0);
    let (_, g, _) = policy_loss_grad(&p, &b, &adv, &idx, 0.2, 0.01)?;
    let n = p.net.n_params() + 1;
    c.at_most("ppo_policy_loss_fd_relative_error", fd_check(&mut p, n, &g, policy_param, loss), 1e-4);

    let mut v = MlpNet::orthogonal(&[4, 2, 1], &[1.0, 1.0], &mut r);
    let vb = random_batch(4, 1, 10, &mut r);
    let vidx: Vec<usize> = (0..vb.len()).collect();
    let (_, g) = value_loss_grad(&v, &vb, &vidx)?;
    let n = v.n_params();
    let err = fd_check(
        &mut v,
        n,
        &g,
        |v, k| &mut v.params_mut()[k],
        |v| value_loss_grad(v, &vb, &vidx).map_or(f64::NAN, |r| r.0),
    );
    c.at_most("ppo_value_loss_fd_relative_error", err, 1e-4);

    let mut p = small_policy(&mut r, 0.2);
    let (obs, a) = ([0.3, -0.7, 0.1, 0.9], [0.4]);
    let mut cache = ForwardCache::default();
    p.net.forward_cached(&obs, &mut cache)?;
    let (mut d_mean, mut d_ls) = (Vec::new(), vec![0.0]);
    p.log_prob_grad(&cache, &a, &mut d_mean, &mut d_ls);
    let mut g = vec![0.0; p.net.n_params()];
    p.net.backward(&mut cache, &d_mean, &mut g);
    g.push(d_ls[0]);
    let n = g.len();
    let err = fd_check(&mut p, n, &g, policy_param, |p| p.log_prob(&obs, &a).unwrap_or(f64::NAN));
    c.at_most("ppo_log_prob_fd_relative_error", err, 1e-4);

    let mut r = ChaCha8Rng::seed_from_u64(9);
    let mut p = PolicyNet::new(4, 2, 16, -0.5, &mut r);
    let mut v = MlpNet::orthogonal(&[4, 16, 16, 1], &[1.0, 1.0, 1.0], &mut r);
    let mut b = random_batch(4, 2, 256, &mut r);
    for i in 0..b.len() {
        b.log_probs[i] = p.log_prob(b.obs_row(i), b.action_row(i))?;
    }
    let adv = normalized_advantages(&b.advantages);
    let idx: Vec<usize> = (0..b.len()).collect();
    let before = policy_loss_grad(&p, &b, &adv, &idx, 0.2, 0.0)?.0;
    let config = PpoConfig {
        epochs: 1,
        minibatch: 256,
        batch_size: 256,
        learning_rate: 1e-3,
        ..PpoConfig::default()
    };
    let mut op = Adam::new(p.net.n_params() + 2, config.learning_rate);
    let mut ov = Adam::new(v.n_params(), config.learning_rate);
    ppo_update(&mut p, &mut v, &mut op, &mut ov, &b, &config, &mut r)?;
    let after = policy_loss_grad(&p, &b, &adv, &idx, 0.2, 0.0)?.0;
    c.below("ppo_surrogate_change_after_update", after - before, 0.0);
    Ok(())
}
