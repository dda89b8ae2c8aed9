use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mdp::{Env, ACTION_DIM, OBS_DIM};
use crate::seeding::{rng_for, tag};
use crate::Error;

use super::{ppo_update, Adam, ForwardCache, MlpNet, PolicyNet, PpoConfig, RunningNorm, TrajectoryBatch};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Per-iteration training statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub steps: usize,
    pub episodes: usize,
    /// Mean undiscounted reward sum of the episodes completed this iteration.
    pub mean_return: f64,
    pub mean_discounted_return: f64,
    pub mean_length: f64,
    /// Fraction of completed episodes that ended by falling or diverging.
    pub fail_fraction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
}

impl IterationStats {
    pub const CSV_HEADER: &'static str = "iteration,steps,episodes,mean_return,mean_discounted_return,mean_length,fail_fraction,policy_loss,value_loss,approx_kl,clip_fraction,entropy";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.steps,
            self.episodes,
            self.mean_return,
            self.mean_discounted_return,
            self.mean_length,
            self.fail_fraction,
            self.policy_loss,
            self.value_loss,
            self.approx_kl,
            self.clip_fraction,
            self.entropy
        )
    }
}

pub fn curve_to_csv(curve: &[IterationStats]) -> String {
    let mut out = String::from(IterationStats::CSV_HEADER);
    out.push('\n');
    for s in curve {
        writeln!(out, "{}", s.csv_row()).expect("string write");
    }
    out
}

/// Serialized training state: networks, observation statistics, optimizer
/// moments and the seed/iteration pair that positions every random stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub iteration: usize,
    pub ppo: PpoConfig,
    pub policy: PolicyNet,
    pub value: MlpNet,
    pub norm: RunningNorm,
    pub opt_policy: Adam,
    pub opt_value: Adam,
    pub best: Option<BestPolicy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestPolicy {
    pub iteration: usize,
    pub mean_return: f64,
    pub policy: PolicyNet,
    pub norm: RunningNorm,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String, Error> {
        serde_json::to_string(self).map_err(|e| Error::Format(format!("checkpoint: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("checkpoint: {e}")))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[derive(Debug, Clone, Default)]
struct EpisodeSummary {
    ret: f64,
    discounted: f64,
    len: usize,
    failed: bool,
}

struct WorkerOutput {
    batch: TrajectoryBatch,
    raw_obs: Vec<f64>,
    episodes: Vec<EpisodeSummary>,
}

/// PPO trainer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub seed: u64,
    pub iteration: usize,
    pub config: PpoConfig,
    pub policy: PolicyNet,
    pub value: MlpNet,
    pub norm: RunningNorm,
    pub opt_policy: Adam,
    pub opt_value: Adam,
    pub best: Option<BestPolicy>,
}

impl Trainer {
    pub fn new(config: PpoConfig, seed: u64) -> Result<Self, Error> {
        config.validate()?;
        let mut rng = rng_for(seed, &[tag::INIT]);
        let policy = PolicyNet::new(OBS_DIM, ACTION_DIM, config.hidden, config.init_log_std, &mut rng);
        let value = MlpNet::orthogonal(&[OBS_DIM, config.hidden, config.hidden, 1], &[1.0, 1.0, 1.0], &mut rng);
        let n_pi = policy.net.n_params() + policy.act_dim();
        Ok(Self {
            seed,
            iteration: 0,
            opt_policy: Adam::new(n_pi, config.learning_rate),
            opt_value: Adam::new(value.n_params(), config.learning_rate),
            config,
            policy,
            value,
            norm: RunningNorm::new(OBS_DIM),
            best: None,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            seed: self.seed,
            iteration: self.iteration,
            ppo: self.config.clone(),
            policy: self.policy.clone(),
            value: self.value.clone(),
            norm: self.norm.clone(),
            opt_policy: self.opt_policy.clone(),
            opt_value: self.opt_value.clone(),
            best: self.best.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self, Error> {
        ck.ppo.validate()?;
        if ck.policy.net.input_dim() != OBS_DIM || ck.policy.act_dim() != ACTION_DIM {
            return Err(Error::Format(format!(
                "checkpoint networks expect {} observations and {} actions; this build uses {OBS_DIM} and {ACTION_DIM}",
                ck.policy.net.input_dim(),
                ck.policy.act_dim()
            )));
        }
        Ok(Self {
            seed: ck.seed,
            iteration: ck.iteration,
            config: ck.ppo,
            policy: ck.policy,
            value: ck.value,
            norm: ck.norm,
            opt_policy: ck.opt_policy,
            opt_value: ck.opt_value,
            best: ck.best,
        })
    }

    /// Policy and statistics with the best training return so far, or the current ones.
    pub fn best_policy(&self) -> (&PolicyNet, &RunningNorm) {
        match &self.best {
            Some(b) => (&b.policy, &b.norm),
            None => (&self.policy, &self.norm),
        }
    }

    /// Collect one batch with `workers` environments and apply a PPO update.
    pub fn iterate(&mut self, env: &Env, workers: usize) -> Result<IterationStats, Error> {
        let workers = workers.max(1);
        let per_worker = self.config.batch_size.div_ceil(workers);
        let iteration = self.iteration as u64;
        let seed = self.seed;
        let run = |w: usize| -> Result<WorkerOutput, Error> {
            let mut env = env.clone();
            let mut rng = rng_for(seed, &[tag::COLLECT, iteration, w as u64]);
            collect(&mut env, &self.policy, &self.value, &self.norm, per_worker, &mut rng)
        };
        let outputs: Vec<Result<WorkerOutput, Error>> = if workers == 1 {
            vec![run(0)]
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::Training(format!("thread pool: {e}")))?;
            pool.install(|| (0..workers).into_par_iter().map(run).collect())
        };

        let mut batch = TrajectoryBatch::new(OBS_DIM, ACTION_DIM);
        let mut episodes = Vec::new();
        let mut raw = Vec::new();
        for out in outputs {
            let out = out?;
            batch.append(out.batch);
            raw.extend(out.raw_obs);
            episodes.extend(out.episodes);
        }
        let collected_with = (self.policy.clone(), self.norm.clone());
        self.norm.update_batch(raw.chunks(OBS_DIM));
        batch.compute_gae(self.config.gamma, self.config.lambda);

        let mut rng = rng_for(seed, &[tag::UPDATE, iteration]);
        let upd = ppo_update(
            &mut self.policy,
            &mut self.value,
            &mut self.opt_policy,
            &mut self.opt_value,
            &batch,
            &self.config,
            &mut rng,
        )?;

        let n_ep = episodes.len();
        let mean = |f: &dyn Fn(&EpisodeSummary) -> f64| {
            if n_ep == 0 {
                0.0
            } else {
                episodes.iter().map(f).sum::<f64>() / n_ep as f64
            }
        };
        let stats = IterationStats {
            iteration: self.iteration,
            steps: batch.len(),
            episodes: n_ep,
            mean_return: mean(&|e| e.ret),
            mean_discounted_return: mean(&|e| e.discounted),
            mean_length: mean(&|e| e.len as f64),
            fail_fraction: mean(&|e| if e.failed { 1.0 } else { 0.0 }),
            policy_loss: upd.policy_loss,
            value_loss: upd.value_loss,
            approx_kl: upd.approx_kl,
            clip_fraction: upd.clip_fraction,
            entropy: upd.entropy,
        };
        // The returns belong to the policy that collected the batch.
        if n_ep > 0 && self.best.as_ref().is_none_or(|b| stats.mean_return > b.mean_return) {
            let (policy, norm) = collected_with;
            self.best = Some(BestPolicy {
                iteration: self.iteration,
                mean_return: stats.mean_return,
                policy,
                norm,
            });
        }
        self.iteration += 1;
        Ok(stats)
    }
}

/// Roll out the stochastic policy for `steps` transitions, resetting on termination.
fn collect<R: Rng + ?Sized>(
    env: &mut Env,
    policy: &PolicyNet,
    value: &MlpNet,
    norm: &RunningNorm,
    steps: usize,
    rng: &mut R,
) -> Result<WorkerOutput, Error> {
    let mut batch = TrajectoryBatch::new(OBS_DIM, ACTION_DIM);
    let mut raw_obs = Vec::with_capacity(steps * OBS_DIM);
    let mut episodes = Vec::new();
    let mut cache = ForwardCache::default();
    let mut z = Vec::with_capacity(OBS_DIM);
    let gamma = env.config().gamma;

    let mut obs = env.reset(rng)?;
    let mut ep = EpisodeSummary::default();
    let mut discount = 1.0;
    for t in 0..steps {
        norm.normalize_into(&obs, &mut z);
        value.forward_cached(&z, &mut cache)?;
        let v = cache.output()[0];
        let (action, lp) = policy.sample_action(&z, rng)?;
        let out = env.step(&action)?;

        raw_obs.extend_from_slice(&obs);
        batch.obs.extend_from_slice(&z);
        batch.actions.extend_from_slice(&action);
        batch.log_probs.push(lp);
        batch.rewards.push(out.reward.total);
        batch.values.push(v);
        ep.ret += out.reward.total;
        ep.discounted += discount * out.reward.total;
        discount *= gamma;
        ep.len += 1;

        let last = t + 1 == steps;
        match out.done {
            Some(reason) => {
                let failed = reason.is_failure();
                batch.ends.push(true);
                batch.terminals.push(failed);
                batch.bootstrap.push(if failed { 0.0 } else { value_of(value, norm, &out.obs, &mut z, &mut cache)? });
                ep.failed = failed;
                episodes.push(std::mem::take(&mut ep));
                discount = 1.0;
                if !last {
                    obs = env.reset(rng)?;
                }
            }
            None => {
                batch.ends.push(last);
                batch.terminals.push(false);
                batch.bootstrap.push(if last { value_of(value, norm, &out.obs, &mut z, &mut cache)? } else { 0.0 });
                obs = out.obs;
            }
        }
    }
    Ok(WorkerOutput {
        batch,
        raw_obs,
        episodes,
    })
}

fn value_of(value: &MlpNet, norm: &RunningNorm, obs: &[f64], z: &mut Vec<f64>, cache: &mut ForwardCache) -> Result<f64, Error> {
    norm.normalize_into(obs, z);
    value.forward_cached(z, cache)?;
    Ok(cache.output()[0])
}

/// Run `iterations` PPO iterations, calling `on_iteration` after each one.
pub fn train_policy(
    trainer: &mut Trainer,
    env: &Env,
    iterations: usize,
    workers: usize,
    mut on_iteration: impl FnMut(&Trainer, &IterationStats) -> Result<(), Error>,
) -> Result<Vec<IterationStats>, Error> {
    let mut curve = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let stats = trainer.iterate(env, workers)?;
        on_iteration(trainer, &stats)?;
        curve.push(stats);
    }
    Ok(curve)
}
