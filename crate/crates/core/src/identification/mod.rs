//! Model parameter identification: CMA-ES over `mu`, maximizing the reward a
//! trained policy collects against the reference when simulated with `mu`.

mod cma;

pub use cma::{reflect, CmaState};

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mdp::{Env, ParamBounds, ParamVector, PARAM_NAMES};
use crate::policy::{DeterministicPolicy, PolicyNet, RunningNorm};
use crate::seeding::{rng_for, tag};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmaConfig {
    pub generations: usize,
    pub population: usize,
    /// Initial step size as a fraction of each bound width.
    pub sigma0: f64,
    /// Control steps per evaluation rollout.
    pub horizon: usize,
    pub n_rollouts: usize,
    /// Stop once every coordinate's sampling std (in bound widths) is below this.
    pub tolerance: f64,
}

impl Default for CmaConfig {
    fn default() -> Self {
        Self {
            generations: 200,
            population: 8,
            sigma0: 0.3,
            horizon: 99,
            n_rollouts: 1,
            tolerance: 1e-4,
        }
    }
}

impl CmaConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.generations == 0 {
            return Err(Error::Config("cma.generations must be at least 1".into()));
        }
        if self.population < 2 {
            return Err(Error::Config("cma.population must be at least 2".into()));
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(Error::Config("cma.sigma0 must be positive".into()));
        }
        if self.horizon == 0 || self.n_rollouts == 0 {
            return Err(Error::Config("cma.horizon and cma.n_rollouts must be at least 1".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config("cma.tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

/// Fitness summary of one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best: f64,
    pub median: f64,
    pub mean: f64,
    pub best_ever: f64,
    pub sigma: f64,
    /// Distribution mean in the caller's units.
    pub center: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSearch {
    pub best: Vec<f64>,
    pub best_fitness: f64,
    pub history: Vec<GenerationRecord>,
    pub evaluations: usize,
    pub converged: bool,
}

/// Maximize `fitness` over the box `[lo, hi]` starting at `start`.
///
/// Each non-degenerate coordinate is mapped to [0, 1] before the search, so
/// `sigma0` is a fraction of the bound width. Collapsed coordinates stay at
/// their bound; if all are collapsed the point is returned without evaluating.
/// Non-finite fitness ranks last.
#[allow(clippy::too_many_arguments)]
pub fn maximize_in_box<F>(
    lo: &[f64],
    hi: &[f64],
    start: &[f64],
    config: &CmaConfig,
    seed: u64,
    workers: usize,
    fitness: F,
    mut on_generation: impl FnMut(&GenerationRecord) -> Result<(), Error>,
) -> Result<BoxSearch, Error>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    let d = lo.len();
    if hi.len() != d || start.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: if hi.len() != d { hi.len() } else { start.len() },
        });
    }
    if lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
        return Err(Error::Config("identification bounds need lo <= hi".into()));
    }
    let active: Vec<usize> = (0..d).filter(|&i| hi[i] > lo[i]).collect();
    let to_full = |u: &[f64]| -> Vec<f64> {
        let mut x = lo.to_vec();
        for (k, &i) in active.iter().enumerate() {
            x[i] = lo[i] + u[k] * (hi[i] - lo[i]);
        }
        x
    };
    if active.is_empty() {
        return Ok(BoxSearch {
            best: lo.to_vec(),
            best_fitness: f64::NAN,
            history: Vec::new(),
            evaluations: 0,
            converged: true,
        });
    }

    let start_unit: Vec<f64> = active
        .iter()
        .map(|&i| ((start[i] - lo[i]) / (hi[i] - lo[i])).clamp(0.0, 1.0))
        .collect();
    let n = active.len();
    let mut state = CmaState::new(start_unit, config.sigma0, config.population)?
        .with_bounds(vec![0.0; n], vec![1.0; n])?;

    let pool = if workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::Training(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let mut best = to_full(&state.mean);
    let mut best_fitness = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(config.generations);
    let mut evaluations = 0;
    let mut converged = false;
    for g in 0..config.generations {
        let mut rng = rng_for(seed, &[tag::CMA, g as u64]);
        let candidates = state.ask(&mut rng);
        let full: Vec<Vec<f64>> = candidates.iter().map(|u| to_full(u)).collect();
        let scores: Vec<f64> = match &pool {
            Some(pool) => pool.install(|| full.par_iter().map(|x| fitness(x)).collect()),
            None => full.iter().map(|x| fitness(x)).collect(),
        };
        evaluations += scores.len();
        for (x, &f) in full.iter().zip(&scores) {
            if f.is_finite() && f > best_fitness {
                best_fitness = f;
                best = x.clone();
            }
        }
        state.tell(&candidates, &scores)?;

        let record = GenerationRecord {
            generation: g,
            best: scores.iter().copied().fold(f64::NEG_INFINITY, |a, b| if b > a { b } else { a }),
            median: median(&scores),
            mean: scores.iter().sum::<f64>() / scores.len() as f64,
            best_ever: best_fitness,
            sigma: state.sigma,
            center: to_full(&state.mean),
        };
        on_generation(&record)?;
        history.push(record);
        if state.max_coordinate_std() < config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(BoxSearch {
        best,
        best_fitness,
        history,
        evaluations,
        converged,
    })
}

fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values
        .iter()
        .map(|f| if f.is_finite() { *f } else { f64::NEG_INFINITY })
        .collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Sum of rewards of a deterministic, push-free rollout from phase 0 with the
/// model built from `mu`, averaged over `n_rollouts`. Falling early simply
/// ends the sum.
pub fn evaluate_candidate(
    mu: &ParamVector,
    policy: &PolicyNet,
    norm: &RunningNorm,
    env: &Env,
    horizon: usize,
    n_rollouts: usize,
) -> Result<f64, Error> {
    let mut env = env.clone();
    env.set_horizon(horizon);
    let mut total = 0.0;
    for _ in 0..n_rollouts.max(1) {
        let obs = env.reset_with(*mu, 0.0, None)?;
        let mut controller = DeterministicPolicy::new(policy, norm);
        total += env.run_episode(&mut controller, obs)?.total_reward;
    }
    Ok(total / n_rollouts.max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub params: ParamVector,
    pub fitness: f64,
    pub history: Vec<GenerationRecord>,
    pub evaluations: usize,
    pub converged: bool,
}

/// CMA-ES search for the `mu` under which `policy` collects the most reward
/// in `env` (whose target reference is the data being explained).
///
/// Candidates whose model cannot be built or simulated rank last.
#[allow(clippy::too_many_arguments)]
pub fn identify_parameters(
    policy: &PolicyNet,
    norm: &RunningNorm,
    env: &Env,
    bounds: &ParamBounds,
    start: &ParamVector,
    config: &CmaConfig,
    seed: u64,
    workers: usize,
    on_generation: impl FnMut(&GenerationRecord) -> Result<(), Error>,
) -> Result<Identification, Error> {
    bounds.validate()?;
    let fitness = |x: &[f64]| -> f64 {
        ParamVector::from_slice(x)
            .and_then(|mu| evaluate_candidate(&mu, policy, norm, env, config.horizon, config.n_rollouts))
            .unwrap_or(f64::NAN)
    };
    let search = maximize_in_box(
        &bounds.lo,
        &bounds.hi,
        &start.to_array(),
        config,
        seed,
        workers,
        fitness,
        on_generation,
    )?;
    Ok(Identification {
        params: ParamVector::from_slice(&search.best)?,
        fitness: search.best_fitness,
        history: search.history,
        evaluations: search.evaluations,
        converged: search.converged,
    })
}

pub fn history_csv_header() -> String {
    let mut s = String::from("generation,best_fitness,median_fitness,mean_fitness,best_ever,sigma");
    for name in PARAM_NAMES {
        s.push(',');
        s.push_str(name);
    }
    s
}

pub fn history_csv_row(r: &GenerationRecord) -> String {
    let mut s = format!(
        "{},{},{},{},{},{}",
        r.generation, r.best, r.median, r.mean, r.best_ever, r.sigma
    );
    for v in &r.center {
        let _ = write!(s, ",{v}");
    }
    s
}

pub fn history_to_csv(history: &[GenerationRecord]) -> String {
    let mut s = history_csv_header();
    s.push('\n');
    for r in history {
        s.push_str(&history_csv_row(r));
        s.push('\n');
    }
    s
}

pub fn save_history(path: &Path, history: &[GenerationRecord]) -> Result<(), Error> {
    std::fs::write(path, history_to_csv(history)).map_err(|e| Error::io(path, e))
}
