//! Synthetic-oracle experiment.
//!
//! The pretrained policy walks with known parameters `mu*`; a cycle of that
//! rollout (with its torques and ground reaction forces) becomes the reference.
//! The loop then starts from parameters moved away from `mu*` and must recover
//! them. As the ablation, an RL-only run refines the same initial policy for the
//! same number of PPO iterations and is evaluated with the nominal parameters.

use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use biogait::alternation::{evaluate_gait, run_alternation, segment_cycles, GaitCycle, LoopInputs, LoopReport, RmseSummary};
use biogait::config::RunConfig;
use biogait::mdp::{Env, ParamBounds, ParamVector, PARAM_DIM};
use biogait::policy::{DeterministicPolicy, Trainer};
use biogait::reference::{record_reference_from_rollout, save_reference};
use biogait::seeding::{rng_for, tag};
use rand::Rng;

use crate::commands::{error_scales, log_loop_row, pretrained, write_metrics};
use crate::{export, prepare_output, write_file, Setup};

pub struct OracleOutcome {
    pub report: LoopReport,
    pub truth: ParamVector,
    pub start: ParamVector,
    pub recovered: ParamVector,
    pub bounds: ParamBounds,
    pub initial_epsilon: f64,
    pub final_epsilon: f64,
    /// RMSE of the loop's final policy with the identified parameters.
    pub with_identification: RmseSummary,
    /// RMSE of the RL-only policy with the nominal parameters.
    pub rl_only: RmseSummary,
    /// The oracle cycle and the RL+ID evaluation cycles.
    pub accepted: Vec<GaitCycle>,
}

impl OracleOutcome {
    /// Largest recovery error over all parameters, in bound widths.
    pub fn max_recovery_error(&self) -> f64 {
        let (t, r) = (self.truth.to_array(), self.recovered.to_array());
        (0..PARAM_DIM)
            .filter(|&i| self.bounds.width(i) > 0.0)
            .map(|i| (r[i] - t[i]).abs() / self.bounds.width(i))
            .fold(0.0, f64::max)
    }
}

/// `oracle.params`, or a draw from the middle half of every bound.
pub fn oracle_params(cfg: &RunConfig, bounds: &ParamBounds) -> ParamVector {
    if let Some(p) = cfg.oracle.params {
        return p;
    }
    let mut rng = rng_for(cfg.seed, &[tag::ORACLE]);
    let u: Vec<f64> = (0..PARAM_DIM).map(|_| rng.random_range(0.25..0.75)).collect();
    bounds.from_unit(&u)
}

/// The first full cycle after the opening one, as the loop's evaluation does.
fn oracle_cycle(record: &biogait::mdp::GaitRecord, settle: f64) -> Result<GaitCycle> {
    let cycles = segment_cycles(record)?;
    cycles
        .iter()
        .find(|c| c.start_time >= settle)
        .or(cycles.first())
        .cloned()
        .context("oracle rollout has no gait cycle")
}

pub fn run(cfg: &RunConfig) -> Result<OracleOutcome> {
    let out = prepare_output(cfg)?;
    let setup = Setup::new(cfg)?;
    let trainer = pretrained(cfg, &setup.env, &out)?;
    let bounds = setup.env.bounds().clone();
    let truth = oracle_params(cfg, &bounds);
    let start = bounds.perturb(&truth, cfg.oracle.perturbation);

    let mut env = setup.env.clone();
    let mut controller = DeterministicPolicy::new(&trainer.policy, &trainer.norm);
    let (motion, rollout) = record_reference_from_rollout(&mut env, &mut controller, truth, cfg.oracle.record_cycle)
        .context("recording the oracle reference")?;
    save_reference(&out.join("oracle_reference.csv"), &motion)?;
    let target = Arc::new(motion);
    let reference_cycle = oracle_cycle(&rollout.record, env.control_reference().cycle_duration())?;

    let initial = trainer.clone();
    let inputs = LoopInputs {
        env: setup.env.clone(),
        target: target.clone(),
        reference_cycle: reference_cycle.clone(),
        scales: error_scales(&setup.env),
        start,
        cma: cfg.cma.clone(),
        config: cfg.alternation.clone(),
        seed: cfg.seed,
        workers: cfg.workers(),
        out_dir: Some(out.join("loop")),
    };
    let (report, final_trainer) = run_alternation(&inputs, trainer, log_loop_row)?;
    let recovered = report.params;
    write_file(&out.join("recovery.csv"), &export::recovery_csv(&bounds, &truth, &start, &recovered))?;

    let (with_identification, mut accepted) =
        evaluate_into(&out.join("rl_id"), cfg, &setup.env, &final_trainer, &recovered, &reference_cycle)?;
    accepted.insert(0, reference_cycle.clone());

    let mut rl_env = setup.env.clone();
    rl_env.set_target(target);
    let mut rl_only = initial;
    let refine = report.iterations.len() * cfg.alternation.refine_iterations;
    for _ in 0..refine {
        rl_only.iterate(&rl_env, cfg.workers())?;
    }
    let nominal = ParamVector::nominal(&setup.subject);
    let (rl_only, _) = evaluate_into(&out.join("rl_only"), cfg, &setup.env, &rl_only, &nominal, &reference_cycle)?;

    write_file(&out.join("ablation.csv"), &ablation_csv(&with_identification, &rl_only))?;
    eprintln!(
        "ablation rmse  RL+ID angles {:.4} moments {:.4} grf {:.4} | RL-only angles {:.4} moments {:.4} grf {:.4}",
        with_identification.angles,
        with_identification.moments,
        with_identification.grf,
        rl_only.angles,
        rl_only.moments,
        rl_only.grf
    );

    let initial_epsilon = report.initial.as_ref().map_or(f64::INFINITY, |r| r.epsilon);
    let final_epsilon = report.final_epsilon();
    Ok(OracleOutcome {
        report,
        truth,
        start,
        recovered,
        bounds,
        initial_epsilon,
        final_epsilon,
        with_identification,
        rl_only,
        accepted,
    })
}

/// Evaluate `trainer` with `params` and write the figure tables into `dir`.
/// A rollout that cannot be segmented counts as infinitely far off and has
/// no cycles.
fn evaluate_into(
    dir: &Path,
    cfg: &RunConfig,
    env: &Env,
    trainer: &Trainer,
    params: &ParamVector,
    reference: &GaitCycle,
) -> Result<(RmseSummary, Vec<GaitCycle>)> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    match evaluate_gait(env, &trainer.policy, &trainer.norm, params, reference, &error_scales(env), cfg.alternation.eval_cycles) {
        Ok(ev) => {
            write_metrics(dir, &ev, reference)?;
            Ok((ev.rmse, ev.cycles))
        }
        Err(biogait::Error::Segmentation(m)) => {
            eprintln!("{}: {m}", dir.display());
            let rmse = RmseSummary {
                angles: f64::INFINITY,
                moments: f64::INFINITY,
                grf: f64::INFINITY,
            };
            Ok((rmse, Vec::new()))
        }
        Err(e) => Err(e.into()),
    }
}

fn ablation_csv(with_id: &RmseSummary, rl_only: &RmseSummary) -> String {
    format!(
        "variant,angles_rad,moments_nm_per_kg,grf_n_per_kg\nrl_id,{},{},{}\nrl_only,{},{},{}\n",
        with_id.angles, with_id.moments, with_id.grf, rl_only.angles, rl_only.moments, rl_only.grf
    )
}
