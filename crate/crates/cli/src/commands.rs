use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use biogait::alternation::{evaluate_gait, run_alternation, ErrorScales, Evaluation, GaitCycle, LoopInputs, LoopReport};
use biogait::config::RunConfig;
use biogait::identification::{identify_parameters, save_history, Identification};
use biogait::mdp::{Env, ParamVector, PARAM_NAMES};
use biogait::policy::{train_policy, Checkpoint, IterationStats, Trainer};
use biogait::reference::{save_reference, write_roster};

use crate::export;
use crate::{prepare_output, require_checkpoint, trainer_for, write_file, Setup};

/// Write the configured reference gait and the subject's roster entry.
pub fn synth_ref(cfg: &RunConfig) -> Result<PathBuf> {
    let out = prepare_output(cfg)?;
    let setup = Setup::new(cfg)?;
    let path = out.join("reference.csv");
    save_reference(&path, &setup.reference)?;
    write_roster(&out.join("subject.csv"), std::slice::from_ref(&setup.subject))?;
    eprintln!(
        "reference: {} frames, {:.3} s cycle, {:.3} m/s -> {}",
        setup.reference.len(),
        setup.reference.cycle_duration(),
        setup.reference.speed(),
        path.display()
    );
    Ok(path)
}

fn log_iteration(s: &IterationStats) {
    eprintln!(
        "iter {:4}  return {:9.2}  length {:6.1}  fail {:.2}  kl {:.4}  entropy {:.3}",
        s.iteration, s.mean_return, s.mean_length, s.fail_fraction, s.approx_kl, s.entropy
    );
}

/// Run `iterations` PPO iterations in `dir`, appending to `curve.csv` and
/// saving `checkpoint.json` after each one. Curve rows from an interrupted
/// earlier run beyond the checkpoint's iteration are dropped first.
pub fn train_in(env: &Env, trainer: &mut Trainer, iterations: usize, workers: usize, dir: &Path) -> Result<Vec<IterationStats>> {
    let ck_path = dir.join("checkpoint.json");
    let csv_path = dir.join("curve.csv");
    let mut kept = format!("{}\n", IterationStats::CSV_HEADER);
    if let Ok(text) = std::fs::read_to_string(&csv_path) {
        for line in text.lines().skip(1) {
            match line.split(',').next().and_then(|v| v.parse::<usize>().ok()) {
                Some(i) if i < trainer.iteration => {
                    kept.push_str(line);
                    kept.push('\n');
                }
                _ => {}
            }
        }
    }
    write_file(&csv_path, &kept)?;
    trainer.checkpoint().save(&ck_path)?;
    let curve = train_policy(trainer, env, iterations, workers, |t, s| {
        log_iteration(s);
        let mut f = std::fs::OpenOptions::new()
            .append(true)
            .open(&csv_path)
            .map_err(|e| biogait::Error::io(&csv_path, e))?;
        writeln!(f, "{}", s.csv_row()).map_err(|e| biogait::Error::io(&csv_path, e))?;
        t.checkpoint().save(&ck_path)
    })?;
    Ok(curve)
}

pub struct TrainOutput {
    pub trainer: Trainer,
    pub curve: Vec<IterationStats>,
    pub dir: PathBuf,
}

pub fn train(cfg: &RunConfig) -> Result<TrainOutput> {
    let out = prepare_output(cfg)?;
    let setup = Setup::new(cfg)?;
    let mut trainer = trainer_for(cfg)?;
    let curve = train_in(&setup.env, &mut trainer, cfg.train.iterations, cfg.workers(), &out)?;
    Ok(TrainOutput {
        trainer,
        curve,
        dir: out,
    })
}

/// `[env.params]` table for pasting into a run config.
fn params_toml(mu: &ParamVector) -> Result<String> {
    #[derive(serde::Serialize)]
    struct Wrapper<'a> {
        env: Inner<'a>,
    }
    #[derive(serde::Serialize)]
    struct Inner<'a> {
        params: &'a ParamVector,
    }
    Ok(toml::to_string(&Wrapper {
        env: Inner { params: mu },
    })?)
}

fn start_params(cfg: &RunConfig, setup: &Setup) -> ParamVector {
    cfg.env.params.unwrap_or_else(|| ParamVector::nominal(&setup.subject))
}

/// CMA-ES identification of `mu` for the checkpoint's policy against the reference.
pub fn identify(cfg: &RunConfig) -> Result<Identification> {
    let out = prepare_output(cfg)?;
    let setup = Setup::new(cfg)?;
    let trainer = require_checkpoint(cfg, "identify")?;
    let start = start_params(cfg, &setup);
    let id = identify_parameters(
        &trainer.policy,
        &trainer.norm,
        &setup.env,
        setup.env.bounds(),
        &start,
        &cfg.cma,
        cfg.seed,
        cfg.workers(),
        |g| {
            eprintln!("generation {:4}  best {:9.3}  median {:9.3}  sigma {:.4}", g.generation, g.best, g.median, g.sigma);
            Ok(())
        },
    )?;
    save_history(&out.join("identification.csv"), &id.history)?;
    write_file(&out.join("mu.csv"), &export::params_csv(&id.params))?;
    write_file(&out.join("mu.toml"), &params_toml(&id.params)?)?;
    for (name, v) in PARAM_NAMES.iter().zip(id.params.to_array()) {
        eprintln!("{name:>16} = {v:.6}");
    }
    Ok(id)
}

pub fn error_scales(env: &Env) -> ErrorScales {
    ErrorScales::new(env.subject().mass, env.model().standing_pelvis_height())
}

/// Alternation against the configured reference, or the synthetic-oracle
/// experiment when `oracle.enabled` is set.
pub fn run_loop(cfg: &RunConfig) -> Result<LoopReport> {
    if cfg.oracle.enabled {
        return Ok(crate::oracle::run(cfg)?.report);
    }
    let out = prepare_output(cfg)?;
    let setup = Setup::new(cfg)?;
    let trainer = pretrained(cfg, &setup.env, &out)?;
    let inputs = LoopInputs {
        target: setup.reference.clone(),
        reference_cycle: GaitCycle::from_reference(&setup.reference, setup.subject.mass),
        scales: error_scales(&setup.env),
        start: start_params(cfg, &setup),
        cma: cfg.cma.clone(),
        config: cfg.alternation.clone(),
        seed: cfg.seed,
        workers: cfg.workers(),
        out_dir: Some(out.join("loop")),
        env: setup.env,
    };
    let (report, _) = run_alternation(&inputs, trainer, log_loop_row)?;
    Ok(report)
}

pub(crate) fn log_loop_row(r: &biogait::alternation::LoopIteration) {
    if r.failed {
        eprintln!("loop {:2}  failed: {}", r.iteration, r.note);
    } else {
        eprintln!(
            "loop {:2}  epsilon {:9.3}  best {:9.3}  rmse angles {:.4} moments {:.4} grf {:.4}",
            r.iteration, r.epsilon, r.best_epsilon, r.rmse.angles, r.rmse.moments, r.rmse.grf
        );
    }
}

/// The checkpoint's trainer, or one trained for `train.iterations` in
/// `out/pretrain` (continuing an interrupted pretraining run).
pub(crate) fn pretrained(cfg: &RunConfig, env: &Env, out: &Path) -> Result<Trainer> {
    if cfg.train.checkpoint.is_some() {
        return trainer_for(cfg);
    }
    let dir = out.join("pretrain");
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let ck = dir.join("checkpoint.json");
    let mut trainer = if ck.exists() {
        Trainer::from_checkpoint(Checkpoint::load(&ck)?)?
    } else {
        trainer_for(cfg)?
    };
    let remaining = cfg.train.iterations.saturating_sub(trainer.iteration);
    if remaining > 0 {
        train_in(env, &mut trainer, remaining, cfg.workers(), &dir)?;
    }
    Ok(trainer)
}

/// Write the figure tables for one evaluation against a reference cycle.
pub fn write_metrics(dir: &Path, eval: &Evaluation, reference: &GaitCycle) -> Result<()> {
    let sim = eval.cycles.first().context("evaluation produced no gait cycle")?;
    write_file(&dir.join("joint_angles.csv"), &export::joint_angles_csv(sim, reference))?;
    write_file(&dir.join("joint_moments.csv"), &export::joint_moments_csv(sim, reference))?;
    write_file(&dir.join("grf.csv"), &export::grf_csv(sim, reference))?;
    write_file(&dir.join("torque_loops.csv"), &export::torque_loops_csv(sim, reference))?;
    write_file(&dir.join("rmse.csv"), &export::rmse_csv(sim, reference))?;
    eval.record.save_csv(&dir.join("rollout.csv"))?;
    Ok(())
}

/// Deterministic rollout of the checkpoint's policy with `env.params` (or the
/// nominal parameters), compared with the reference.
pub fn eval(cfg: &RunConfig) -> Result<Evaluation> {
    let out = prepare_output(cfg)?;
    let setup = Setup::new(cfg)?;
    let trainer = require_checkpoint(cfg, "eval")?;
    let reference = GaitCycle::from_reference(&setup.reference, setup.subject.mass);
    let params = start_params(cfg, &setup);
    let ev = evaluate_gait(
        &setup.env,
        &trainer.policy,
        &trainer.norm,
        &params,
        &reference,
        &error_scales(&setup.env),
        cfg.alternation.eval_cycles,
    )
    .context("evaluation rollout")?;
    write_metrics(&out, &ev, &reference)?;
    eprintln!(
        "epsilon {:.3}  rmse angles {:.4} rad, moments {:.4} N m/kg, grf {:.4} N/kg",
        ev.error.total, ev.rmse.angles, ev.rmse.moments, ev.rmse.grf
    );
    Ok(ev)
}
