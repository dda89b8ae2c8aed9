//! Alternation of policy refinement and parameter identification until the
//! simulated gait matches the reference, plus the gait metrics it relies on.

mod metrics;

pub use metrics::{
    compute_error, heel_strikes, joint_moments, rmse, rmse_summary, segment_cycles, torque_loop, CycleError,
    ErrorScales, GaitCycle, RmseSummary, TorqueLoop, CYCLE_POINTS, STRIKE_DEBOUNCE, STRIKE_THRESHOLD,
};

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::identification::{identify_parameters, save_history, CmaConfig};
use crate::mdp::{Env, GaitRecord, ParamVector, PARAM_NAMES};
use crate::policy::{Checkpoint, DeterministicPolicy, PolicyNet, RunningNorm, Trainer};
use crate::reference::ReferenceMotion;
use crate::seeding::{derive_seed, tag};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    /// Stop once the cycle error is at or below this.
    pub kappa: f64,
    pub max_iters: usize,
    /// PPO iterations per refinement.
    pub refine_iterations: usize,
    /// Length of the evaluation rollout in gait cycles.
    pub eval_cycles: usize,
    /// Failed iterations tolerated before giving up.
    pub retry_cap: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            kappa: 15.0,
            max_iters: 3,
            refine_iterations: 10,
            eval_cycles: 4,
            retry_cap: 2,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.kappa > 0.0) {
            return Err(Error::Config("loop.kappa must be positive".into()));
        }
        if self.eval_cycles < 2 {
            return Err(Error::Config("loop.eval_cycles must be at least 2".into()));
        }
        Ok(())
    }
}

/// Cycle error of a deterministic rollout against the reference cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Averaged over the compared cycles.
    pub error: CycleError,
    pub rmse: RmseSummary,
    /// Cycles compared with the reference (the first, transient one is skipped
    /// when there are others).
    pub cycles: Vec<GaitCycle>,
    pub record: GaitRecord,
}

/// Roll out `policy` deterministically from phase 0 with `params` for
/// `cycles` reference cycles and compare its gait cycles with `reference`.
///
/// Falling or producing fewer than two heel strikes is a segmentation error.
pub fn evaluate_gait(
    env: &Env,
    policy: &PolicyNet,
    norm: &RunningNorm,
    params: &ParamVector,
    reference: &GaitCycle,
    scales: &ErrorScales,
    cycles: usize,
) -> Result<Evaluation, Error> {
    let mut env = env.clone();
    let per_cycle = (env.control_reference().cycle_duration() / env.config().control_dt()).round() as usize;
    env.set_horizon(cycles * per_cycle.max(1));
    let obs = env.reset_with(*params, 0.0, None)?;
    let mut controller = DeterministicPolicy::new(policy, norm);
    let result = env.run_episode(&mut controller, obs)?;
    if result.termination.is_failure() {
        return Err(Error::Segmentation(format!(
            "evaluation rollout ended after {} steps ({})",
            result.record.len(),
            result.termination.as_str()
        )));
    }
    let all = segment_cycles(&result.record)?;
    let settle = env.control_reference().cycle_duration();
    let mut used: Vec<GaitCycle> = all.iter().filter(|c| c.start_time >= settle).cloned().collect();
    if used.is_empty() {
        used = all;
    }
    let mut error = CycleError::default();
    let mut summary = RmseSummary::default();
    for c in &used {
        let e = compute_error(c, reference, scales)?;
        let r = rmse_summary(c, reference)?;
        error.total += e.total;
        error.angles += e.angles;
        error.torques += e.torques;
        error.grf += e.grf;
        summary.angles += r.angles;
        summary.moments += r.moments;
        summary.grf += r.grf;
    }
    let n = used.len() as f64;
    for v in [&mut error.total, &mut error.angles, &mut error.torques, &mut error.grf] {
        *v /= n;
    }
    for v in [&mut summary.angles, &mut summary.moments, &mut summary.grf] {
        *v /= n;
    }
    Ok(Evaluation {
        error,
        rmse: summary,
        cycles: used,
        record: result.record,
    })
}

/// One row of the loop report. Iteration 0 evaluates the starting policy and
/// parameters; later rows follow refinement and identification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopIteration {
    pub iteration: usize,
    /// Infinite when the iteration failed.
    #[serde(with = "non_finite")]
    pub epsilon: f64,
    #[serde(with = "non_finite")]
    pub best_epsilon: f64,
    pub error: CycleError,
    pub rmse: RmseSummary,
    pub params: ParamVector,
    /// Best identification fitness (NaN for iteration 0).
    #[serde(with = "non_finite")]
    pub fitness: f64,
    pub checkpoint: String,
    pub converged: bool,
    pub failed: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopReport {
    pub initial: Option<LoopIteration>,
    pub iterations: Vec<LoopIteration>,
    pub converged: bool,
    /// Parameters after the last successful identification (the start otherwise).
    pub params: ParamVector,
    pub retries: usize,
}

impl LoopReport {
    pub fn best_epsilon(&self) -> f64 {
        self.iterations
            .last()
            .or(self.initial.as_ref())
            .map_or(f64::INFINITY, |r| r.best_epsilon)
    }

    pub fn final_epsilon(&self) -> f64 {
        self.iterations
            .iter()
            .rev()
            .find(|r| !r.failed)
            .or(self.initial.as_ref())
            .map_or(f64::INFINITY, |r| r.epsilon)
    }

    pub fn rows(&self) -> impl Iterator<Item = &LoopIteration> {
        self.initial.iter().chain(&self.iterations)
    }

    pub fn to_csv(&self) -> String {
        let mut s = report_header();
        s.push('\n');
        for r in self.rows() {
            s.push_str(&report_row(r));
            s.push('\n');
        }
        s
    }
}

pub fn report_header() -> String {
    let mut s = String::from(
        "iteration,epsilon,best_epsilon,eps_angles,eps_torques,eps_grf,rmse_angles,rmse_moments,rmse_grf,fitness,converged,failed,checkpoint",
    );
    for name in PARAM_NAMES {
        s.push(',');
        s.push_str(name);
    }
    s
}

pub fn report_row(r: &LoopIteration) -> String {
    let mut s = format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.iteration,
        r.epsilon,
        r.best_epsilon,
        r.error.angles,
        r.error.torques,
        r.error.grf,
        r.rmse.angles,
        r.rmse.moments,
        r.rmse.grf,
        r.fitness,
        r.converged,
        r.failed,
        r.checkpoint
    );
    for v in r.params.to_array() {
        write!(s, ",{v}").expect("string write");
    }
    s
}

/// Everything the alternation needs besides the policy.
#[derive(Debug, Clone)]
pub struct LoopInputs {
    /// Training environment: control reference, parameter bounds and
    /// randomization used for refinement.
    pub env: Env,
    /// Motion the reward scores against during refinement and identification.
    pub target: Arc<ReferenceMotion>,
    /// The same gait as one cycle, for the error.
    pub reference_cycle: GaitCycle,
    pub scales: ErrorScales,
    pub start: ParamVector,
    pub cma: CmaConfig,
    pub config: LoopConfig,
    pub seed: u64,
    pub workers: usize,
    /// Run directory for the report, checkpoints and resume state.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ResumeState {
    report: LoopReport,
}

const STATE_FILE: &str = "loop_state.json";
const REPORT_FILE: &str = "loop_report.csv";

fn iteration_dir(out: &Path, iteration: usize) -> PathBuf {
    out.join(format!("iter_{iteration:03}"))
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), Error> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Alternate policy refinement and parameter identification.
///
/// Every iteration refines the policy (warm-started) against the target,
/// identifies `mu` by CMA-ES starting from the current estimate, and
/// evaluates the cycle error with the new parameters; the loop stops once it
/// is at most `kappa` or after `max_iters` iterations. A failed evaluation
/// keeps the previous parameters and reseeds training, up to `retry_cap`
/// times. With `out_dir` set, the report, a checkpoint and the evaluation
/// record are written after every iteration, and an interrupted run resumes
/// from its last completed iteration.
pub fn run_alternation(
    inputs: &LoopInputs,
    mut trainer: Trainer,
    mut on_iteration: impl FnMut(&LoopIteration),
) -> Result<(LoopReport, Trainer), Error> {
    let cfg = &inputs.config;
    cfg.validate()?;
    inputs.cma.validate()?;
    let mut env = inputs.env.clone();
    env.set_target(inputs.target.clone());
    let bounds = env.bounds().clone();

    let out = inputs.out_dir.as_deref();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut report = LoopReport {
        initial: None,
        iterations: Vec::new(),
        converged: false,
        params: inputs.start,
        retries: 0,
    };
    if let Some(dir) = out {
        let state_path = dir.join(STATE_FILE);
        if state_path.exists() {
            let text = std::fs::read_to_string(&state_path).map_err(|e| Error::io(&state_path, e))?;
            let state: ResumeState = serde_json::from_str(&text)
                .map_err(|e| Error::Format(format!("{}: {e}", state_path.display())))?;
            report = state.report;
            let last = report.rows().last().map_or(0, |r| r.iteration);
            let ck_path = iteration_dir(dir, last).join("checkpoint.json");
            trainer = Trainer::from_checkpoint(Checkpoint::load(&ck_path)?)?;
        }
        // rebuild the human-readable report from the resume state
        write_atomic(&dir.join(REPORT_FILE), &report.to_csv())?;
    }

    let save = |row: &LoopIteration, trainer: &Trainer, record: Option<&GaitRecord>, report: &LoopReport| -> Result<(), Error> {
        let Some(dir) = out else { return Ok(()) };
        let idir = iteration_dir(dir, row.iteration);
        std::fs::create_dir_all(&idir).map_err(|e| Error::io(&idir, e))?;
        trainer.checkpoint().save(&idir.join("checkpoint.json"))?;
        if let Some(rec) = record {
            rec.save_csv(&idir.join("evaluation.csv"))?;
        }
        let state = serde_json::to_string(&ResumeState { report: report.clone() })
            .map_err(|e| Error::Format(format!("loop state: {e}")))?;
        write_atomic(&dir.join(STATE_FILE), &state)?;
        let path = dir.join(REPORT_FILE);
        let mut f = std::fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        writeln!(f, "{}", report_row(row)).map_err(|e| Error::io(&path, e))
    };

    let evaluate = |trainer: &Trainer, params: &ParamVector| {
        evaluate_gait(
            &env,
            &trainer.policy,
            &trainer.norm,
            params,
            &inputs.reference_cycle,
            &inputs.scales,
            cfg.eval_cycles,
        )
    };

    if report.initial.is_none() {
        let (row, record) = match evaluate(&trainer, &inputs.start) {
            Ok(ev) => (
                LoopIteration {
                    iteration: 0,
                    epsilon: ev.error.total,
                    best_epsilon: ev.error.total,
                    error: ev.error,
                    rmse: ev.rmse,
                    params: inputs.start,
                    fitness: f64::NAN,
                    checkpoint: "iter_000".into(),
                    converged: ev.error.total <= cfg.kappa,
                    failed: false,
                    note: String::new(),
                },
                Some(ev.record),
            ),
            Err(Error::Segmentation(m)) => (failed_row(0, f64::INFINITY, inputs.start, f64::NAN, cfg.kappa, m), None),
            Err(e) => return Err(e),
        };
        report.initial = Some(row.clone());
        save(&row, &trainer, record.as_ref(), &report)?;
        on_iteration(&row);
    }

    while report.iterations.len() < cfg.max_iters && !report.converged {
        let iteration = report.iterations.len() + 1;
        let best_so_far = report.best_epsilon();

        for _ in 0..cfg.refine_iterations {
            trainer.iterate(&env, inputs.workers)?;
        }
        let cma_seed = derive_seed(inputs.seed, &[tag::LOOP, iteration as u64]);
        let id = identify_parameters(
            &trainer.policy,
            &trainer.norm,
            &env,
            &bounds,
            &report.params,
            &inputs.cma,
            cma_seed,
            inputs.workers,
            |_| Ok(()),
        )?;
        if let Some(dir) = out {
            let idir = iteration_dir(dir, iteration);
            std::fs::create_dir_all(&idir).map_err(|e| Error::io(&idir, e))?;
            save_history(&idir.join("identification.csv"), &id.history)?;
        }

        let (row, record) = match evaluate(&trainer, &id.params) {
            Ok(ev) => {
                let eps = ev.error.total;
                report.params = id.params;
                (
                    LoopIteration {
                        iteration,
                        epsilon: eps,
                        best_epsilon: best_so_far.min(eps),
                        error: ev.error,
                        rmse: ev.rmse,
                        params: id.params,
                        fitness: id.fitness,
                        checkpoint: format!("iter_{iteration:03}"),
                        converged: eps <= cfg.kappa,
                        failed: false,
                        note: String::new(),
                    },
                    Some(ev.record),
                )
            }
            Err(Error::Segmentation(m)) => {
                report.retries += 1;
                trainer.seed = derive_seed(inputs.seed, &[tag::LOOP, 1_000 + report.retries as u64]);
                (failed_row(iteration, best_so_far, id.params, id.fitness, cfg.kappa, m), None)
            }
            Err(e) => return Err(e),
        };
        report.converged = row.converged;
        report.iterations.push(row.clone());
        save(&row, &trainer, record.as_ref(), &report)?;
        on_iteration(&row);
        if row.failed && report.retries > cfg.retry_cap {
            break;
        }
    }
    Ok((report, trainer))
}

fn failed_row(iteration: usize, best: f64, params: ParamVector, fitness: f64, kappa: f64, message: String) -> LoopIteration {
    LoopIteration {
        iteration,
        epsilon: f64::INFINITY,
        best_epsilon: best,
        error: CycleError::default(),
        rmse: RmseSummary::default(),
        params,
        fitness,
        checkpoint: format!("iter_{iteration:03}"),
        // an infinite threshold accepts even a failed evaluation
        converged: f64::INFINITY <= kappa,
        failed: true,
        note: message,
    }
}

/// JSON has no infinities or NaN; those are stored as strings.
mod non_finite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}
