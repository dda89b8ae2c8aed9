//! Training, oracle identification, ablation and gait physicality.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use biogait::alternation::{segment_cycles, torque_loop, GaitCycle};
use biogait::config::RunConfig;
use biogait::dynamics::BIPED_JOINTS;
use biogait::mdp::ParamVector;
use biogait::policy::DeterministicPolicy;
use biogait_cli::oracle::{self, OracleOutcome};
use biogait_cli::{commands, Setup};

use crate::Checks;

pub const SEEDS: [u64; 3] = [0, 1, 2];
const WALK_SECONDS: f64 = 10.0;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub struct Trained {
    pub seed: u64,
    pub checkpoint: PathBuf,
    /// Steady cycles of the walking test (none if it fell).
    pub cycles: Vec<GaitCycle>,
}

pub fn walking(dir: &Path, c: &mut Checks) -> Result<Vec<Trained>> {
    let (mut initial, mut last, mut walked) = (Vec::new(), Vec::new(), Vec::new());
    let mut trained = Vec::new();
    for seed in SEEDS {
        let cfg = RunConfig {
            seed,
            output: dir.join(format!("seed{seed}")),
            ..RunConfig::default()
        };
        let out = commands::train(&cfg).with_context(|| format!("training seed {seed}"))?;
        initial.push(out.curve.first().context("empty training curve")?.mean_return);
        last.push(out.curve.last().context("empty training curve")?.mean_return);

        let setup = Setup::new(&cfg)?;
        let mut env = setup.env.clone();
        let dt = env.config().control_dt();
        env.set_horizon((WALK_SECONDS / dt).ceil() as usize);
        let obs = env.reset_with(ParamVector::nominal(&setup.subject), 0.0, None)?;
        let mut controller = DeterministicPolicy::new(&out.trainer.policy, &out.trainer.norm);
        let walk = env.run_episode(&mut controller, obs)?;
        walk.record.save_csv(&out.dir.join("walk.csv"))?;
        let seconds = if walk.termination.is_failure() {
            walk.record.len() as f64 * dt
        } else {
            env.config().horizon as f64 * dt
        };
        walked.push(seconds);
        eprintln!("seed {seed}: return {:.1} -> {:.1}, walked {seconds:.2} s", initial.last().unwrap(), last.last().unwrap());

        let settle = env.control_reference().cycle_duration();
        let cycles = if walk.termination.is_failure() {
            Vec::new()
        } else {
            segment_cycles(&walk.record)
                .map(|all| all.into_iter().filter(|c| c.start_time >= settle).collect())
                .unwrap_or_default()
        };
        trained.push(Trained {
            seed,
            checkpoint: out.dir.join("checkpoint.json"),
            cycles,
        });
    }
    c.at_least("median_walk_seconds", median(walked), WALK_SECONDS);
    c.at_least("median_final_over_initial_return", median(last) / median(initial), 5.0);
    Ok(trained)
}

pub fn oracle_runs(dir: &Path, trained: &[Trained]) -> Result<Vec<OracleOutcome>> {
    trained
        .iter()
        .map(|t| {
            let mut cfg = RunConfig {
                seed: t.seed,
                output: dir.join(format!("seed{}", t.seed)),
                ..RunConfig::default()
            };
            cfg.train.checkpoint = Some(t.checkpoint.clone());
            cfg.oracle.enabled = true;
            oracle::run(&cfg).with_context(|| format!("oracle run, seed {}", t.seed))
        })
        .collect()
}

pub fn identification(runs: &[OracleOutcome], c: &mut Checks) {
    for r in runs {
        eprintln!(
            "oracle: max recovery error {:.3} widths, epsilon {:.3} -> {:.3} in {} iterations",
            r.max_recovery_error(),
            r.initial_epsilon,
            r.final_epsilon,
            r.report.iterations.len()
        );
    }
    let iterations = runs.iter().map(|r| r.report.iterations.len()).max().unwrap_or(0);
    c.at_most("loop_iterations", iterations as f64, 3.0);
    c.at_most("median_max_recovery_error_widths", median(runs.iter().map(|r| r.max_recovery_error()).collect()), 0.1);
    let initial = median(runs.iter().map(|r| r.initial_epsilon).collect());
    c.below("median_final_epsilon", median(runs.iter().map(|r| r.final_epsilon).collect()), initial);
}

pub fn ablation(runs: &[OracleOutcome], c: &mut Checks) {
    let med = |f: fn(&OracleOutcome) -> f64| median(runs.iter().map(f).collect());
    c.below("median_angle_rmse_rl_id", med(|r| r.with_identification.angles), med(|r| r.rl_only.angles));
    c.below("median_moment_rmse_rl_id", med(|r| r.with_identification.moments), med(|r| r.rl_only.moments));
    c.below("median_grf_rmse_rl_id", med(|r| r.with_identification.grf), med(|r| r.rl_only.grf));
}

pub fn physicality(trained: &[Trained], runs: &[OracleOutcome], c: &mut Checks) {
    let cycles: Vec<&GaitCycle> = trained
        .iter()
        .flat_map(|t| &t.cycles)
        .chain(runs.iter().flat_map(|r| &r.accepted))
        .collect();
    let mut grf: f64 = 0.0;
    let mut area: f64 = 0.0;
    for cycle in &cycles {
        grf = grf.max((cycle.mean_vertical_grf_ratio() - 1.0).abs());
        for j in 0..BIPED_JOINTS {
            let l = torque_loop(cycle, j);
            area = area.max((l.area() - l.work()).abs());
        }
    }
    c.at_least("accepted_cycles", cycles.len() as f64, 1.0);
    c.at_most("worst_mean_vertical_grf_error_fraction", grf, 0.1);
    c.at_most("worst_loop_area_minus_work_j", area, 1e-9);
}
