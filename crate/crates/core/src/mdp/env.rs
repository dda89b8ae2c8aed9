use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    build_model, com_from_kinematics, ArticulatedModel, DynamicsError, DynamicsState,
    ExternalForce, Kinematics, BIPED_DOFS, BIPED_JOINTS, LEFT_FOOT, RIGHT_FOOT,
};
use crate::reference::{ReferenceMotion, SubjectSpec};
use crate::world::World;
use crate::Error;

use super::{
    action_to_target, check_termination, effector_positions, observe_with, randomize_params,
    reward_with, sample_perturbation, GaitRecord, ParamBounds, ParamVector, PerturbationConfig,
    RewardTerms, RewardWeights, StepLog, TerminationLimits, TerminationReason,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub weights: RewardWeights,
    /// Randomization box; `None` uses the subject's default box.
    pub bounds: Option<ParamBounds>,
    /// Draw `mu` from `bounds` at every reset.
    pub randomize: bool,
    /// One damping value for all joint groups.
    pub shared_damping: bool,
    /// `mu` used when not randomizing; `None` means the subject's nominal values.
    pub params: Option<ParamVector>,
    pub perturbation: PerturbationConfig,
    /// Control steps per episode.
    pub horizon: usize,
    pub gamma: f64,
    /// Physics step [s].
    pub dt: f64,
    /// Physics steps per control step.
    pub substeps: usize,
    /// Action clamp [rad].
    pub action_bound: f64,
    /// Episode ends when the pelvis drops below this fraction of standing height.
    pub pelvis_fraction: f64,
    /// [rad]
    pub max_pitch: f64,
    /// Reset at a uniformly drawn phase (otherwise phase 0).
    pub random_initial_phase: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            weights: RewardWeights::default(),
            bounds: None,
            randomize: true,
            shared_damping: false,
            params: None,
            perturbation: PerturbationConfig::default(),
            horizon: 300,
            gamma: 0.99,
            dt: 1e-3,
            substeps: 33,
            action_bound: 0.5,
            pelvis_fraction: 0.6,
            max_pitch: 0.8,
            random_initial_phase: true,
        }
    }
}

impl EnvConfig {
    pub fn control_dt(&self) -> f64 {
        self.dt * self.substeps as f64
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |key: &str, why: &str| Err(Error::Config(format!("env.{key}: {why}")));
        if !(self.dt > 0.0) {
            return bad("dt", "must be positive");
        }
        if self.substeps == 0 {
            return bad("substeps", "must be at least 1");
        }
        if self.horizon == 0 {
            return bad("horizon", "must be at least 1");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", "must lie in (0, 1]");
        }
        if !(self.action_bound > 0.0) {
            return bad("action_bound", "must be positive");
        }
        let w = &self.weights;
        if [w.w_q, w.w_c, w.w_e, w.w_tau].iter().any(|v| !(*v >= 0.0)) {
            return bad("weights", "must be non-negative");
        }
        let [lo, hi] = self.perturbation.magnitude_range;
        if !(lo >= 0.0 && hi >= lo) || !(self.perturbation.duration > 0.0) {
            return bad("perturbation", "needs 0 <= min <= max magnitude and positive duration");
        }
        if let Some(b) = &self.bounds {
            b.validate()?;
        }
        Ok(())
    }
}

/// Anything that maps observations to actions.
pub trait Controller {
    fn act(&mut self, obs: &[f64]) -> Vec<f64>;
}

/// Plays back the reference: zero offsets on every joint.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroAction;

impl Controller for ZeroAction {
    fn act(&mut self, _obs: &[f64]) -> Vec<f64> {
        vec![0.0; BIPED_JOINTS]
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: RewardTerms,
    pub done: Option<TerminationReason>,
    pub log: StepLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub record: GaitRecord,
    pub termination: TerminationReason,
    /// Discounted return.
    pub ret: f64,
    /// Plain sum of rewards.
    pub total_reward: f64,
    pub params: ParamVector,
}

/// The biped tracking a phase-indexed reference.
///
/// `control` supplies PD targets, the phase clock and initial states; `target`
/// is what the reward scores against (the same motion unless replaced).
#[derive(Debug, Clone)]
pub struct Env {
    config: EnvConfig,
    subject: SubjectSpec,
    control: Arc<ReferenceMotion>,
    target: Arc<ReferenceMotion>,
    bounds: ParamBounds,
    model: ArticulatedModel,
    params: ParamVector,
    limits: TerminationLimits,
    state: DynamicsState,
    start_phase: f64,
    steps: usize,
    externals: Vec<ExternalForce>,
    done: bool,
}

impl Env {
    pub fn new(subject: SubjectSpec, control: Arc<ReferenceMotion>, config: EnvConfig) -> Result<Self, Error> {
        config.validate()?;
        subject.validate()?;
        let bounds = config
            .bounds
            .clone()
            .unwrap_or_else(|| ParamBounds::default_for(&subject));
        let params = config.params.unwrap_or_else(|| ParamVector::nominal(&subject));
        let model = build_model(&subject, &params)?;
        let limits = TerminationLimits::for_model(&model, config.pelvis_fraction, config.max_pitch, config.horizon);
        Ok(Self {
            state: DynamicsState::zeros(model.n_q()),
            config,
            subject,
            target: control.clone(),
            control,
            bounds,
            model,
            params,
            limits,
            start_phase: 0.0,
            steps: 0,
            externals: Vec::new(),
            done: true,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn subject(&self) -> &SubjectSpec {
        &self.subject
    }

    pub fn model(&self) -> &ArticulatedModel {
        &self.model
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn bounds(&self) -> &ParamBounds {
        &self.bounds
    }

    pub fn state(&self) -> &DynamicsState {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn control_reference(&self) -> &Arc<ReferenceMotion> {
        &self.control
    }

    pub fn target_reference(&self) -> &Arc<ReferenceMotion> {
        &self.target
    }

    /// Score rewards against `target` instead of the control reference.
    pub fn set_target(&mut self, target: Arc<ReferenceMotion>) {
        self.target = target;
    }

    /// Replace the fixed `mu` used when not randomizing.
    pub fn set_fixed_params(&mut self, params: Option<ParamVector>) {
        self.config.params = params;
    }

    pub fn set_horizon(&mut self, horizon: usize) {
        self.config.horizon = horizon;
        self.limits.horizon = horizon;
    }

    /// Unwrapped controller phase (cycles since phase 0) after `steps` control steps.
    pub fn cycles_at(&self, steps: usize) -> f64 {
        self.start_phase + steps as f64 * self.config.control_dt() / self.control.cycle_duration()
    }

    /// Reset with randomized (or fixed) `mu`, initial phase and a push.
    ///
    /// The push is always drawn so the random stream does not depend on
    /// whether perturbations are enabled.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<f64>, Error> {
        let params = if self.config.randomize {
            randomize_params(rng, &self.bounds, self.config.shared_damping)
        } else {
            self.config.params.unwrap_or_else(|| ParamVector::nominal(&self.subject))
        };
        let phase: f64 = rng.random();
        let phase = if self.config.random_initial_phase { phase } else { 0.0 };
        let push = sample_perturbation(rng, &self.config.perturbation, self.control.cycle_duration());
        let push = self.config.perturbation.enabled.then_some(push);
        self.reset_with(params, phase, push)
    }

    /// Deterministic reset: model from `params`, pose and velocity of the
    /// target motion at `phase`, feet resting on the ground.
    pub fn reset_with(
        &mut self,
        params: ParamVector,
        phase: f64,
        push: Option<ExternalForce>,
    ) -> Result<Vec<f64>, Error> {
        if params != self.params {
            self.model = build_model(&self.subject, &params)?;
            self.params = params;
        }
        self.limits = TerminationLimits::for_model(
            &self.model,
            self.config.pelvis_fraction,
            self.config.max_pitch,
            self.config.horizon,
        );
        let frame = self.target.sample_unwrapped(phase);
        let vel = self.target.pose_velocity(phase);
        let mut state = DynamicsState::zeros(self.model.n_q());
        for k in 0..BIPED_DOFS {
            state.q[k] = frame.pose[k];
            state.qdot[k] = vel[k];
        }
        let kin = Kinematics::compute(&self.model, &state);
        let lowest = effector_positions(&self.model, &kin)
            .iter()
            .map(|e| e[1])
            .fold(f64::INFINITY, f64::min);
        state.q[1] -= lowest;
        self.state = state;
        self.start_phase = phase;
        self.steps = 0;
        self.externals = push.into_iter().collect();
        self.done = false;
        Ok(self.observation())
    }

    pub fn observation(&self) -> Vec<f64> {
        let kin = Kinematics::compute(&self.model, &self.state);
        let phase = self.cycles_at(self.steps).rem_euclid(1.0);
        observe_with(&self.model, &self.state, &kin, phase, &self.params).to_vec()
    }

    /// Advance one control step with joint offsets `action`.
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome, Error> {
        if self.done {
            return Err(Error::Training("step called on a finished episode; reset first".into()));
        }
        if action.len() != BIPED_JOINTS {
            return Err(Error::Dimension {
                expected: BIPED_JOINTS,
                got: action.len(),
            });
        }
        let next_cycles = self.cycles_at(self.steps + 1);
        let target_q = action_to_target(action, &self.control.sample(next_cycles), self.config.action_bound);

        let world = World::new(&self.model);
        let mut tau = [0.0; BIPED_JOINTS];
        let mut grf = [0.0; 2];
        let mut foot_grf = [0.0; 2];
        let mut moment = 0.0;
        let mut diverged = false;
        let n = self.config.substeps;
        for _ in 0..n {
            match world.substep(&self.state, Some(&target_q), &self.externals, self.config.dt) {
                Ok((next, log)) => {
                    for j in 0..BIPED_JOINTS {
                        tau[j] += log.joint_torques[j];
                    }
                    for c in &log.contacts {
                        grf[0] += c.force.x;
                        grf[1] += c.force.y;
                        moment += c.position.x * c.force.y;
                        if c.segment == LEFT_FOOT {
                            foot_grf[0] += c.force.y;
                        } else if c.segment == RIGHT_FOOT {
                            foot_grf[1] += c.force.y;
                        }
                    }
                    self.state = next;
                }
                Err(DynamicsError::Divergence { .. }) | Err(DynamicsError::SingularMassMatrix) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        }
        let inv = 1.0 / n as f64;
        for v in tau.iter_mut().chain(grf.iter_mut()).chain(foot_grf.iter_mut()) {
            *v *= inv;
        }
        moment *= inv;
        self.steps += 1;

        let kin = Kinematics::compute(&self.model, &self.state);
        let mass = self.model.total_mass();
        let tau_norm: Vec<f64> = tau.iter().map(|t| t / mass).collect();
        let target = self.target.sample_unwrapped(next_cycles);
        let reward = reward_with(&self.model, &self.state, &kin, &tau_norm, &target, &self.config.weights);

        let done = if diverged {
            Some(TerminationReason::Divergence)
        } else {
            check_termination(&self.state, &self.limits, self.steps)
        };
        self.done = done.is_some();

        let (com, _, _) = com_from_kinematics(&self.model, &kin);
        let mut q = [0.0; BIPED_DOFS];
        q.copy_from_slice(self.state.q.as_slice());
        let mut qdot = [0.0; BIPED_DOFS];
        qdot.copy_from_slice(self.state.qdot.as_slice());
        let phase = next_cycles.rem_euclid(1.0);
        let log = StepLog {
            time: self.state.time,
            phase,
            q,
            qdot,
            tau,
            grf,
            cop_x: if grf[1] > 0.0 { moment / grf[1] } else { f64::NAN },
            foot_grf,
            com: [com.x, com.y],
            effectors: effector_positions(&self.model, &kin),
            reward,
        };
        let obs = observe_with(&self.model, &self.state, &kin, phase, &self.params).to_vec();
        Ok(StepOutcome {
            obs,
            reward,
            done,
            log,
        })
    }

    /// Run the current episode to termination.
    pub fn run_episode<C: Controller + ?Sized>(&mut self, controller: &mut C, first_obs: Vec<f64>) -> Result<EpisodeResult, Error> {
        let mut record = GaitRecord::new(self.config.control_dt(), self.model.total_mass());
        let mut obs = first_obs;
        let mut ret = 0.0;
        let mut total = 0.0;
        let mut discount = 1.0;
        loop {
            let action = controller.act(&obs);
            let out = self.step(&action)?;
            ret += discount * out.reward.total;
            total += out.reward.total;
            discount *= self.config.gamma;
            record.steps.push(out.log);
            obs = out.obs;
            if let Some(reason) = out.done {
                return Ok(EpisodeResult {
                    record,
                    termination: reason,
                    ret,
                    total_reward: total,
                    params: self.params,
                });
            }
        }
    }
}

/// Reset `env` from `rng` and run `controller` until termination.
pub fn rollout<C: Controller + ?Sized, R: Rng + ?Sized>(
    env: &mut Env,
    controller: &mut C,
    rng: &mut R,
) -> Result<EpisodeResult, Error> {
    let obs = env.reset(rng)?;
    env.run_episode(controller, obs)
}
