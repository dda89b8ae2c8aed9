//! Imitation-learning environment: observations, PD-offset actions, the
//! tracking reward, early termination, push perturbations and domain
//! randomization over the identified parameters `mu`.

mod env;
mod params;
mod record;

pub use env::{rollout, Controller, Env, EnvConfig, EpisodeResult, StepOutcome, ZeroAction};
pub use params::{randomize_params, ParamBounds, ParamVector, PARAM_DIM, PARAM_NAMES};
pub use record::{GaitRecord, StepLog};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    com_from_kinematics, ArticulatedModel, DynamicsState, ExternalForce, Kinematics, BIPED_DOFS,
    BIPED_JOINTS,
};
use crate::reference::{ReferenceFrame, N_EFFECTORS};

/// Observation length: q without base x, qdot, COM velocity, COM angular
/// velocity, phase and `mu`.
pub const OBS_DIM: usize = 2 * BIPED_DOFS - 1 + 3 + 1 + PARAM_DIM;
pub const ACTION_DIM: usize = BIPED_JOINTS;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Base z, pitch and joint angles.
    pub q: [f64; BIPED_DOFS - 1],
    pub qdot: [f64; BIPED_DOFS],
    pub v_com: [f64; 2],
    pub omega_com: f64,
    pub phase: f64,
    pub mu: [f64; PARAM_DIM],
}

impl Observation {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(OBS_DIM);
        self.write(&mut v);
        v
    }

    pub fn write(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.q);
        out.extend_from_slice(&self.qdot);
        out.extend_from_slice(&self.v_com);
        out.push(self.omega_com);
        out.push(self.phase);
        out.extend_from_slice(&self.mu);
    }
}

pub fn observe(model: &ArticulatedModel, state: &DynamicsState, phase: f64, mu: &ParamVector) -> Observation {
    let kin = Kinematics::compute(model, state);
    observe_with(model, state, &kin, phase, mu)
}

pub(crate) fn observe_with(
    model: &ArticulatedModel,
    state: &DynamicsState,
    kin: &Kinematics,
    phase: f64,
    mu: &ParamVector,
) -> Observation {
    let (_, v_com, omega_com) = com_from_kinematics(model, kin);
    let mut q = [0.0; BIPED_DOFS - 1];
    q.copy_from_slice(&state.q.as_slice()[1..]);
    let mut qdot = [0.0; BIPED_DOFS];
    qdot.copy_from_slice(state.qdot.as_slice());
    Observation {
        q,
        qdot,
        v_com: [v_com.x, v_com.y],
        omega_com,
        phase,
        mu: mu.to_array(),
    }
}

/// PD targets: reference joint angles plus the action, clamped to `+-bound` rad.
pub fn action_to_target(action: &[f64], reference: &ReferenceFrame, bound: f64) -> [f64; BIPED_JOINTS] {
    let mut target = [0.0; BIPED_JOINTS];
    for j in 0..BIPED_JOINTS {
        target[j] = reference.joints()[j] + action[j].clamp(-bound, bound);
    }
    target
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub w_q: f64,
    pub w_c: f64,
    pub w_e: f64,
    pub w_tau: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_q: 5.0,
            w_c: 2.0,
            w_e: 0.5,
            w_tau: 0.005,
        }
    }
}

/// Kernel widths of the pose, COM and end-effector tracking terms.
pub const POSE_KERNEL: f64 = 2.0;
pub const COM_KERNEL: f64 = 10.0;
pub const EFFECTOR_KERNEL: f64 = 40.0;

/// Reward contributions; `total = pose + com + effector - torque`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub pose: f64,
    pub com: f64,
    pub effector: f64,
    /// Penalty magnitude, subtracted from the total.
    pub torque: f64,
    pub total: f64,
}

impl RewardTerms {
    /// Terms from squared tracking errors and the squared torque norm.
    pub fn from_errors(pose_sq: f64, com_sq: f64, effector_sq: f64, tau_sq: f64, w: &RewardWeights) -> Self {
        let pose = w.w_q * (-POSE_KERNEL * pose_sq).exp();
        let com = w.w_c * (-COM_KERNEL * com_sq).exp();
        let effector = w.w_e * (-EFFECTOR_KERNEL * effector_sq).exp();
        let torque = w.w_tau * tau_sq;
        Self {
            pose,
            com,
            effector,
            torque,
            total: pose + com + effector - torque,
        }
    }
}

/// Tracking reward of `state` against a reference frame. `tau` enters the
/// penalty as given; the environment passes mass-normalized torques [N m/kg].
pub fn reward(
    model: &ArticulatedModel,
    state: &DynamicsState,
    tau: &[f64],
    target: &ReferenceFrame,
    weights: &RewardWeights,
) -> RewardTerms {
    let kin = Kinematics::compute(model, state);
    reward_with(model, state, &kin, tau, target, weights)
}

pub(crate) fn reward_with(
    model: &ArticulatedModel,
    state: &DynamicsState,
    kin: &Kinematics,
    tau: &[f64],
    target: &ReferenceFrame,
    weights: &RewardWeights,
) -> RewardTerms {
    let pose_sq: f64 = (2..BIPED_DOFS)
        .map(|k| (state.q[k] - target.pose[k]).powi(2))
        .sum();
    let (com, _, _) = com_from_kinematics(model, kin);
    let com_sq = (com.x - target.com[0]).powi(2) + (com.y - target.com[1]).powi(2);
    let effectors = effector_positions(model, kin);
    let mut eff_sq = 0.0;
    for e in 0..N_EFFECTORS {
        eff_sq += (effectors[e][0] - target.effectors[e][0]).powi(2)
            + (effectors[e][1] - target.effectors[e][1]).powi(2);
    }
    let tau_sq: f64 = tau.iter().map(|t| t * t).sum();
    RewardTerms::from_errors(pose_sq, com_sq, eff_sq, tau_sq, weights)
}

/// World positions of the first four contact points (heel/toe of each foot).
pub fn effector_positions(model: &ArticulatedModel, kin: &Kinematics) -> [[f64; 2]; N_EFFECTORS] {
    let mut out = [[0.0; 2]; N_EFFECTORS];
    for (e, p) in model.contact_points.iter().take(N_EFFECTORS).enumerate() {
        let s = model.segment_index(&p.body).unwrap_or(0);
        let v = kin.point_position(s, p.local_offset);
        out[e] = [v.x, v.y];
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    PelvisLow,
    BaseRotation,
    Divergence,
    /// Episode length reached; a truncation, not a failure.
    Horizon,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::PelvisLow => "pelvis_low",
            TerminationReason::BaseRotation => "base_rotation",
            TerminationReason::Divergence => "divergence",
            TerminationReason::Horizon => "horizon",
        }
    }

    pub fn is_failure(self) -> bool {
        self != TerminationReason::Horizon
    }
}

/// Early-termination thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminationLimits {
    /// Pelvis height below which the episode ends [m].
    pub min_pelvis_height: f64,
    /// Largest admissible |base pitch| [rad].
    pub max_pitch: f64,
    pub horizon: usize,
}

impl TerminationLimits {
    pub fn for_model(model: &ArticulatedModel, pelvis_fraction: f64, max_pitch: f64, horizon: usize) -> Self {
        Self {
            min_pelvis_height: pelvis_fraction * model.standing_pelvis_height(),
            max_pitch,
            horizon,
        }
    }
}

/// Early-termination test after `steps` control steps.
pub fn check_termination(
    state: &DynamicsState,
    limits: &TerminationLimits,
    steps: usize,
) -> Option<TerminationReason> {
    if !state.is_finite() {
        return Some(TerminationReason::Divergence);
    }
    if state.q[1] < limits.min_pelvis_height {
        return Some(TerminationReason::PelvisLow);
    }
    if state.q[2].abs() > limits.max_pitch {
        return Some(TerminationReason::BaseRotation);
    }
    if steps >= limits.horizon {
        return Some(TerminationReason::Horizon);
    }
    None
}

/// Horizontal pushes on the pelvis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub enabled: bool,
    /// Force magnitude range [N].
    pub magnitude_range: [f64; 2],
    /// [s]
    pub duration: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            magnitude_range: [0.0, 800.0],
            duration: 0.05,
        }
    }
}

/// Push with magnitude ~ U(range), forward or backward with equal probability,
/// starting at a uniformly drawn phase of the first cycle (episode time
/// `onset_phase * cycle_duration`), applied at the pelvis origin.
pub fn sample_perturbation<R: Rng + ?Sized>(
    rng: &mut R,
    config: &PerturbationConfig,
    cycle_duration: f64,
) -> ExternalForce {
    let [lo, hi] = config.magnitude_range;
    let magnitude = lo + rng.random::<f64>() * (hi - lo);
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let onset = rng.random::<f64>() * cycle_duration;
    ExternalForce {
        body: "pelvis".to_string(),
        point: [0.0, 0.0],
        force: [sign * magnitude, 0.0],
        active_window: (onset, onset + config.duration),
    }
}

#[cfg(test)]
mod tests;
