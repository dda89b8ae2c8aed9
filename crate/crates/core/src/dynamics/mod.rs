//! Generalized-coordinate rigid-body dynamics for planar segment trees.
//!
//! Equations of motion are assembled from per-segment COM Jacobians:
//! `M(q) qdd = tau - beta . qdot + sum_s J_s^T m_s (g - a_s) + J^T f_ext`, where
//! `a_s` is the velocity-product acceleration of segment `s`'s COM. Planar
//! rotations have constant angular Jacobians, so no rotational bias term appears.

mod description;
mod kinematics;
mod model;

pub use description::{load_description, save_description, ModelDescription, MODEL_HEADER};
pub use kinematics::{cross, perp, rotate, Kinematics, Vec2};
pub use model::*;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("mass matrix is not positive definite")]
    SingularMassMatrix,
    #[error("simulation diverged at t = {time:.4} s")]
    Divergence {
        time: f64,
        last_valid: Box<DynamicsState>,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("unknown body '{0}'")]
    UnknownBody(String),
    #[error("timestep must be positive, got {0}")]
    BadTimestep(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub time: f64,
}

impl DynamicsState {
    pub fn zeros(n_q: usize) -> Self {
        Self {
            q: DVector::zeros(n_q),
            qdot: DVector::zeros(n_q),
            time: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qdot.iter()).all(|v| v.is_finite()) && self.time.is_finite()
    }

    fn within(&self, bounds: &BlowupBounds) -> bool {
        self.is_finite()
            && self.q.iter().all(|v| v.abs() < bounds.position)
            && self.qdot.iter().all(|v| v.abs() < bounds.velocity)
    }
}

/// A force applied at a point of a named segment during a time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalForce {
    pub body: String,
    /// Application point in the segment frame [m].
    pub point: [f64; 2],
    /// World-frame force [N].
    pub force: [f64; 2],
    /// Active on `t_start <= t < t_end` [s].
    pub active_window: (f64, f64),
}

impl ExternalForce {
    pub fn is_active(&self, t: f64) -> bool {
        t >= self.active_window.0 && t < self.active_window.1
    }

    pub fn impulse(&self) -> [f64; 2] {
        let d = self.active_window.1 - self.active_window.0;
        [self.force[0] * d, self.force[1] * d]
    }
}

/// Mass matrix plus every state-dependent generalized force except actuation.
#[derive(Debug, Clone)]
pub struct DynamicsTerms {
    pub mass: DMatrix<f64>,
    /// Gravity minus velocity-product terms minus joint damping.
    pub passive: DVector<f64>,
}

pub fn mass_matrix(model: &ArticulatedModel, q: &DVector<f64>) -> DMatrix<f64> {
    let state = DynamicsState {
        q: q.clone(),
        qdot: DVector::zeros(q.len()),
        time: 0.0,
    };
    let kin = Kinematics::compute(model, &state);
    assemble(model, &state, &kin).mass
}

/// Assemble the mass matrix and passive generalized forces for a state.
pub fn assemble(model: &ArticulatedModel, state: &DynamicsState, kin: &Kinematics) -> DynamicsTerms {
    let n = model.n_q();
    let mut mass = DMatrix::zeros(n, n);
    let mut passive = DVector::zeros(n);
    let g = Vec2::new(model.gravity[0], model.gravity[1]);
    let mut cols: Vec<(usize, Vec2)> = Vec::with_capacity(n);
    let mut rots: Vec<usize> = Vec::with_capacity(n);

    for (s, seg) in model.segments.iter().enumerate() {
        cols.clear();
        rots.clear();
        kin.for_each_column(s, kin.com[s], |k, c| cols.push((k, c)));
        kin.for_each_rotation(s, |k| rots.push(k));

        for &(a, ca) in &cols {
            for &(b, cb) in &cols {
                mass[(a, b)] += seg.mass * ca.dot(&cb);
            }
        }
        for &a in &rots {
            for &b in &rots {
                mass[(a, b)] += seg.inertia;
            }
        }
        let f = seg.mass * (g - kin.com_bias[s]);
        for &(a, ca) in &cols {
            passive[a] += ca.dot(&f);
        }
    }
    for (j, joint) in model.joints.iter().enumerate() {
        let k = model.joint_coord(j);
        passive[k] -= joint.damping * state.qdot[k];
    }
    DynamicsTerms { mass, passive }
}

/// Add `J^T f` for a world force `f` applied at world point `point` on segment `s`.
pub fn add_point_force(kin: &Kinematics, s: usize, point: Vec2, f: Vec2, gen: &mut DVector<f64>) {
    kin.for_each_column(s, point, |k, c| gen[k] += c.dot(&f));
}

fn add_externals(
    model: &ArticulatedModel,
    kin: &Kinematics,
    time: f64,
    externals: &[ExternalForce],
    gen: &mut DVector<f64>,
) -> Result<(), DynamicsError> {
    for ext in externals.iter().filter(|e| e.is_active(time)) {
        let s = model
            .segment_index(&ext.body)
            .ok_or_else(|| DynamicsError::UnknownBody(ext.body.clone()))?;
        let point = kin.point_position(s, ext.point);
        add_point_force(kin, s, point, Vec2::new(ext.force[0], ext.force[1]), gen);
    }
    Ok(())
}

fn check_dims(model: &ArticulatedModel, v: &DVector<f64>) -> Result<(), DynamicsError> {
    if v.len() != model.n_q() {
        return Err(DynamicsError::Dimension {
            expected: model.n_q(),
            got: v.len(),
        });
    }
    Ok(())
}

pub fn solve_spd(mass: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, DynamicsError> {
    let chol = mass.cholesky().ok_or(DynamicsError::SingularMassMatrix)?;
    Ok(chol.solve(rhs))
}

/// Generalized accelerations for joint torques `tau` (base entries must be zero)
/// and the externals active at `state.time`.
pub fn forward_dynamics(
    model: &ArticulatedModel,
    state: &DynamicsState,
    tau: &DVector<f64>,
    externals: &[ExternalForce],
) -> Result<DVector<f64>, DynamicsError> {
    check_dims(model, tau)?;
    debug_assert!(
        (0..model.base_dofs()).all(|k| tau[k] == 0.0),
        "floating base is unactuated"
    );
    let kin = Kinematics::compute(model, state);
    forward_dynamics_with(model, state, &kin, tau, externals)
}

fn forward_dynamics_with(
    model: &ArticulatedModel,
    state: &DynamicsState,
    kin: &Kinematics,
    tau: &DVector<f64>,
    externals: &[ExternalForce],
) -> Result<DVector<f64>, DynamicsError> {
    let terms = assemble(model, state, kin);
    let mut rhs = terms.passive + tau;
    add_externals(model, kin, state.time, externals, &mut rhs)?;
    solve_spd(terms.mass, &rhs)
}

/// Semi-implicit Euler update. For a floating base the translational base
/// velocity is then corrected by O(dt^2) so that total linear momentum changes
/// by exactly `dt` times the net external force implied by `qdd`; base
/// translation does not enter the mass matrix, so the position update stays
/// consistent with the corrected velocity.
fn integrate(
    model: &ArticulatedModel,
    state: &DynamicsState,
    kin: &Kinematics,
    qdd: &DVector<f64>,
    dt: f64,
) -> Result<DynamicsState, DynamicsError> {
    let mut qdot = &state.qdot + qdd * dt;
    let mut q = &state.q + &qdot * dt;
    if matches!(model.base, Base::Floating) {
        let mut momentum = Vec2::zeros();
        let mut force = Vec2::zeros();
        for (s, seg) in model.segments.iter().enumerate() {
            momentum += seg.mass * kin.com_vel[s];
            let mut acc = kin.com_bias[s];
            kin.for_each_column(s, kin.com[s], |k, c| acc += c * qdd[k]);
            force += seg.mass * acc;
        }
        let provisional = DynamicsState {
            q: q.clone(),
            qdot: qdot.clone(),
            time: state.time,
        };
        let kin_next = Kinematics::compute(model, &provisional);
        let mut next_momentum = Vec2::zeros();
        for (s, seg) in model.segments.iter().enumerate() {
            next_momentum += seg.mass * kin_next.com_vel[s];
        }
        let dv = (momentum + force * dt - next_momentum) / model.total_mass();
        for i in 0..2 {
            qdot[i] += dv[i];
            q[i] += dt * dv[i];
        }
    }
    let next = DynamicsState {
        q,
        qdot,
        time: state.time + dt,
    };
    if !next.within(&model.blowup) {
        return Err(DynamicsError::Divergence {
            time: next.time,
            last_valid: Box::new(state.clone()),
        });
    }
    Ok(next)
}

/// One semi-implicit Euler step: `qdot+ = qdot + dt qdd`, `q+ = q + dt qdot+`
/// (with the momentum correction described at `integrate`).
pub fn step(
    model: &ArticulatedModel,
    state: &DynamicsState,
    tau: &DVector<f64>,
    externals: &[ExternalForce],
    dt: f64,
) -> Result<DynamicsState, DynamicsError> {
    if !(dt > 0.0) {
        return Err(DynamicsError::BadTimestep(dt));
    }
    check_dims(model, tau)?;
    let kin = Kinematics::compute(model, state);
    let qdd = forward_dynamics_with(model, state, &kin, tau, externals)?;
    integrate(model, state, &kin, &qdd, dt)
}

/// Semi-implicit Euler step with velocity-linear forces treated implicitly.
///
/// `applied` holds every explicit generalized force beyond gravity, bias and
/// joint damping; `damping` is `-d(applied)/d(qdot)` for the terms that should be
/// evaluated at the end-of-step velocity. Joint damping is always implicit.
/// Returns the new state and the accelerations used.
pub fn step_implicit(
    model: &ArticulatedModel,
    state: &DynamicsState,
    kin: &Kinematics,
    applied: &DVector<f64>,
    damping: &DMatrix<f64>,
    dt: f64,
) -> Result<(DynamicsState, DVector<f64>), DynamicsError> {
    if !(dt > 0.0) {
        return Err(DynamicsError::BadTimestep(dt));
    }
    let terms = assemble(model, state, kin);
    let mut lhs = terms.mass + damping * dt;
    for (j, joint) in model.joints.iter().enumerate() {
        let k = model.joint_coord(j);
        lhs[(k, k)] += dt * joint.damping;
    }
    let rhs = terms.passive + applied;
    let qdd = solve_spd(lhs, &rhs)?;
    let next = integrate(model, state, kin, &qdd, dt)?;
    Ok((next, qdd))
}

/// Proportional-derivative gains of one joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
}

impl ArticulatedModel {
    pub fn pd_gains(&self) -> Vec<PdGains> {
        self.joints
            .iter()
            .map(|j| PdGains { kp: j.kp, kd: j.kd })
            .collect()
    }
}

/// PD servo torques toward `q_target` (one entry per joint), saturated at each
/// joint's torque limit. Base entries are zero.
pub fn pd_torques(
    model: &ArticulatedModel,
    state: &DynamicsState,
    q_target: &[f64],
    gains: &[PdGains],
) -> DVector<f64> {
    let mut tau = DVector::zeros(model.n_q());
    for (j, joint) in model.joints.iter().enumerate() {
        let k = model.joint_coord(j);
        let raw = gains[j].kp * (q_target[j] - state.q[k]) - gains[j].kd * state.qdot[k];
        tau[k] = raw.clamp(-joint.torque_limit, joint.torque_limit);
    }
    tau
}

/// One-sided spring-damper torques keeping joints inside their range of motion.
/// Returns the torques and the per-coordinate damping that is active.
pub fn limit_torques(model: &ArticulatedModel, state: &DynamicsState) -> (DVector<f64>, DVector<f64>) {
    let n = model.n_q();
    let mut tau = DVector::zeros(n);
    let mut damp = DVector::zeros(n);
    for (j, joint) in model.joints.iter().enumerate() {
        let k = model.joint_coord(j);
        let q = state.q[k];
        let over = if q > joint.upper {
            q - joint.upper
        } else if q < joint.lower {
            q - joint.lower
        } else {
            continue;
        };
        tau[k] = -model.limit_stiffness * over - model.limit_damping * state.qdot[k];
        damp[k] = model.limit_damping;
    }
    (tau, damp)
}

/// Whole-body COM position, COM velocity and the centroidal angular velocity
/// (angular momentum about the COM over the composite inertia about the COM).
pub fn com_state(model: &ArticulatedModel, state: &DynamicsState) -> (Vec2, Vec2, f64) {
    let kin = Kinematics::compute(model, state);
    com_from_kinematics(model, &kin)
}

pub fn com_from_kinematics(model: &ArticulatedModel, kin: &Kinematics) -> (Vec2, Vec2, f64) {
    let total = model.total_mass();
    let mut com = Vec2::zeros();
    let mut vel = Vec2::zeros();
    for (s, seg) in model.segments.iter().enumerate() {
        com += seg.mass * kin.com[s];
        vel += seg.mass * kin.com_vel[s];
    }
    com /= total;
    vel /= total;
    let mut momentum = 0.0;
    let mut inertia = 0.0;
    for (s, seg) in model.segments.iter().enumerate() {
        let r = kin.com[s] - com;
        momentum += seg.inertia * kin.omega[s] + seg.mass * cross(r, kin.com_vel[s] - vel);
        inertia += seg.inertia + seg.mass * r.norm_squared();
    }
    (com, vel, momentum / inertia)
}

/// Kinetic energy `0.5 qdot^T M qdot` and gravitational potential energy.
pub fn mechanical_energy(model: &ArticulatedModel, state: &DynamicsState) -> (f64, f64) {
    let kin = Kinematics::compute(model, state);
    let terms = assemble(model, state, &kin);
    let kinetic = 0.5 * state.qdot.dot(&(&terms.mass * &state.qdot));
    let g = Vec2::new(model.gravity[0], model.gravity[1]);
    let potential: f64 = model
        .segments
        .iter()
        .enumerate()
        .map(|(s, seg)| -seg.mass * g.dot(&kin.com[s]))
        .sum();
    (kinetic, potential)
}

/// Total linear momentum of all segments.
pub fn linear_momentum(model: &ArticulatedModel, state: &DynamicsState) -> Vec2 {
    let kin = Kinematics::compute(model, state);
    model
        .segments
        .iter()
        .enumerate()
        .map(|(s, seg)| seg.mass * kin.com_vel[s])
        .sum()
}

#[cfg(test)]
mod tests;
