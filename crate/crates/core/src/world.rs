//! Physics substep combining rigid-body dynamics, ground contact, PD actuation
//! and joint-limit penalties.
//!
//! Velocity-linear forces (PD derivative term, joint damping, limit damping,
//! contact damping and regularized friction) are linearized at the current
//! velocity and integrated implicitly, which keeps the stiff friction
//! regularization and the light feet stable at dt = 1 ms.

use nalgebra::{DMatrix, DVector};

use crate::contact::{contact_forces, PointContact};
use crate::dynamics::{
    add_point_force, limit_torques, step_implicit, ArticulatedModel, DynamicsError,
    DynamicsState, ExternalForce, Kinematics, Vec2,
};

/// Forces actually applied during one substep.
#[derive(Debug, Clone)]
pub struct SubstepLog {
    /// Actuator torque per joint [N m], evaluated at the end-of-step velocity.
    pub joint_torques: Vec<f64>,
    /// Applied contact force per contact point.
    pub contacts: Vec<AppliedContact>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppliedContact {
    pub segment: usize,
    pub position: Vec2,
    pub force: Vec2,
}

pub struct World<'a> {
    pub model: &'a ArticulatedModel,
}

impl<'a> World<'a> {
    pub fn new(model: &'a ArticulatedModel) -> Self {
        Self { model }
    }

    /// Advance `state` by `dt`, tracking `q_target` with the joint PD servos when given.
    pub fn substep(
        &self,
        state: &DynamicsState,
        q_target: Option<&[f64]>,
        externals: &[ExternalForce],
        dt: f64,
    ) -> Result<(DynamicsState, SubstepLog), DynamicsError> {
        let model = self.model;
        let n = model.n_q();
        let kin = Kinematics::compute(model, state);
        let mut applied = DVector::zeros(n);
        let mut damping = DMatrix::zeros(n, n);

        // PD servo; saturated joints get no implicit derivative term.
        let n_joints = model.joints.len();
        let mut saturated = vec![true; n_joints];
        let mut pd_explicit = vec![0.0; n_joints];
        if let Some(target) = q_target {
            for (j, joint) in model.joints.iter().enumerate() {
                let k = model.joint_coord(j);
                let raw = joint.kp * (target[j] - state.q[k]) - joint.kd * state.qdot[k];
                if raw.abs() < joint.torque_limit {
                    saturated[j] = false;
                    damping[(k, k)] += joint.kd;
                    pd_explicit[j] = raw;
                } else {
                    pd_explicit[j] = raw.clamp(-joint.torque_limit, joint.torque_limit);
                }
                applied[k] += pd_explicit[j];
            }
        }

        let (tau_lim, damp_lim) = limit_torques(model, state);
        applied += &tau_lim;
        for k in 0..n {
            damping[(k, k)] += damp_lim[k];
        }

        let contacts = contact_forces(model, &kin, &model.contact_points, &model.contact);
        let mut columns: Vec<Vec<(usize, Vec2)>> = Vec::with_capacity(contacts.len());
        for c in &contacts {
            let mut cols = Vec::with_capacity(n);
            if c.force != Vec2::zeros() || c.normal_damping > 0.0 {
                kin.for_each_column(c.segment, c.position, |k, col| cols.push((k, col)));
                add_point_force(&kin, c.segment, c.position, c.force, &mut applied);
                for &(a, ca) in &cols {
                    for &(b, cb) in &cols {
                        damping[(a, b)] += c.tangential_damping * ca.x * cb.x
                            + c.normal_damping * ca.y * cb.y;
                    }
                }
            }
            columns.push(cols);
        }

        for ext in externals.iter().filter(|e| e.is_active(state.time)) {
            let s = model
                .segment_index(&ext.body)
                .ok_or_else(|| DynamicsError::UnknownBody(ext.body.clone()))?;
            let point = kin.point_position(s, ext.point);
            add_point_force(&kin, s, point, Vec2::new(ext.force[0], ext.force[1]), &mut applied);
        }

        let (next, qdd) = step_implicit(model, state, &kin, &applied, &damping, dt)?;

        let joint_torques = (0..n_joints)
            .map(|j| {
                if q_target.is_none() {
                    0.0
                } else if saturated[j] {
                    pd_explicit[j]
                } else {
                    let k = model.joint_coord(j);
                    pd_explicit[j] - model.joints[j].kd * dt * qdd[k]
                }
            })
            .collect();
        let contacts = contacts
            .iter()
            .zip(&columns)
            .map(|(c, cols)| applied_contact(c, cols, &qdd, dt))
            .collect();
        Ok((
            next,
            SubstepLog {
                joint_torques,
                contacts,
            },
        ))
    }
}

fn applied_contact(c: &PointContact, cols: &[(usize, Vec2)], qdd: &DVector<f64>, dt: f64) -> AppliedContact {
    let mut dv = Vec2::zeros();
    for &(k, col) in cols {
        dv += col * (qdd[k] * dt);
    }
    AppliedContact {
        segment: c.segment,
        position: c.position,
        force: Vec2::new(
            c.force.x - c.tangential_damping * dv.x,
            c.force.y - c.normal_damping * dv.y,
        ),
    }
}
