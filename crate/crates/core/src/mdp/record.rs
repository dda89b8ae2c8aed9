use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{BIPED_DOFS, BIPED_JOINTS, JOINT_NAMES};
use crate::reference::{EFFECTOR_NAMES, N_EFFECTORS};
use crate::Error;

use super::RewardTerms;

/// One control step of a rollout. Kinematic channels are taken at the end of
/// the step; torques and ground reaction forces are averaged over its substeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    /// [s]
    pub time: f64,
    /// Controller phase in [0, 1).
    pub phase: f64,
    pub q: [f64; BIPED_DOFS],
    pub qdot: [f64; BIPED_DOFS],
    /// Applied joint torques [N m].
    pub tau: [f64; BIPED_JOINTS],
    /// Total (tangential, vertical) ground reaction force [N].
    pub grf: [f64; 2],
    /// Force-weighted centre of pressure; NaN when airborne.
    pub cop_x: f64,
    /// Vertical ground reaction force under the left and right foot [N].
    pub foot_grf: [f64; 2],
    pub com: [f64; 2],
    pub effectors: [[f64; 2]; N_EFFECTORS],
    pub reward: RewardTerms,
}

/// Per-control-step log of a rollout with uniform time spacing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GaitRecord {
    /// Control period [s].
    pub dt: f64,
    /// Body mass [kg] and weight [N] of the simulated subject.
    pub mass: f64,
    pub steps: Vec<StepLog>,
}

impl GaitRecord {
    pub fn new(dt: f64, mass: f64) -> Self {
        Self {
            dt,
            mass,
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn weight(&self) -> f64 {
        self.mass * 9.81
    }

    pub fn duration(&self) -> f64 {
        self.steps.len() as f64 * self.dt
    }

    pub fn columns() -> Vec<String> {
        let mut cols = vec!["time".to_string(), "phase".to_string()];
        let pose = ["base_x", "base_z", "base_pitch"];
        let coords: Vec<&str> = pose.iter().copied().chain(JOINT_NAMES).collect();
        cols.extend(coords.iter().map(|c| format!("q_{c}")));
        cols.extend(coords.iter().map(|c| format!("qdot_{c}")));
        cols.extend(JOINT_NAMES.iter().map(|j| format!("tau_{j}")));
        cols.extend(
            ["grf_t", "grf_v", "cop_x", "grf_v_l", "grf_v_r", "com_x", "com_z"]
                .map(String::from),
        );
        for e in EFFECTOR_NAMES {
            cols.push(format!("{e}_x"));
            cols.push(format!("{e}_z"));
        }
        cols.extend(
            ["r_pose", "r_com", "r_effector", "r_torque", "reward"].map(String::from),
        );
        cols
    }

    /// One row per control step; values printed with shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut out = Self::columns().join(",");
        out.push('\n');
        for s in &self.steps {
            let mut row = vec![s.time, s.phase];
            row.extend_from_slice(&s.q);
            row.extend_from_slice(&s.qdot);
            row.extend_from_slice(&s.tau);
            row.extend_from_slice(&s.grf);
            row.push(s.cop_x);
            row.extend_from_slice(&s.foot_grf);
            row.extend_from_slice(&s.com);
            for e in &s.effectors {
                row.extend_from_slice(e);
            }
            row.extend([
                s.reward.pose,
                s.reward.com,
                s.reward.effector,
                s.reward.torque,
                s.reward.total,
            ]);
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                if v.is_nan() {
                    out.push_str("NaN");
                } else {
                    write!(out, "{v}").expect("string write");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), Error> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
