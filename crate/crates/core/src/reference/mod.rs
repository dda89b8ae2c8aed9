//! Reference gait motions indexed by phase, and subject characteristics.

mod io;
mod record;
mod subjects;
mod synth;

pub use io::{load_reference, save_reference, REFERENCE_HEADER};
pub use record::record_reference_from_rollout;
pub use subjects::{read_roster, roster, write_roster, SubjectSpec};
pub use synth::{synthesize_gait, GaitParams, DEFAULT_CYCLE_DURATION};
#[cfg(test)]
pub(crate) use synth::frame_from_state;

use serde::{Deserialize, Serialize};

use crate::dynamics::{BIPED_DOFS, BIPED_JOINTS};
use crate::Error;

/// Heel and toe of each foot: heel_l, toe_l, heel_r, toe_r.
pub const N_EFFECTORS: usize = 4;
pub const EFFECTOR_NAMES: [&str; N_EFFECTORS] = ["heel_l", "toe_l", "heel_r", "toe_r"];
/// Largest joint-angle mismatch allowed between the first and last frame [rad].
pub const PERIODICITY_TOLERANCE: f64 = 0.05;
pub const MIN_FRAMES: usize = 20;

/// Joint moments and total ground reaction force measured with a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameKinetics {
    /// [N m] per joint.
    pub torques: [f64; BIPED_JOINTS],
    /// Total (tangential, vertical) ground reaction force [N].
    pub grf: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFrame {
    /// Base x, base z, base pitch, then the six joint angles.
    pub pose: [f64; BIPED_DOFS],
    pub com: [f64; 2],
    pub effectors: [[f64; 2]; N_EFFECTORS],
    pub kinetics: Option<FrameKinetics>,
}

impl ReferenceFrame {
    pub fn joints(&self) -> &[f64] {
        &self.pose[3..]
    }

    fn lerp(&self, other: &Self, t: f64) -> Self {
        let mix = |a: f64, b: f64| (1.0 - t) * a + t * b;
        let mut out = *self;
        for i in 0..BIPED_DOFS {
            out.pose[i] = mix(self.pose[i], other.pose[i]);
        }
        for i in 0..2 {
            out.com[i] = mix(self.com[i], other.com[i]);
        }
        for e in 0..N_EFFECTORS {
            for i in 0..2 {
                out.effectors[e][i] = mix(self.effectors[e][i], other.effectors[e][i]);
            }
        }
        out.kinetics = match (self.kinetics, other.kinetics) {
            (Some(a), Some(b)) => {
                let mut k = a;
                for j in 0..BIPED_JOINTS {
                    k.torques[j] = mix(a.torques[j], b.torques[j]);
                }
                k.grf = [mix(a.grf[0], b.grf[0]), mix(a.grf[1], b.grf[1])];
                Some(k)
            }
            _ => None,
        };
        out
    }

    pub(crate) fn shift_x(&mut self, dx: f64) {
        self.pose[0] += dx;
        self.com[0] += dx;
        for e in self.effectors.iter_mut() {
            e[0] += dx;
        }
    }
}

/// One gait cycle sampled uniformly in phase; frame `i` sits at phase `i / (N - 1)`
/// so the last frame closes the cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMotion {
    frames: Vec<ReferenceFrame>,
    cycle_duration: f64,
    speed: f64,
}

/// Normalized position within the gait cycle, always in [0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PhaseVar(f64);

impl PhaseVar {
    pub fn new(phi: f64) -> Self {
        let w = phi.rem_euclid(1.0);
        // rem_euclid can round up to exactly 1.0 for tiny negative inputs
        PhaseVar(if w >= 1.0 { 0.0 } else { w })
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn advance(self, delta: f64) -> Self {
        PhaseVar::new(self.0 + delta)
    }
}

impl ReferenceMotion {
    pub fn new(frames: Vec<ReferenceFrame>, cycle_duration: f64, speed: f64) -> Result<Self, Error> {
        if frames.len() < MIN_FRAMES {
            return Err(Error::Reference(format!(
                "a reference needs at least {MIN_FRAMES} frames, got {}",
                frames.len()
            )));
        }
        if !(cycle_duration > 0.0) || !speed.is_finite() || speed < 0.0 {
            return Err(Error::Reference(format!(
                "cycle duration must be positive and speed non-negative (got {cycle_duration}, {speed})"
            )));
        }
        let first = frames[0].joints();
        let last = frames[frames.len() - 1].joints();
        for (j, (a, b)) in first.iter().zip(last).enumerate() {
            if (a - b).abs() > PERIODICITY_TOLERANCE {
                return Err(Error::Reference(format!(
                    "joint {} differs by {:.4} rad between first and last frame (cyclic motion required)",
                    crate::dynamics::JOINT_NAMES[j],
                    (a - b).abs()
                )));
            }
        }
        Ok(Self {
            frames,
            cycle_duration,
            speed,
        })
    }

    pub fn frames(&self) -> &[ReferenceFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn cycle_duration(&self) -> f64 {
        self.cycle_duration
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn has_kinetics(&self) -> bool {
        self.frames.iter().all(|f| f.kinetics.is_some())
    }

    /// Forward progression of the base over one cycle [m].
    pub fn stride(&self) -> f64 {
        self.frames[self.frames.len() - 1].pose[0] - self.frames[0].pose[0]
    }

    /// Phase of frame `i`.
    pub fn frame_phase(&self, i: usize) -> f64 {
        i as f64 / (self.frames.len() - 1) as f64
    }

    /// Linear interpolation at phase `phi` (wrapped into [0, 1)).
    pub fn sample(&self, phi: f64) -> ReferenceFrame {
        let phi = PhaseVar::new(phi).value();
        let pos = phi * (self.frames.len() - 1) as f64;
        let i = (pos.floor() as usize).min(self.frames.len() - 2);
        let t = pos - i as f64;
        self.frames[i].lerp(&self.frames[i + 1], t)
    }

    /// Sample at an unwrapped phase (cycles elapsed since phase 0): horizontal
    /// coordinates advance by one stride per completed cycle.
    pub fn sample_unwrapped(&self, cycles: f64) -> ReferenceFrame {
        let whole = cycles.floor();
        let mut f = self.sample(cycles - whole);
        f.shift_x(whole * self.stride());
        f
    }

    /// Generalized velocity of the reference pose at an unwrapped phase [m/s, rad/s].
    pub fn pose_velocity(&self, cycles: f64) -> [f64; BIPED_DOFS] {
        let h = 0.25 / (self.frames.len() - 1) as f64;
        let a = self.sample_unwrapped(cycles - h);
        let b = self.sample_unwrapped(cycles + h);
        let mut v = [0.0; BIPED_DOFS];
        for i in 0..BIPED_DOFS {
            v[i] = (b.pose[i] - a.pose[i]) / (2.0 * h * self.cycle_duration);
        }
        v
    }
}
