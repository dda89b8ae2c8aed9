use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{FOOT_HEIGHT_FRACTION, SHANK_HEIGHT_FRACTION, THIGH_HEIGHT_FRACTION};
use crate::reference::SubjectSpec;
use crate::Error;

/// Number of identified quantities in the planar model.
pub const PARAM_DIM: usize = 13;

pub const PARAM_NAMES: [&str; PARAM_DIM] = [
    "damping_hip",
    "damping_knee",
    "damping_ankle",
    "friction",
    "foot_length",
    "shank_length",
    "thigh_length",
    "ankle_offset_x",
    "ankle_offset_z",
    "hip_offset_x",
    "hip_offset_z",
    "knee_offset_x",
    "knee_offset_z",
];

/// Identified model quantities `mu`: joint damping per joint group, foot-ground
/// friction, segment lengths and joint-axis offsets in the parent frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamVector {
    /// Hip, knee, ankle [N m s/rad].
    pub damping: [f64; 3],
    pub friction: f64,
    /// [m]
    pub foot_length: f64,
    pub shank_length: f64,
    pub thigh_length: f64,
    /// Joint-axis offsets [m].
    pub ankle_offset: [f64; 2],
    pub hip_offset: [f64; 2],
    pub knee_offset: [f64; 2],
}

impl ParamVector {
    /// Anthropometric lengths, light damping, nominal friction and no offsets.
    pub fn nominal(subject: &SubjectSpec) -> Self {
        let h = subject.height_m();
        Self {
            damping: [0.5; 3],
            friction: 0.8,
            foot_length: FOOT_HEIGHT_FRACTION * h,
            shank_length: SHANK_HEIGHT_FRACTION * h,
            thigh_length: THIGH_HEIGHT_FRACTION * h,
            ankle_offset: [0.0; 2],
            hip_offset: [0.0; 2],
            knee_offset: [0.0; 2],
        }
    }

    pub fn to_array(&self) -> [f64; PARAM_DIM] {
        [
            self.damping[0],
            self.damping[1],
            self.damping[2],
            self.friction,
            self.foot_length,
            self.shank_length,
            self.thigh_length,
            self.ankle_offset[0],
            self.ankle_offset[1],
            self.hip_offset[0],
            self.hip_offset[1],
            self.knee_offset[0],
            self.knee_offset[1],
        ]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self, Error> {
        if v.len() != PARAM_DIM {
            return Err(Error::Dimension {
                expected: PARAM_DIM,
                got: v.len(),
            });
        }
        Ok(Self {
            damping: [v[0], v[1], v[2]],
            friction: v[3],
            foot_length: v[4],
            shank_length: v[5],
            thigh_length: v[6],
            ankle_offset: [v[7], v[8]],
            hip_offset: [v[9], v[10]],
            knee_offset: [v[11], v[12]],
        })
    }
}

/// Per-component box for `mu`, in `ParamVector` component order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ParamBounds {
    /// Randomization box around the subject's nominal parameters: lengths +-20%,
    /// damping in [0.05, 2], friction in [0.3, 1.5], joint-axis offsets +-3 cm.
    pub fn default_for(subject: &SubjectSpec) -> Self {
        let n = ParamVector::nominal(subject);
        let mut lo = vec![0.05, 0.05, 0.05, 0.3];
        let mut hi = vec![2.0, 2.0, 2.0, 1.5];
        for l in [n.foot_length, n.shank_length, n.thigh_length] {
            lo.push(0.8 * l);
            hi.push(1.2 * l);
        }
        lo.extend([-0.03; 6]);
        hi.extend([0.03; 6]);
        Self { lo, hi }
    }

    /// Zero-width box at `p`.
    pub fn point(p: &ParamVector) -> Self {
        let v = p.to_array().to_vec();
        Self { lo: v.clone(), hi: v }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.lo.len() != PARAM_DIM || self.hi.len() != PARAM_DIM {
            return Err(Error::Config(format!(
                "parameter bounds need {PARAM_DIM} entries (got lo {}, hi {})",
                self.lo.len(),
                self.hi.len()
            )));
        }
        for i in 0..PARAM_DIM {
            if !(self.lo[i].is_finite() && self.hi[i].is_finite() && self.lo[i] <= self.hi[i]) {
                return Err(Error::Config(format!(
                    "parameter bounds for '{}' must be finite with lo <= hi (got [{}, {}])",
                    PARAM_NAMES[i], self.lo[i], self.hi[i]
                )));
            }
        }
        for i in 4..7 {
            if !(self.lo[i] > 0.0) {
                return Err(Error::Config(format!(
                    "lower bound of '{}' must be positive",
                    PARAM_NAMES[i]
                )));
            }
        }
        if self.lo[..3].iter().any(|b| *b < 0.0) {
            return Err(Error::Config("damping bounds must be non-negative".into()));
        }
        Ok(())
    }

    pub fn width(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    pub fn contains(&self, p: &ParamVector) -> bool {
        p.to_array()
            .iter()
            .enumerate()
            .all(|(i, v)| *v >= self.lo[i] && *v <= self.hi[i])
    }

    /// Map to the unit box; collapsed components map to 0.
    pub fn to_unit(&self, p: &ParamVector) -> [f64; PARAM_DIM] {
        let v = p.to_array();
        let mut u = [0.0; PARAM_DIM];
        for i in 0..PARAM_DIM {
            let w = self.width(i);
            u[i] = if w > 0.0 { (v[i] - self.lo[i]) / w } else { 0.0 };
        }
        u
    }

    pub fn from_unit(&self, u: &[f64]) -> ParamVector {
        let v: Vec<f64> = (0..PARAM_DIM)
            .map(|i| self.lo[i] + u[i] * self.width(i))
            .collect();
        ParamVector::from_slice(&v).expect("PARAM_DIM entries")
    }

    /// Move `p` by `fraction` of each bound width toward the farther side,
    /// staying inside the box.
    pub fn perturb(&self, p: &ParamVector, fraction: f64) -> ParamVector {
        let v = p.to_array();
        let mut out = [0.0; PARAM_DIM];
        for i in 0..PARAM_DIM {
            let step = fraction * self.width(i);
            let up = self.hi[i] - v[i];
            let down = v[i] - self.lo[i];
            out[i] = if up >= down {
                (v[i] + step).min(self.hi[i])
            } else {
                (v[i] - step).max(self.lo[i])
            };
        }
        ParamVector::from_slice(&out).expect("PARAM_DIM entries")
    }
}

/// Draw `mu` uniformly from the box. With `shared_damping` one damping value is
/// drawn from the hip range and copied to every joint group.
pub fn randomize_params<R: Rng + ?Sized>(
    rng: &mut R,
    bounds: &ParamBounds,
    shared_damping: bool,
) -> ParamVector {
    let mut v = [0.0; PARAM_DIM];
    for i in 0..PARAM_DIM {
        let u: f64 = rng.random();
        v[i] = bounds.lo[i] + u * bounds.width(i);
    }
    if shared_damping {
        v[1] = v[0];
        v[2] = v[0];
    }
    ParamVector::from_slice(&v).expect("PARAM_DIM entries")
}
