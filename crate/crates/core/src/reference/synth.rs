//! Synthetic cyclic gait generator.
//!
//! Joint trajectories are three-harmonic Fourier series fitted to normative
//! sagittal-plane walking curves (phase 0 = left heel strike; right leg lags by
//! half a cycle). The base advances so that the lowest contact point does not
//! slide, and its height keeps that point on the ground. The hip amplitude is
//! scaled until the no-slip progression over one cycle equals the requested
//! stride, so `speed = stride / cycle_duration` holds by construction.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    build_model, ArticulatedModel, DynamicsState, Kinematics, BIPED_DOFS, BIPED_JOINTS,
};
use crate::mdp::ParamVector;
use crate::Error;

use super::{ReferenceFrame, ReferenceMotion, SubjectSpec, N_EFFECTORS};

const HARMONICS: usize = 3;
pub const DEFAULT_CYCLE_DURATION: f64 = 33.0 * 0.033;
/// Integration grid for the no-slip base progression (multiple of 100).
const GRID: usize = 2000;

/// Normative curves as (phase, angle [rad]) knots: hip flexion +, knee flexion -,
/// ankle dorsiflexion +.
const HIP_KNOTS: [(f64, f64); 10] = [
    (0.00, 0.35),
    (0.10, 0.33),
    (0.30, 0.10),
    (0.50, -0.17),
    (0.60, -0.12),
    (0.70, 0.08),
    (0.80, 0.30),
    (0.85, 0.38),
    (0.92, 0.39),
    (0.97, 0.36),
];
const KNEE_KNOTS: [(f64, f64); 11] = [
    (0.00, -0.08),
    (0.15, -0.30),
    (0.30, -0.12),
    (0.40, -0.08),
    (0.50, -0.15),
    (0.60, -0.60),
    (0.72, -1.05),
    (0.80, -0.85),
    (0.87, -0.45),
    (0.94, -0.10),
    (0.98, -0.07),
];
const ANKLE_KNOTS: [(f64, f64); 10] = [
    (0.00, 0.00),
    (0.08, -0.08),
    (0.30, 0.10),
    (0.45, 0.17),
    (0.55, 0.05),
    (0.62, -0.28),
    (0.75, -0.05),
    (0.85, 0.03),
    (0.92, 0.01),
    (0.97, 0.00),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitParams {
    /// [s]
    pub cycle_duration: f64,
    /// Base progression over one full cycle (two steps) [m].
    pub stride_length: f64,
    /// Multipliers on the normative knee and ankle curves.
    pub knee_amplitude: f64,
    pub ankle_amplitude: f64,
    /// Frames per cycle, endpoints included.
    pub frames: usize,
}

impl GaitParams {
    /// Default gait for a subject at their walking speed. The cycle lasts 33
    /// control periods of 33 ms (1.089 s), so controller phases repeat exactly.
    pub fn for_subject(subject: &SubjectSpec) -> Self {
        let cycle_duration = DEFAULT_CYCLE_DURATION;
        Self {
            cycle_duration,
            stride_length: subject.speed * cycle_duration,
            knee_amplitude: 1.0,
            ankle_amplitude: 1.0,
            frames: 101,
        }
    }

    pub fn speed(&self) -> f64 {
        self.stride_length / self.cycle_duration
    }
}

/// Truncated Fourier series `a0 + sum_k a_k cos(2 pi k phi) + b_k sin(2 pi k phi)`.
#[derive(Debug, Clone)]
struct Fourier {
    coeffs: [f64; 1 + 2 * HARMONICS],
}

impl Fourier {
    fn basis(phi: f64) -> [f64; 1 + 2 * HARMONICS] {
        let mut b = [1.0; 1 + 2 * HARMONICS];
        for k in 1..=HARMONICS {
            let (s, c) = (TAU * k as f64 * phi).sin_cos();
            b[2 * k - 1] = c;
            b[2 * k] = s;
        }
        b
    }

    fn fit(knots: &[(f64, f64)]) -> Self {
        let n = 1 + 2 * HARMONICS;
        let mut a = DMatrix::zeros(knots.len(), n);
        let mut y = DVector::zeros(knots.len());
        for (r, &(phi, v)) in knots.iter().enumerate() {
            for (c, b) in Self::basis(phi).iter().enumerate() {
                a[(r, c)] = *b;
            }
            y[r] = v;
        }
        let normal = a.transpose() * &a;
        let rhs = a.transpose() * y;
        let sol = normal
            .cholesky()
            .expect("knot tables span every harmonic")
            .solve(&rhs);
        let mut coeffs = [0.0; 1 + 2 * HARMONICS];
        coeffs.copy_from_slice(sol.as_slice());
        Self { coeffs }
    }

    fn eval(&self, phi: f64) -> f64 {
        Self::basis(phi)
            .iter()
            .zip(&self.coeffs)
            .map(|(b, c)| b * c)
            .sum()
    }
}

struct Curves {
    hip: Fourier,
    knee: Fourier,
    ankle: Fourier,
}

impl Curves {
    fn normative() -> Self {
        Self {
            hip: Fourier::fit(&HIP_KNOTS),
            knee: Fourier::fit(&KNEE_KNOTS),
            ankle: Fourier::fit(&ANKLE_KNOTS),
        }
    }

    fn joints(&self, phi: f64, hip: f64, p: &GaitParams) -> [f64; BIPED_JOINTS] {
        let leg = |ph: f64| {
            [
                hip * self.hip.eval(ph),
                p.knee_amplitude * self.knee.eval(ph),
                p.ankle_amplitude * self.ankle.eval(ph),
            ]
        };
        let l = leg(phi);
        let r = leg(phi + 0.5);
        [l[0], l[1], l[2], r[0], r[1], r[2]]
    }
}

/// Contact point positions relative to a base at the origin with zero pitch.
fn relative_points(model: &ArticulatedModel, joints: &[f64; BIPED_JOINTS]) -> Vec<[f64; 2]> {
    let mut state = DynamicsState::zeros(BIPED_DOFS);
    for j in 0..BIPED_JOINTS {
        state.q[3 + j] = joints[j];
    }
    let kin = Kinematics::compute(model, &state);
    model
        .contact_points
        .iter()
        .map(|p| {
            let s = model.segment_index(&p.body).expect("validated model");
            let v = kin.point_position(s, p.local_offset);
            [v.x, v.y]
        })
        .collect()
}

/// Index of the lower of the stance foot's heel and toe; the left foot is in
/// stance for the first half of the cycle and the right foot for the second.
fn stance_point(points: &[[f64; 2]], phi: f64) -> usize {
    let heel = if phi.rem_euclid(1.0) < 0.5 { 0 } else { 2 };
    if points[heel + 1][1] < points[heel][1] {
        heel + 1
    } else {
        heel
    }
}

/// No-slip base x over the integration grid for a given hip scale.
fn base_progression(model: &ArticulatedModel, curves: &Curves, hip: f64, p: &GaitParams) -> Vec<f64> {
    let pts: Vec<Vec<[f64; 2]>> = (0..=GRID)
        .map(|k| relative_points(model, &curves.joints(k as f64 / GRID as f64, hip, p)))
        .collect();
    let mut x = vec![0.0; GRID + 1];
    for k in 0..GRID {
        let s = stance_point(&pts[k], (k as f64 + 0.5) / GRID as f64);
        x[k + 1] = x[k] - (pts[k + 1][s][0] - pts[k][s][0]);
    }
    x
}

/// Generate a cyclic reference gait on the subject's nominal model.
pub fn synthesize_gait(subject: &SubjectSpec, params: &GaitParams) -> Result<ReferenceMotion, Error> {
    if !(params.cycle_duration > 0.0) || params.frames < super::MIN_FRAMES {
        return Err(Error::Reference(format!(
            "gait needs a positive cycle duration and at least {} frames",
            super::MIN_FRAMES
        )));
    }
    if !(params.stride_length >= 0.0) || params.knee_amplitude < 0.0 || params.ankle_amplitude < 0.0 {
        return Err(Error::Reference("stride and amplitudes must be non-negative".into()));
    }
    let model = build_model(subject, &ParamVector::nominal(subject))?;
    let leg_length = model.standing_pelvis_height();
    if params.stride_length > 2.0 * leg_length {
        return Err(Error::Reference(format!(
            "stride {:.3} m exceeds twice the leg length ({:.3} m)",
            params.stride_length,
            2.0 * leg_length
        )));
    }

    let curves = Curves::normative();
    let stride_at = |hip: f64| base_progression(&model, &curves, hip, params)[GRID];
    let hip = if params.stride_length == 0.0 {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0, 4.0);
        if stride_at(hi) < params.stride_length {
            return Err(Error::Reference(format!(
                "stride {:.3} m is not reachable with feasible hip excursions",
                params.stride_length
            )));
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if stride_at(mid) < params.stride_length {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };

    let base_x = base_progression(&model, &curves, hip, params);
    // Pin the closing frame to the exact stride; bisection leaves ~1e-15 m.
    let scale = if base_x[GRID] != 0.0 {
        params.stride_length / base_x[GRID]
    } else {
        1.0
    };
    let n = params.frames;
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let phi = i as f64 / (n - 1) as f64;
        let joints = curves.joints(phi, hip, params);
        let rel = relative_points(&model, &joints);
        let ground = rel.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let grid_pos = phi * GRID as f64;
        let k = (grid_pos.floor() as usize).min(GRID - 1);
        let t = grid_pos - k as f64;
        let x = ((1.0 - t) * base_x[k] + t * base_x[k + 1]) * scale;

        let mut state = DynamicsState::zeros(BIPED_DOFS);
        state.q[0] = x;
        state.q[1] = -ground;
        for j in 0..BIPED_JOINTS {
            state.q[3 + j] = joints[j];
        }
        frames.push(frame_from_state(&model, &state));
    }
    ReferenceMotion::new(frames, params.cycle_duration, params.speed())
}

/// Kinematic reference frame (pose, COM, heel/toe positions) of a model state.
pub(crate) fn frame_from_state(model: &ArticulatedModel, state: &DynamicsState) -> ReferenceFrame {
    let kin = Kinematics::compute(model, state);
    let (com, _, _) = crate::dynamics::com_from_kinematics(model, &kin);
    let mut effectors = [[0.0; 2]; N_EFFECTORS];
    for (e, p) in model.contact_points.iter().take(N_EFFECTORS).enumerate() {
        let s = model.segment_index(&p.body).expect("validated model");
        let v = kin.point_position(s, p.local_offset);
        effectors[e] = [v.x, v.y];
    }
    let mut pose = [0.0; BIPED_DOFS];
    pose.copy_from_slice(state.q.as_slice());
    ReferenceFrame {
        pose,
        com: [com.x, com.y],
        effectors,
        kinetics: None,
    }
}
