//! Gait cycles and the comparison metrics computed on them.

use serde::{Deserialize, Serialize};

use crate::dynamics::BIPED_JOINTS;
use crate::mdp::GaitRecord;
use crate::reference::ReferenceMotion;
use crate::Error;

pub const CYCLE_POINTS: usize = 101;
/// Heel strike: foot vertical force rising through this fraction of body weight...
pub const STRIKE_THRESHOLD: f64 = 0.05;
/// ...after staying below it for at least this long [s].
pub const STRIKE_DEBOUNCE: f64 = 0.05;
const GRAVITY: f64 = 9.81;

/// One gait cycle resampled to `CYCLE_POINTS` uniformly spaced phase points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitCycle {
    /// First and last record index inside the cycle.
    pub start: usize,
    pub end: usize,
    /// Heel-strike times (interpolated between control steps) [s].
    pub start_time: f64,
    pub end_time: f64,
    pub mass: f64,
    pub pitch: Vec<f64>,
    /// Joint angles [rad].
    pub angles: [Vec<f64>; BIPED_JOINTS],
    /// Joint torques [N m]; all zero when `kinetics` is false.
    pub torques: [Vec<f64>; BIPED_JOINTS],
    /// Total (tangential, vertical) ground reaction force [N].
    pub grf: [Vec<f64>; 2],
    pub kinetics: bool,
}

impl GaitCycle {
    pub fn duration(&self) -> f64 {
        self.end_time - self.start_time
    }

    /// Cycle of a reference motion, starting at its phase 0.
    pub fn from_reference(motion: &ReferenceMotion, mass: f64) -> Self {
        let kinetics = motion.has_kinetics();
        let mut cycle = empty_cycle(mass, kinetics);
        for k in 0..CYCLE_POINTS {
            let phi = k as f64 / (CYCLE_POINTS - 1) as f64;
            // phase 1 wraps to 0; take the closing frame explicitly
            let f = if k + 1 == CYCLE_POINTS {
                *motion.frames().last().expect("validated motion has frames")
            } else {
                motion.sample(phi)
            };
            cycle.pitch[k] = f.pose[2];
            for j in 0..BIPED_JOINTS {
                cycle.angles[j][k] = f.pose[3 + j];
            }
            if let Some(kin) = f.kinetics {
                for j in 0..BIPED_JOINTS {
                    cycle.torques[j][k] = kin.torques[j];
                }
                cycle.grf[0][k] = kin.grf[0];
                cycle.grf[1][k] = kin.grf[1];
            }
        }
        cycle.end = motion.len() - 1;
        cycle.end_time = motion.cycle_duration();
        cycle
    }

    /// Mean vertical ground reaction force over the cycle divided by body weight.
    pub fn mean_vertical_grf_ratio(&self) -> f64 {
        // trapezoid over the closed phase grid
        let g = &self.grf[1];
        let n = g.len() - 1;
        let integral: f64 = (0..n).map(|k| 0.5 * (g[k] + g[k + 1])).sum::<f64>() / n as f64;
        integral / (self.mass * GRAVITY)
    }
}

fn empty_cycle(mass: f64, kinetics: bool) -> GaitCycle {
    let z = || vec![0.0; CYCLE_POINTS];
    GaitCycle {
        start: 0,
        end: 0,
        start_time: 0.0,
        end_time: 0.0,
        mass,
        pitch: z(),
        angles: std::array::from_fn(|_| z()),
        torques: std::array::from_fn(|_| z()),
        grf: [z(), z()],
        kinetics,
    }
}

/// Fractional record positions of left-foot heel strikes.
pub fn heel_strikes(record: &GaitRecord) -> Vec<f64> {
    let threshold = STRIKE_THRESHOLD * record.weight();
    let need = (STRIKE_DEBOUNCE / record.dt - 1e-9).ceil().max(1.0) as usize;
    let mut strikes = Vec::new();
    let mut below = 0usize;
    for (i, s) in record.steps.iter().enumerate() {
        let f = s.foot_grf[0];
        if f < threshold {
            below += 1;
            continue;
        }
        if i > 0 && below >= need {
            let prev = record.steps[i - 1].foot_grf[0];
            let t = ((threshold - prev) / (f - prev)).clamp(0.0, 1.0);
            strikes.push((i - 1) as f64 + t);
        }
        below = 0;
    }
    strikes
}

/// Split a record into left heel-strike to heel-strike cycles resampled to
/// `CYCLE_POINTS` phase points.
pub fn segment_cycles(record: &GaitRecord) -> Result<Vec<GaitCycle>, Error> {
    let strikes = heel_strikes(record);
    if strikes.len() < 2 {
        return Err(Error::Segmentation(format!(
            "found {} heel strike(s) in {} steps; need at least 2",
            strikes.len(),
            record.len()
        )));
    }
    Ok(strikes
        .windows(2)
        .map(|w| resample(record, w[0], w[1]))
        .collect())
}

fn resample(record: &GaitRecord, a: f64, b: f64) -> GaitCycle {
    let mut cycle = empty_cycle(record.mass, true);
    let last = record.len() - 1;
    for k in 0..CYCLE_POINTS {
        let pos = a + (b - a) * k as f64 / (CYCLE_POINTS - 1) as f64;
        let i = (pos.floor() as usize).min(last);
        let t = pos - i as f64;
        let j = (i + 1).min(last);
        let (s0, s1) = (&record.steps[i], &record.steps[j]);
        let mix = |x: f64, y: f64| if t == 0.0 { x } else { (1.0 - t) * x + t * y };
        cycle.pitch[k] = mix(s0.q[2], s1.q[2]);
        for jt in 0..BIPED_JOINTS {
            cycle.angles[jt][k] = mix(s0.q[3 + jt], s1.q[3 + jt]);
            cycle.torques[jt][k] = mix(s0.tau[jt], s1.tau[jt]);
        }
        cycle.grf[0][k] = mix(s0.grf[0], s1.grf[0]);
        cycle.grf[1][k] = mix(s0.grf[1], s1.grf[1]);
    }
    cycle.start = a.ceil() as usize;
    cycle.end = b.floor() as usize;
    cycle.start_time = a * record.dt;
    cycle.end_time = b * record.dt;
    cycle
}

/// Normalization of the kinetic channels in the cycle error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorScales {
    /// [N m]
    pub torque: f64,
    /// [N]
    pub force: f64,
}

impl ErrorScales {
    /// `0.1 m g L` for torques, body weight for forces.
    pub fn new(mass: f64, leg_length: f64) -> Self {
        Self {
            torque: 0.1 * mass * GRAVITY * leg_length,
            force: mass * GRAVITY,
        }
    }
}

/// Cycle error and its per-channel sums.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleError {
    pub total: f64,
    pub angles: f64,
    pub torques: f64,
    pub grf: f64,
}

/// Sum over phase points of the joint-angle, scaled torque and scaled force
/// distances. Kinetic terms are skipped unless both cycles carry kinetics.
pub fn compute_error(a: &GaitCycle, b: &GaitCycle, scales: &ErrorScales) -> Result<CycleError, Error> {
    let n = a.pitch.len();
    let lens = a.angles.iter().chain(&a.torques).chain(&a.grf).chain(&b.angles).chain(&b.torques).chain(&b.grf);
    for c in lens.chain([&b.pitch]) {
        if c.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: c.len(),
            });
        }
    }
    let kinetics = a.kinetics && b.kinetics;
    let mut e = CycleError::default();
    for k in 0..n {
        let dist = |x: &[Vec<f64>], y: &[Vec<f64>]| {
            x.iter()
                .zip(y)
                .map(|(u, v)| (u[k] - v[k]).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        e.angles += dist(&a.angles, &b.angles);
        if kinetics {
            e.torques += dist(&a.torques, &b.torques) / scales.torque;
            e.grf += dist(&a.grf, &b.grf) / scales.force;
        }
    }
    e.total = e.angles + e.torques + e.grf;
    Ok(e)
}

pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64, Error> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

/// Joint moments normalized by body mass [N m/kg].
pub fn joint_moments(cycle: &GaitCycle) -> [Vec<f64>; BIPED_JOINTS] {
    std::array::from_fn(|j| cycle.torques[j].iter().map(|t| *t / cycle.mass).collect())
}

/// RMSE per channel group, each averaged over its channels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RmseSummary {
    /// [rad]
    pub angles: f64,
    /// [N m/kg]
    pub moments: f64,
    /// [N/kg]
    pub grf: f64,
}

pub fn rmse_summary(sim: &GaitCycle, reference: &GaitCycle) -> Result<RmseSummary, Error> {
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let angles = (0..BIPED_JOINTS)
        .map(|j| rmse(&sim.angles[j], &reference.angles[j]))
        .collect::<Result<Vec<_>, _>>()?;
    let (ms, mr) = (joint_moments(sim), joint_moments(reference));
    let moments = (0..BIPED_JOINTS)
        .map(|j| rmse(&ms[j], &mr[j]))
        .collect::<Result<Vec<_>, _>>()?;
    let grf = (0..2)
        .map(|c| {
            let s: Vec<f64> = sim.grf[c].iter().map(|f| f / sim.mass).collect();
            let r: Vec<f64> = reference.grf[c].iter().map(|f| f / reference.mass).collect();
            rmse(&s, &r)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RmseSummary {
        angles: mean(angles),
        moments: mean(moments),
        grf: mean(grf),
    })
}

/// Closed (angle, torque) curve of one joint over a cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorqueLoop {
    /// `CYCLE_POINTS + 1` points; the last repeats the first.
    pub points: Vec<[f64; 2]>,
    /// Indices of 0%, 50% and 100% of the cycle.
    pub markers: [usize; 3],
}

impl TorqueLoop {
    /// Signed area enclosed by the loop, positive when it is traversed so that
    /// the joint does net positive work.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[0][1] * w[1][0] - w[1][1] * w[0][0])
            .sum::<f64>()
            * 0.5
    }

    /// Net work, the trapezoid rule for the loop integral of torque over angle [J].
    pub fn work(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| 0.5 * (w[0][1] + w[1][1]) * (w[1][0] - w[0][0]))
            .sum()
    }
}

pub fn torque_loop(cycle: &GaitCycle, joint: usize) -> TorqueLoop {
    let q = &cycle.angles[joint];
    let t = &cycle.torques[joint];
    let mut points: Vec<[f64; 2]> = q.iter().zip(t).map(|(a, b)| [*a, *b]).collect();
    points.push(points[0]);
    let n = q.len() - 1;
    TorqueLoop {
        points,
        markers: [0, n / 2, n],
    }
}
