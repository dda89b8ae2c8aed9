//! Tidy CSV tables for plotting: one observation per row.

use std::fmt::Write as _;

use biogait::alternation::{joint_moments, rmse, torque_loop, GaitCycle, CYCLE_POINTS};
use biogait::dynamics::{BIPED_JOINTS, JOINT_NAMES};
use biogait::mdp::{ParamBounds, ParamVector, PARAM_NAMES};

const GRF_NAMES: [&str; 2] = ["grf_tangential", "grf_vertical"];

fn phase(k: usize) -> f64 {
    k as f64 / (CYCLE_POINTS - 1) as f64
}

fn long_rows(out: &mut String, channel: &str, values: &[f64], source: &str) {
    for (k, v) in values.iter().enumerate() {
        writeln!(out, "{channel},{},{v},{source}", phase(k)).expect("string write");
    }
}

/// `channel,phase,value,source` table of a simulated cycle and, when given,
/// its reference. `pick` selects the channels of one figure.
fn long_table(sim: &GaitCycle, reference: Option<&GaitCycle>, pick: impl Fn(&GaitCycle) -> Vec<(String, Vec<f64>)>) -> String {
    let mut out = String::from("channel,phase,value,source\n");
    for (name, values) in pick(sim) {
        long_rows(&mut out, &name, &values, "sim");
    }
    if let Some(r) = reference {
        for (name, values) in pick(r) {
            long_rows(&mut out, &name, &values, "reference");
        }
    }
    out
}

pub fn joint_angles_csv(sim: &GaitCycle, reference: &GaitCycle) -> String {
    long_table(sim, Some(reference), |c| {
        (0..BIPED_JOINTS).map(|j| (JOINT_NAMES[j].to_string(), c.angles[j].clone())).collect()
    })
}

/// Mass-normalized joint moments [N m/kg]; reference rows only when it has kinetics.
pub fn joint_moments_csv(sim: &GaitCycle, reference: &GaitCycle) -> String {
    long_table(sim, reference.kinetics.then_some(reference), |c| {
        joint_moments(c)
            .into_iter()
            .enumerate()
            .map(|(j, m)| (JOINT_NAMES[j].to_string(), m))
            .collect()
    })
}

/// Ground reaction forces per body mass [N/kg].
pub fn grf_csv(sim: &GaitCycle, reference: &GaitCycle) -> String {
    long_table(sim, reference.kinetics.then_some(reference), |c| {
        (0..2)
            .map(|i| (GRF_NAMES[i].to_string(), c.grf[i].iter().map(|f| f / c.mass).collect()))
            .collect()
    })
}

/// Closed angle-torque curves of every joint, with the 0/50/100% markers.
pub fn torque_loops_csv(sim: &GaitCycle, reference: &GaitCycle) -> String {
    let mut out = String::from("joint,point,angle,torque,marker,source\n");
    let mut emit = |c: &GaitCycle, source: &str| {
        for (j, name) in JOINT_NAMES.iter().enumerate().take(BIPED_JOINTS) {
            let l = torque_loop(c, j);
            for (i, p) in l.points.iter().enumerate() {
                let marker = match l.markers.iter().position(|m| *m == i) {
                    Some(0) => "start",
                    Some(1) => "half",
                    Some(_) => "end",
                    None => "",
                };
                writeln!(out, "{name},{i},{},{},{marker},{source}", p[0], p[1] / c.mass).expect("string write");
            }
        }
    };
    emit(sim, "sim");
    if reference.kinetics {
        emit(reference, "reference");
    }
    out
}

/// Per-channel RMSE of the simulated cycle against the reference, followed by
/// group means. Kinetic channels appear only when the reference has them.
pub fn rmse_table(sim: &GaitCycle, reference: &GaitCycle) -> Vec<(String, String, f64)> {
    let mut rows = Vec::new();
    let mut group = |name: &str, channels: Vec<(String, f64)>| {
        let mean = channels.iter().map(|c| c.1).sum::<f64>() / channels.len() as f64;
        rows.extend(channels.into_iter().map(|(c, v)| (name.to_string(), c, v)));
        rows.push((name.to_string(), "mean".to_string(), mean));
    };
    let r = |a: &[f64], b: &[f64]| rmse(a, b).expect("cycles share the phase grid");
    group(
        "angle_rad",
        (0..BIPED_JOINTS).map(|j| (JOINT_NAMES[j].to_string(), r(&sim.angles[j], &reference.angles[j]))).collect(),
    );
    if reference.kinetics {
        let (ms, mr) = (joint_moments(sim), joint_moments(reference));
        group(
            "moment_nm_per_kg",
            (0..BIPED_JOINTS).map(|j| (JOINT_NAMES[j].to_string(), r(&ms[j], &mr[j]))).collect(),
        );
        group(
            "grf_n_per_kg",
            (0..2)
                .map(|i| {
                    let s: Vec<f64> = sim.grf[i].iter().map(|f| f / sim.mass).collect();
                    let t: Vec<f64> = reference.grf[i].iter().map(|f| f / reference.mass).collect();
                    (GRF_NAMES[i].to_string(), r(&s, &t))
                })
                .collect(),
        );
    }
    rows
}

pub fn rmse_csv(sim: &GaitCycle, reference: &GaitCycle) -> String {
    let mut out = String::from("group,channel,rmse\n");
    for (g, c, v) in rmse_table(sim, reference) {
        writeln!(out, "{g},{c},{v}").expect("string write");
    }
    out
}

/// `parameter,value` listing of `mu`.
pub fn params_csv(mu: &ParamVector) -> String {
    let mut out = String::from("parameter,value\n");
    for (name, v) in PARAM_NAMES.iter().zip(mu.to_array()) {
        writeln!(out, "{name},{v}").expect("string write");
    }
    out
}

/// Read a `parameter,value` listing back.
pub fn params_from_csv(text: &str) -> anyhow::Result<ParamVector> {
    let mut values = [f64::NAN; PARAM_NAMES.len()];
    for (n, line) in text.lines().enumerate().skip(1) {
        let Some((name, value)) = line.split_once(',') else {
            anyhow::bail!("line {}: expected `parameter,value`", n + 1);
        };
        let i = PARAM_NAMES
            .iter()
            .position(|p| *p == name.trim())
            .ok_or_else(|| anyhow::anyhow!("line {}: unknown parameter `{name}`", n + 1))?;
        values[i] = value.trim().parse().map_err(|e| anyhow::anyhow!("line {}: {e}", n + 1))?;
    }
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        anyhow::bail!("missing parameter `{}`", PARAM_NAMES[i]);
    }
    Ok(ParamVector::from_slice(&values)?)
}

/// Oracle, start and recovered parameters with errors in bound widths.
pub fn recovery_csv(bounds: &ParamBounds, truth: &ParamVector, start: &ParamVector, recovered: &ParamVector) -> String {
    let mut out = String::from("parameter,truth,start,recovered,start_error_widths,recovered_error_widths\n");
    let (t, s, r) = (truth.to_array(), start.to_array(), recovered.to_array());
    for i in 0..PARAM_NAMES.len() {
        let w = bounds.width(i);
        let rel = |x: f64| if w > 0.0 { (x - t[i]).abs() / w } else { 0.0 };
        writeln!(out, "{},{},{},{},{},{}", PARAM_NAMES[i], t[i], s[i], r[i], rel(s[i]), rel(r[i])).expect("string write");
    }
    out
}
