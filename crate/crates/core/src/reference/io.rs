//! Reference motion CSV files.
//!
//! Schema v1: a header line `# biogait-reference v1 cycle_duration=<s> speed=<m/s>`,
//! then a CSV header row and one row per frame with columns
//!
//! `phase, base_x, base_z, base_pitch, hip_l, knee_l, ankle_l, hip_r, knee_r, ankle_r,
//!  com_x, com_z, heel_l_x, heel_l_z, toe_l_x, toe_l_z, heel_r_x, heel_r_z, toe_r_x, toe_r_z`
//!
//! optionally followed by the kinetics block
//! `tau_hip_l, ..., tau_ankle_r, grf_t, grf_v` (N m and N). Angles are radians,
//! positions meters. Phase runs from 0 to 1 inclusive in uniform steps.

use std::fmt::Write as _;
use std::path::Path;

use crate::dynamics::{BIPED_JOINTS, JOINT_NAMES};
use crate::Error;

use super::{FrameKinetics, ReferenceFrame, ReferenceMotion, EFFECTOR_NAMES, N_EFFECTORS};

pub const REFERENCE_HEADER: &str = "# biogait-reference v1";

fn kinematic_columns() -> Vec<String> {
    let mut cols: Vec<String> = ["phase", "base_x", "base_z", "base_pitch"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(JOINT_NAMES.iter().map(|s| s.to_string()));
    cols.push("com_x".into());
    cols.push("com_z".into());
    for e in EFFECTOR_NAMES {
        cols.push(format!("{e}_x"));
        cols.push(format!("{e}_z"));
    }
    cols
}

fn kinetic_columns() -> Vec<String> {
    let mut cols: Vec<String> = JOINT_NAMES.iter().map(|j| format!("tau_{j}")).collect();
    cols.push("grf_t".into());
    cols.push("grf_v".into());
    cols
}

pub fn reference_to_csv(motion: &ReferenceMotion) -> String {
    let kinetics = motion.has_kinetics();
    let mut out = format!(
        "{REFERENCE_HEADER} cycle_duration={} speed={}\n",
        motion.cycle_duration(),
        motion.speed()
    );
    let mut cols = kinematic_columns();
    if kinetics {
        cols.extend(kinetic_columns());
    }
    out.push_str(&cols.join(","));
    out.push('\n');
    for (i, f) in motion.frames().iter().enumerate() {
        let mut row = vec![motion.frame_phase(i)];
        row.extend_from_slice(&f.pose);
        row.extend_from_slice(&f.com);
        for e in &f.effectors {
            row.extend_from_slice(e);
        }
        if let (true, Some(k)) = (kinetics, f.kinetics) {
            row.extend_from_slice(&k.torques);
            row.extend_from_slice(&k.grf);
        }
        let mut line = String::new();
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                line.push(',');
            }
            write!(line, "{v}").expect("string write");
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn save_reference(path: &Path, motion: &ReferenceMotion) -> Result<(), Error> {
    std::fs::write(path, reference_to_csv(motion)).map_err(|e| Error::io(path, e))
}

fn parse_header(line: &str) -> Result<(f64, f64), Error> {
    let rest = line.strip_prefix(REFERENCE_HEADER).ok_or_else(|| {
        Error::Schema(format!("first line must start with '{REFERENCE_HEADER}'"))
    })?;
    let mut duration = None;
    let mut speed = None;
    for tok in rest.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::Schema(format!("malformed header field '{tok}'")))?;
        let v: f64 = v
            .parse()
            .map_err(|_| Error::Schema(format!("header field '{k}' is not a number")))?;
        match k {
            "cycle_duration" => duration = Some(v),
            "speed" => speed = Some(v),
            _ => return Err(Error::Schema(format!("unknown header field '{k}'"))),
        }
    }
    Ok((
        duration.ok_or_else(|| Error::Schema("header lacks cycle_duration".into()))?,
        speed.ok_or_else(|| Error::Schema("header lacks speed".into()))?,
    ))
}

pub fn reference_from_csv(text: &str) -> Result<ReferenceMotion, Error> {
    let (first, body) = text.split_once('\n').unwrap_or((text, ""));
    let (cycle_duration, speed) = parse_header(first.trim_end())?;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header row: {e}")))?
        .clone();
    let index_of = |name: &str| headers.iter().position(|h| h == name);

    let kin_cols = kinematic_columns();
    let mut kin_idx = Vec::with_capacity(kin_cols.len());
    for c in &kin_cols {
        kin_idx.push(index_of(c).ok_or_else(|| Error::Schema(format!("missing column '{c}'")))?);
    }
    let dyn_cols = kinetic_columns();
    let dyn_idx: Vec<Option<usize>> = dyn_cols.iter().map(|c| index_of(c)).collect();
    let has_kinetics = dyn_idx.iter().all(Option::is_some);
    if !has_kinetics && dyn_idx.iter().any(Option::is_some) {
        let missing = dyn_cols
            .iter()
            .zip(&dyn_idx)
            .find(|(_, i)| i.is_none())
            .map(|(c, _)| c.clone())
            .unwrap_or_default();
        return Err(Error::Schema(format!(
            "partial kinetics block: missing column '{missing}'"
        )));
    }

    let mut frames = Vec::new();
    let mut phases = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::Schema(format!("row {row}: {e}")))?;
        let cell = |idx: usize, name: &str| -> Result<f64, Error> {
            let raw = record
                .get(idx)
                .ok_or_else(|| Error::Schema(format!("row {row}: missing column '{name}'")))?;
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::Schema(format!("row {row}, column '{name}': '{raw}' is not a number")))?;
            if !v.is_finite() {
                return Err(Error::Schema(format!("row {row}, column '{name}': non-finite value")));
            }
            Ok(v)
        };
        let vals: Vec<f64> = kin_idx
            .iter()
            .zip(&kin_cols)
            .map(|(&i, c)| cell(i, c))
            .collect::<Result<_, _>>()?;
        phases.push(vals[0]);
        let mut f = ReferenceFrame {
            pose: [0.0; 9],
            com: [vals[10], vals[11]],
            effectors: [[0.0; 2]; N_EFFECTORS],
            kinetics: None,
        };
        f.pose.copy_from_slice(&vals[1..10]);
        for e in 0..N_EFFECTORS {
            f.effectors[e] = [vals[12 + 2 * e], vals[13 + 2 * e]];
        }
        if has_kinetics {
            let k: Vec<f64> = dyn_idx
                .iter()
                .zip(&dyn_cols)
                .map(|(i, c)| cell(i.expect("checked"), c))
                .collect::<Result<_, _>>()?;
            let mut torques = [0.0; BIPED_JOINTS];
            torques.copy_from_slice(&k[..BIPED_JOINTS]);
            f.kinetics = Some(FrameKinetics {
                torques,
                grf: [k[BIPED_JOINTS], k[BIPED_JOINTS + 1]],
            });
        }
        frames.push(f);
    }

    if frames.len() < 2 {
        return Err(Error::Schema(format!("only {} data rows", frames.len())));
    }
    let n = phases.len();
    for i in 1..n {
        if !(phases[i] > phases[i - 1]) {
            return Err(Error::Schema(format!(
                "row {}, column 'phase': phase must increase monotonically ({} after {})",
                i + 1,
                phases[i],
                phases[i - 1]
            )));
        }
    }
    for (i, &p) in phases.iter().enumerate() {
        let expected = i as f64 / (n - 1) as f64;
        if (p - expected).abs() > 1e-6 {
            return Err(Error::Schema(format!(
                "row {}, column 'phase': expected uniform phase {expected:.6}, found {p}",
                i + 1
            )));
        }
    }
    ReferenceMotion::new(frames, cycle_duration, speed)
}

pub fn load_reference(path: &Path) -> Result<ReferenceMotion, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    reference_from_csv(&text).map_err(|e| match e {
        Error::Schema(msg) => Error::Schema(format!("{}: {msg}", path.display())),
        other => other,
    })
}
