//! Articulated model description and anthropometric construction.

use serde::{Deserialize, Serialize};

use crate::contact::{ContactParams, ContactPoint};
use crate::mdp::ParamVector;
use crate::reference::SubjectSpec;

use super::DynamicsError;

/// Index of the floating base segment (pelvis with the head-arms-trunk lump).
pub const PELVIS: usize = 0;
/// Segment indices of the planar biped, left leg first.
pub const LEFT_THIGH: usize = 1;
pub const LEFT_SHANK: usize = 2;
pub const LEFT_FOOT: usize = 3;
pub const RIGHT_THIGH: usize = 4;
pub const RIGHT_SHANK: usize = 5;
pub const RIGHT_FOOT: usize = 6;

/// Generalized coordinates of the biped: base x, base z, base pitch, then six joints.
pub const BIPED_DOFS: usize = 9;
/// Actuated joints: hip, knee, ankle on each side.
pub const BIPED_JOINTS: usize = 6;

pub const JOINT_NAMES: [&str; BIPED_JOINTS] =
    ["hip_l", "knee_l", "ankle_l", "hip_r", "knee_r", "ankle_r"];

/// Body-mass fractions per side; the pelvis lump takes the remainder.
pub const THIGH_MASS_FRACTION: f64 = 0.100;
pub const SHANK_MASS_FRACTION: f64 = 0.0465;
pub const FOOT_MASS_FRACTION: f64 = 0.0145;
pub const PELVIS_MASS_FRACTION: f64 =
    1.0 - 2.0 * (THIGH_MASS_FRACTION + SHANK_MASS_FRACTION + FOOT_MASS_FRACTION);

/// Height fractions for nominal segment geometry.
pub const THIGH_HEIGHT_FRACTION: f64 = 0.245;
pub const SHANK_HEIGHT_FRACTION: f64 = 0.246;
pub const FOOT_HEIGHT_FRACTION: f64 = 0.152;
pub const ANKLE_HEIGHT_FRACTION: f64 = 0.039;
pub const TRUNK_HEIGHT_FRACTION: f64 = 0.470;
/// Trunk lump COM above the hip, as a fraction of height.
pub const TRUNK_COM_HEIGHT_FRACTION: f64 = 0.18;
/// Proximal COM location of thigh and shank, as a fraction of segment length.
pub const LIMB_COM_FRACTION: f64 = 0.433;
/// Heel sits this fraction of foot length behind the ankle; the toe takes the rest.
pub const HEEL_FRACTION: f64 = 0.25;

pub const DEFAULT_KP: f64 = 300.0;
pub const DEFAULT_KD: f64 = 30.0;
pub const DEFAULT_TORQUE_LIMIT: f64 = 150.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub name: String,
    /// [kg]
    pub mass: f64,
    /// [m]
    pub length: f64,
    /// COM location in the segment frame [m].
    pub com_offset: [f64; 2],
    /// Rotational inertia about the COM [kg m^2].
    pub inertia: f64,
}

/// A revolute joint driving segment `index + 1` relative to `parent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    pub parent: usize,
    /// Joint location in the parent frame [m].
    pub anchor: [f64; 2],
    /// Viscous joint damping [N m s/rad].
    pub damping: f64,
    /// Actuator saturation [N m].
    pub torque_limit: f64,
    pub kp: f64,
    pub kd: f64,
    /// Range of motion [rad], enforced by a penalty spring-damper.
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Base {
    /// Unactuated x, z and pitch coordinates.
    Floating,
    /// Root welded to the world at the given pose.
    Fixed { x: f64, z: f64, pitch: f64 },
}

/// Divergence detector thresholds on |q| and |qdot|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupBounds {
    pub position: f64,
    pub velocity: f64,
}

impl Default for BlowupBounds {
    fn default() -> Self {
        Self {
            position: 1e3,
            velocity: 1e3,
        }
    }
}

/// The physical plant: a planar tree of rigid segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticulatedModel {
    pub segments: Vec<SegmentSpec>,
    /// `joints[j]` connects `joints[j].parent` to `segments[j + 1]`.
    pub joints: Vec<JointSpec>,
    pub base: Base,
    pub gravity: [f64; 2],
    pub limit_stiffness: f64,
    pub limit_damping: f64,
    #[serde(default)]
    pub contact_points: Vec<ContactPoint>,
    #[serde(default)]
    pub contact: ContactParams,
    #[serde(default)]
    pub blowup: BlowupBounds,
}

impl ArticulatedModel {
    /// A model with a single segment and no joints.
    pub fn single_segment(segment: SegmentSpec, base: Base) -> Self {
        Self {
            segments: vec![segment],
            joints: Vec::new(),
            base,
            gravity: [0.0, -9.81],
            limit_stiffness: 0.0,
            limit_damping: 0.0,
            contact_points: Vec::new(),
            contact: ContactParams::default(),
            blowup: BlowupBounds::default(),
        }
    }

    /// Number of base coordinates (3 for a floating base, 0 when fixed).
    pub fn base_dofs(&self) -> usize {
        match self.base {
            Base::Floating => 3,
            Base::Fixed { .. } => 0,
        }
    }

    pub fn n_q(&self) -> usize {
        self.base_dofs() + self.joints.len()
    }

    /// Coordinate index of joint `j`.
    pub fn joint_coord(&self, j: usize) -> usize {
        self.base_dofs() + j
    }

    pub fn total_mass(&self) -> f64 {
        self.segments.iter().map(|s| s.mass).sum()
    }

    pub fn segment_index(&self, name: &str) -> Option<usize> {
        self.segments.iter().position(|s| s.name == name)
    }

    /// Parent segment of segment `s` (`None` for the root).
    pub fn parent(&self, s: usize) -> Option<usize> {
        if s == 0 {
            None
        } else {
            Some(self.joints[s - 1].parent)
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.segments.is_empty() {
            return Err(DynamicsError::InvalidModel("model has no segments".into()));
        }
        if self.joints.len() + 1 != self.segments.len() {
            return Err(DynamicsError::InvalidModel(format!(
                "{} segments need {} joints, found {}",
                self.segments.len(),
                self.segments.len() - 1,
                self.joints.len()
            )));
        }
        for s in &self.segments {
            if !(s.mass > 0.0 && s.length > 0.0 && s.inertia > 0.0) {
                return Err(DynamicsError::InvalidModel(format!(
                    "segment '{}' needs positive mass, length and inertia",
                    s.name
                )));
            }
        }
        for (j, joint) in self.joints.iter().enumerate() {
            if joint.parent > j {
                return Err(DynamicsError::InvalidModel(format!(
                    "joint '{}' parent {} must precede child {}",
                    joint.name,
                    joint.parent,
                    j + 1
                )));
            }
            if joint.damping < 0.0 || joint.torque_limit < 0.0 || joint.lower > joint.upper {
                return Err(DynamicsError::InvalidModel(format!(
                    "joint '{}' has negative damping/limit or inverted range",
                    joint.name
                )));
            }
        }
        for p in &self.contact_points {
            if self.segment_index(&p.body).is_none() {
                return Err(DynamicsError::InvalidModel(format!(
                    "contact point on unknown body '{}'",
                    p.body
                )));
            }
        }
        Ok(())
    }

    /// Standing hip height in the zero pose: lowest contact point touching z = 0.
    pub fn standing_pelvis_height(&self) -> f64 {
        let zero = super::DynamicsState::zeros(self.n_q());
        let kin = super::Kinematics::compute(self, &zero);
        let lowest = self
            .contact_points
            .iter()
            .map(|p| {
                let s = self.segment_index(&p.body).unwrap_or(0);
                kin.point_position(s, p.local_offset).y
            })
            .fold(f64::INFINITY, f64::min);
        if lowest.is_finite() {
            kin.origin[0].y - lowest
        } else {
            0.0
        }
    }
}

/// Construct the sagittal biped for a subject with identified quantities `params`.
///
/// Masses follow fixed fractions of body mass; inertias are uniform rods of the
/// segment length. Joint anchors sit at the distal end of the parent segment,
/// shifted by the identified joint-axis offsets.
pub fn build_model(
    subject: &SubjectSpec,
    params: &ParamVector,
) -> Result<ArticulatedModel, DynamicsError> {
    if !(subject.mass > 0.0 && subject.height > 0.0) {
        return Err(DynamicsError::InvalidModel(format!(
            "subject {} needs positive mass and height",
            subject.id
        )));
    }
    let lengths = [params.foot_length, params.shank_length, params.thigh_length];
    if lengths.iter().any(|l| !(*l > 0.0)) {
        return Err(DynamicsError::InvalidModel(format!(
            "segment lengths must be positive, got foot {} shank {} thigh {}",
            params.foot_length, params.shank_length, params.thigh_length
        )));
    }
    if params.damping.iter().any(|b| *b < 0.0) {
        return Err(DynamicsError::InvalidModel("joint damping must be >= 0".into()));
    }

    let m = subject.mass;
    let h = subject.height_m();
    let rod = |mass: f64, len: f64| mass * len * len / 12.0;

    let trunk_len = TRUNK_HEIGHT_FRACTION * h;
    let ankle_h = ANKLE_HEIGHT_FRACTION * h;
    let pelvis = SegmentSpec {
        name: "pelvis".into(),
        mass: PELVIS_MASS_FRACTION * m,
        length: trunk_len,
        com_offset: [0.0, TRUNK_COM_HEIGHT_FRACTION * h],
        inertia: rod(PELVIS_MASS_FRACTION * m, trunk_len),
    };

    let mut segments = vec![pelvis];
    let mut joints = Vec::with_capacity(BIPED_JOINTS);
    for side in ["l", "r"] {
        let base = segments.len();
        let thigh_mass = THIGH_MASS_FRACTION * m;
        let shank_mass = SHANK_MASS_FRACTION * m;
        let foot_mass = FOOT_MASS_FRACTION * m;
        segments.push(SegmentSpec {
            name: format!("thigh_{side}"),
            mass: thigh_mass,
            length: params.thigh_length,
            com_offset: [0.0, -LIMB_COM_FRACTION * params.thigh_length],
            inertia: rod(thigh_mass, params.thigh_length),
        });
        segments.push(SegmentSpec {
            name: format!("shank_{side}"),
            mass: shank_mass,
            length: params.shank_length,
            com_offset: [0.0, -LIMB_COM_FRACTION * params.shank_length],
            inertia: rod(shank_mass, params.shank_length),
        });
        segments.push(SegmentSpec {
            name: format!("foot_{side}"),
            mass: foot_mass,
            length: params.foot_length,
            com_offset: [(0.5 - HEEL_FRACTION) * params.foot_length, -0.5 * ankle_h],
            inertia: rod(foot_mass, params.foot_length),
        });

        let joint = |name: &str, parent: usize, anchor: [f64; 2], damping: f64, lo, hi| JointSpec {
            name: format!("{name}_{side}"),
            parent,
            anchor,
            damping,
            torque_limit: DEFAULT_TORQUE_LIMIT,
            kp: DEFAULT_KP,
            kd: DEFAULT_KD,
            lower: lo,
            upper: hi,
        };
        joints.push(joint("hip", PELVIS, params.hip_offset, params.damping[0], -1.6, 1.6));
        joints.push(joint(
            "knee",
            base,
            [params.knee_offset[0], -params.thigh_length + params.knee_offset[1]],
            params.damping[1],
            -2.6,
            0.0,
        ));
        joints.push(joint(
            "ankle",
            base + 1,
            [params.ankle_offset[0], -params.shank_length + params.ankle_offset[1]],
            params.damping[2],
            -0.9,
            0.9,
        ));
    }

    let mut contact_points = Vec::with_capacity(4);
    for side in ["l", "r"] {
        contact_points.push(ContactPoint {
            name: format!("heel_{side}"),
            body: format!("foot_{side}"),
            local_offset: [-HEEL_FRACTION * params.foot_length, -ankle_h],
        });
        contact_points.push(ContactPoint {
            name: format!("toe_{side}"),
            body: format!("foot_{side}"),
            local_offset: [(1.0 - HEEL_FRACTION) * params.foot_length, -ankle_h],
        });
    }

    let model = ArticulatedModel {
        segments,
        joints,
        base: Base::Floating,
        gravity: [0.0, -9.81],
        limit_stiffness: 1000.0,
        limit_damping: 10.0,
        contact_points,
        contact: ContactParams {
            friction: params.friction,
            ..ContactParams::default()
        },
        blowup: BlowupBounds::default(),
    };
    model.validate()?;
    Ok(model)
}
