//! Hunt-Crossley compliant normal contact and regularized Coulomb friction
//! against a flat ground plane at z = 0.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ArticulatedModel, Kinematics, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactPoint {
    pub name: String,
    pub body: String,
    /// Location in the body frame [m].
    pub local_offset: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    /// k [N/m^p]
    pub stiffness: f64,
    /// p
    pub exponent: f64,
    /// alpha [s/m]
    pub dissipation: f64,
    /// Coulomb coefficient sigma.
    pub friction: f64,
    /// Friction regularization velocity [m/s].
    pub v_reg: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            stiffness: 1e6,
            exponent: 1.5,
            dissipation: 0.9,
            friction: 0.8,
            v_reg: 0.01,
        }
    }
}

impl ContactParams {
    pub fn is_valid(&self) -> bool {
        self.stiffness > 0.0
            && self.exponent >= 1.0
            && self.dissipation >= 0.0
            && self.friction >= 0.0
            && self.v_reg > 0.0
    }
}

/// Hunt-Crossley normal force for penetration `depth` >= 0 and penetration
/// rate `depth_rate` (positive when sinking): `k d^p (1 + 1.5 alpha d')`,
/// clamped at zero.
pub fn normal_force(depth: f64, depth_rate: f64, params: &ContactParams) -> f64 {
    if depth <= 0.0 {
        return 0.0;
    }
    let elastic = params.stiffness * depth.powf(params.exponent);
    (elastic * (1.0 + 1.5 * params.dissipation * depth_rate)).max(0.0)
}

/// Regularized friction opposing the tangential slip velocity.
pub fn friction_force(normal: f64, slip: f64, params: &ContactParams) -> f64 {
    -params.friction * normal * (slip / params.v_reg).tanh()
}

/// Contact force at one point, with the velocity sensitivities used for
/// implicit integration.
#[derive(Debug, Clone, PartialEq)]
pub struct PointContact {
    pub point: usize,
    pub segment: usize,
    pub position: Vec2,
    pub velocity: Vec2,
    /// World force on the body [N]: x tangential, y normal.
    pub force: Vec2,
    /// `-d f_t / d v_x` (>= 0).
    pub tangential_damping: f64,
    /// `-d f_n / d v_z` (>= 0).
    pub normal_damping: f64,
}

/// Evaluate ground contact at every point of `points`.
pub fn contact_forces(
    model: &ArticulatedModel,
    kin: &Kinematics,
    points: &[crate::contact::ContactPoint],
    params: &ContactParams,
) -> Vec<PointContact> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let segment = model.segment_index(&p.body).unwrap_or(0);
            let position = kin.point_position(segment, p.local_offset);
            let velocity = kin.point_velocity(segment, p.local_offset);
            let depth = (-position.y).max(0.0);
            let mut contact = PointContact {
                point: i,
                segment,
                position,
                velocity,
                force: Vec2::zeros(),
                tangential_damping: 0.0,
                normal_damping: 0.0,
            };
            if depth > 0.0 {
                let fn_ = normal_force(depth, -velocity.y, params);
                if fn_ > 0.0 {
                    contact.normal_damping =
                        params.stiffness * depth.powf(params.exponent) * 1.5 * params.dissipation;
                }
                let ft = friction_force(fn_, velocity.x, params);
                let sech = 1.0 / (velocity.x / params.v_reg).cosh();
                contact.tangential_damping = params.friction * fn_ * sech * sech / params.v_reg;
                contact.force = Vec2::new(ft, fn_);
            }
            contact
        })
        .collect()
}

/// Summed ground reaction force with its center of pressure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grf {
    pub tangential: f64,
    pub vertical: f64,
    /// Force-weighted mean contact x; `None` when nothing touches the ground.
    pub cop_x: Option<f64>,
}

impl Grf {
    pub const NONE: Grf = Grf {
        tangential: 0.0,
        vertical: 0.0,
        cop_x: None,
    };
}

/// Sum contact forces into tangential/vertical totals and a center of pressure.
pub fn grf_total<'a>(forces: impl IntoIterator<Item = (Vec2, Vec2)> + 'a) -> Grf {
    let mut tangential = 0.0;
    let mut vertical = 0.0;
    let mut moment = 0.0;
    for (position, force) in forces {
        tangential += force.x;
        vertical += force.y;
        moment += force.y * position.x;
    }
    let cop_x = (vertical > 0.0).then(|| moment / vertical);
    Grf {
        tangential,
        vertical,
        cop_x,
    }
}
