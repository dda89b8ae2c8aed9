use nalgebra::{DMatrix, Vector2};

use super::model::{ArticulatedModel, Base};
use super::DynamicsState;

pub type Vec2 = Vector2<f64>;

/// Rotate `r` counter-clockwise (x toward z) by `angle`.
#[inline]
pub fn rotate(angle: f64, r: Vec2) -> Vec2 {
    let (s, c) = angle.sin_cos();
    Vec2::new(c * r.x - s * r.y, s * r.x + c * r.y)
}

/// Derivative of `rotate(theta, r)` with respect to theta, for a world-frame arm `r`.
#[inline]
pub fn perp(r: Vec2) -> Vec2 {
    Vec2::new(-r.y, r.x)
}

/// Planar cross product `a x b`.
#[inline]
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// World-frame positions, velocities and velocity-product accelerations of every segment.
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub angle: Vec<f64>,
    pub omega: Vec<f64>,
    /// Segment frame origin (the joint location) in world coordinates.
    pub origin: Vec<Vec2>,
    pub origin_vel: Vec<Vec2>,
    pub com: Vec<Vec2>,
    pub com_vel: Vec<Vec2>,
    /// Acceleration of the origin / COM when all generalized accelerations are zero.
    pub origin_bias: Vec<Vec2>,
    pub com_bias: Vec<Vec2>,
    base_dofs: usize,
    parents: Vec<usize>,
}

impl Kinematics {
    pub fn compute(model: &ArticulatedModel, state: &DynamicsState) -> Self {
        let n = model.segments.len();
        let q = &state.q;
        let qd = &state.qdot;
        let mut kin = Kinematics {
            angle: vec![0.0; n],
            omega: vec![0.0; n],
            origin: vec![Vec2::zeros(); n],
            origin_vel: vec![Vec2::zeros(); n],
            com: vec![Vec2::zeros(); n],
            com_vel: vec![Vec2::zeros(); n],
            origin_bias: vec![Vec2::zeros(); n],
            com_bias: vec![Vec2::zeros(); n],
            base_dofs: model.base_dofs(),
            parents: (0..n).map(|s| model.parent(s).unwrap_or(0)).collect(),
        };

        match model.base {
            Base::Floating => {
                kin.origin[0] = Vec2::new(q[0], q[1]);
                kin.origin_vel[0] = Vec2::new(qd[0], qd[1]);
                kin.angle[0] = q[2];
                kin.omega[0] = qd[2];
            }
            Base::Fixed { x, z, pitch } => {
                kin.origin[0] = Vec2::new(x, z);
                kin.angle[0] = pitch;
            }
        }

        for s in 0..n {
            if s > 0 {
                let joint = &model.joints[s - 1];
                let p = joint.parent;
                let coord = kin.base_dofs + s - 1;
                let arm = rotate(kin.angle[p], Vec2::new(joint.anchor[0], joint.anchor[1]));
                kin.angle[s] = kin.angle[p] + q[coord];
                kin.omega[s] = kin.omega[p] + qd[coord];
                kin.origin[s] = kin.origin[p] + arm;
                kin.origin_vel[s] = kin.origin_vel[p] + kin.omega[p] * perp(arm);
                kin.origin_bias[s] = kin.origin_bias[p] - kin.omega[p] * kin.omega[p] * arm;
            }
            let c = &model.segments[s].com_offset;
            let arm = rotate(kin.angle[s], Vec2::new(c[0], c[1]));
            kin.com[s] = kin.origin[s] + arm;
            kin.com_vel[s] = kin.origin_vel[s] + kin.omega[s] * perp(arm);
            kin.com_bias[s] = kin.origin_bias[s] - kin.omega[s] * kin.omega[s] * arm;
        }
        kin
    }

    /// World position of a point fixed in segment `s`.
    pub fn point_position(&self, s: usize, local: [f64; 2]) -> Vec2 {
        self.origin[s] + rotate(self.angle[s], Vec2::new(local[0], local[1]))
    }

    pub fn point_velocity(&self, s: usize, local: [f64; 2]) -> Vec2 {
        let arm = rotate(self.angle[s], Vec2::new(local[0], local[1]));
        self.origin_vel[s] + self.omega[s] * perp(arm)
    }

    /// Calls `f(coord, column)` for every nonzero column of the Jacobian of a
    /// world point rigidly attached to segment `s`.
    pub fn for_each_column(&self, s: usize, point: Vec2, mut f: impl FnMut(usize, Vec2)) {
        let mut seg = s;
        loop {
            if seg == 0 {
                if self.base_dofs == 3 {
                    f(0, Vec2::new(1.0, 0.0));
                    f(1, Vec2::new(0.0, 1.0));
                    f(2, perp(point - self.origin[0]));
                }
                break;
            }
            f(self.base_dofs + seg - 1, perp(point - self.origin[seg]));
            seg = self.parents[seg];
        }
    }

    /// Coordinates that rotate segment `s` (its angular Jacobian has ones there).
    pub fn for_each_rotation(&self, s: usize, mut f: impl FnMut(usize)) {
        let mut seg = s;
        loop {
            if seg == 0 {
                if self.base_dofs == 3 {
                    f(2);
                }
                break;
            }
            f(self.base_dofs + seg - 1);
            seg = self.parents[seg];
        }
    }

    /// Dense 2 x n_q Jacobian of a point attached to segment `s`.
    pub fn point_jacobian(&self, s: usize, point: Vec2, n_q: usize) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(2, n_q);
        self.for_each_column(s, point, |k, col| {
            jac[(0, k)] = col.x;
            jac[(1, k)] = col.y;
        });
        jac
    }
}
