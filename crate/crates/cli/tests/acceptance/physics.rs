//! Rigid-body and contact property checks.

use anyhow::Result;
use biogait::contact::{contact_forces, ContactPoint};
use biogait::dynamics::{
    build_model, linear_momentum, mass_matrix, mechanical_energy, step, ArticulatedModel, Base, DynamicsState, JointSpec,
    Kinematics, SegmentSpec,
};
use biogait::mdp::ParamVector;
use biogait::reference::SubjectSpec;
use biogait::world::World;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Checks;

fn rod(name: &str, mass: f64, length: f64) -> SegmentSpec {
    SegmentSpec {
        name: name.into(),
        mass,
        length,
        com_offset: [0.0, -0.5 * length],
        inertia: mass * length * length / 12.0,
    }
}

/// Undamped chain of rods hanging from a fixed pivot at the origin.
fn pendulum(links: &[(f64, f64)]) -> ArticulatedModel {
    let root = Base::Fixed {
        x: 0.0,
        z: 0.0,
        pitch: 0.0,
    };
    let mut model = ArticulatedModel::single_segment(rod("root", 1.0, 0.1), root);
    let mut anchor = [0.0, 0.0];
    for (i, &(m, l)) in links.iter().enumerate() {
        model.segments.push(rod(&format!("link{i}"), m, l));
        model.joints.push(JointSpec {
            name: format!("j{i}"),
            parent: i,
            anchor,
            damping: 0.0,
            torque_limit: 1e9,
            kp: 0.0,
            kd: 0.0,
            lower: -1e9,
            upper: 1e9,
        });
        anchor = [0.0, -l];
    }
    model
}

fn subject() -> Result<SubjectSpec> {
    Ok(SubjectSpec::from_roster(1)?)
}

fn biped() -> Result<ArticulatedModel> {
    let s = subject()?;
    Ok(build_model(&s, &ParamVector::nominal(&s))?)
}

fn random_state(n: usize, rng: &mut ChaCha8Rng, speed: f64) -> DynamicsState {
    let mut st = DynamicsState::zeros(n);
    for k in 0..n {
        st.q[k] = rng.random_range(-1.5..1.5);
        st.qdot[k] = speed * rng.random_range(-1.0..1.0);
    }
    st
}

fn energy_drift(links: &[(f64, f64)], q0: &[f64]) -> Result<f64> {
    let model = pendulum(links);
    let n = links.len();
    let rest = mechanical_energy(&model, &DynamicsState::zeros(n)).1;
    let energy = |st: &DynamicsState| {
        let (k, p) = mechanical_energy(&model, st);
        k + p - rest
    };
    let mut st = DynamicsState::zeros(n);
    for (k, q) in q0.iter().enumerate() {
        st.q[k] = *q;
    }
    let e0 = energy(&st);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        st = step(&model, &st, &DVector::zeros(n), &[], 1e-3)?;
        worst = worst.max((energy(&st) - e0).abs() / e0);
    }
    Ok(worst)
}

/// Closed-form double pendulum (second angle relative to the first), RK4.
fn double_pendulum_rk4(p: [(f64, f64); 2], q0: [f64; 2], dt: f64, steps: usize) -> [f64; 4] {
    let (m1, l1) = p[0];
    let (m2, l2) = p[1];
    let (c1, c2) = (0.5 * l1, 0.5 * l2);
    let (i1, i2) = (m1 * l1 * l1 / 12.0, m2 * l2 * l2 / 12.0);
    let g = 9.81;
    let f = |s: [f64; 4]| -> [f64; 4] {
        let (t1, t2, w1, w2) = (s[0], s[1], s[2], s[3]);
        let a = m1 * c1 * c1 + i1 + m2 * (l1 * l1 + c2 * c2 + 2.0 * l1 * c2 * t2.cos()) + i2;
        let b = m2 * (c2 * c2 + l1 * c2 * t2.cos()) + i2;
        let d = m2 * c2 * c2 + i2;
        let h = m2 * l1 * c2 * t2.sin();
        let g1 = m1 * g * c1 * t1.sin() + m2 * g * (l1 * t1.sin() + c2 * (t1 + t2).sin());
        let g2 = m2 * g * c2 * (t1 + t2).sin();
        let r1 = h * (2.0 * w1 * w2 + w2 * w2) - g1;
        let r2 = -h * w1 * w1 - g2;
        let det = a * d - b * b;
        [w1, w2, (d * r1 - b * r2) / det, (a * r2 - b * r1) / det]
    };
    let add = |s: [f64; 4], k: [f64; 4], h: f64| -> [f64; 4] { std::array::from_fn(|i| s[i] + h * k[i]) };
    let mut s = [q0[0], q0[1], 0.0, 0.0];
    for _ in 0..steps {
        let k1 = f(s);
        let k2 = f(add(s, k1, 0.5 * dt));
        let k3 = f(add(s, k2, 0.5 * dt));
        let k4 = f(add(s, k3, dt));
        s = std::array::from_fn(|i| s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    s
}

pub fn rigid_body(c: &mut Checks) -> Result<()> {
    let model = biped()?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut asymmetry, mut min_eig, mut cholesky_failures): (f64, f64, usize) = (0.0, f64::INFINITY, 0);
    for _ in 0..1000 {
        let st = random_state(model.n_q(), &mut rng, 0.0);
        let m = mass_matrix(&model, &st.q);
        asymmetry = asymmetry.max((&m - m.transpose()).abs().max() / m.abs().max());
        min_eig = min_eig.min(m.clone().symmetric_eigen().eigenvalues.min());
        if m.cholesky().is_none() {
            cholesky_failures += 1;
        }
    }
    c.at_most("mass_matrix_relative_asymmetry", asymmetry, 1e-12);
    c.above("mass_matrix_min_eigenvalue", min_eig, 0.0);
    c.at_most("mass_matrix_cholesky_failures", cholesky_failures as f64, 0.0);

    c.below("energy_drift_pendulum", energy_drift(&[(1.0, 0.5)], &[1.2])?, 0.02);
    c.below("energy_drift_double_pendulum", energy_drift(&[(1.0, 0.5), (0.7, 0.4)], &[0.5, 0.3])?, 0.02);

    let mut free = biped()?;
    free.gravity = [0.0, 0.0];
    let mut st = random_state(free.n_q(), &mut rng, 2.0);
    st.q[1] = 5.0;
    let mut p = linear_momentum(&free, &st);
    let mut worst: f64 = 0.0;
    for _ in 0..2000 {
        st = step(&free, &st, &DVector::zeros(free.n_q()), &[], 1e-3)?;
        let next = linear_momentum(&free, &st);
        worst = worst.max((next - p).norm());
        p = next;
    }
    c.below("momentum_change_per_step", worst, 1e-8);

    // The step is first order, so it runs finer than the RK4 reference.
    let links = [(1.0, 0.5), (0.7, 0.4)];
    let q0 = [0.8, -0.5];
    let chain = pendulum(&links);
    let mut st = DynamicsState::zeros(2);
    st.q[0] = q0[0];
    st.q[1] = q0[1];
    for _ in 0..1_000_000 {
        st = step(&chain, &st, &DVector::zeros(2), &[], 1e-6)?;
    }
    let oracle = double_pendulum_rk4(links, q0, 1e-5, 100_000);
    let deviation = (0..2)
        .map(|k| (st.q[k] - oracle[k]).abs().max((st.qdot[k] - oracle[k + 2]).abs()))
        .fold(0.0, f64::max);
    c.below("double_pendulum_deviation", deviation, 1e-4);
    Ok(())
}

fn box_model(mass: f64) -> ArticulatedModel {
    let mut model = ArticulatedModel::single_segment(
        SegmentSpec {
            name: "box".into(),
            mass,
            length: 0.2,
            com_offset: [0.0, 0.0],
            inertia: mass * (0.2f64.powi(2) + 0.1f64.powi(2)) / 12.0,
        },
        Base::Floating,
    );
    model.contact_points = [-0.1, 0.1]
        .iter()
        .map(|x| ContactPoint {
            name: format!("corner{x}"),
            body: "box".into(),
            local_offset: [*x, -0.05],
        })
        .collect();
    model
}

/// Worst violations of `f_n >= 0` and `|f_t| <= sigma f_n` at one state.
fn cone(model: &ArticulatedModel, st: &DynamicsState, worst: &mut (f64, f64)) {
    let kin = Kinematics::compute(model, st);
    for f in contact_forces(model, &kin, &model.contact_points, &model.contact) {
        worst.0 = worst.0.max(-f.force.y);
        worst.1 = worst.1.max(f.force.x.abs() - model.contact.friction * f.force.y);
    }
}

pub fn contact(c: &mut Checks) -> Result<()> {
    let mut worst = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let boxed = box_model(5.0);
    for _ in 0..20_000 {
        let mut st = DynamicsState::zeros(3);
        st.q[1] = rng.random_range(0.03..0.07);
        st.q[2] = rng.random_range(-0.3..0.3);
        for k in 0..3 {
            st.qdot[k] = rng.random_range(-3.0..3.0);
        }
        cone(&boxed, &st, &mut worst);
    }

    let s = subject()?;
    let mut model = biped()?;
    // the default servos are too soft to balance a rigid 1 m inverted pendulum
    for j in model.joints.iter_mut() {
        j.kp = 5000.0;
        j.kd = 500.0;
        j.torque_limit = 1e4;
    }
    let world = World::new(&model);
    let mut st = DynamicsState::zeros(model.n_q());
    st.q[1] = model.standing_pelvis_height() + 0.002;
    let mut vertical = 0.0;
    for _ in 0..2000 {
        cone(&model, &st, &mut worst);
        let (next, log) = world.substep(&st, Some(&[0.0; 6]), &[], 1e-3)?;
        vertical = log.contacts.iter().map(|f| f.force.y).sum::<f64>();
        st = next;
    }
    c.at_most("standing_grf_error_fraction", (vertical - s.weight()).abs() / s.weight(), 0.01);

    let world = World::new(&boxed);
    let mut st = DynamicsState::zeros(3);
    st.q[1] = 0.3;
    st.q[2] = 0.2;
    st.qdot[0] = 0.5;
    let energy = |st: &DynamicsState| {
        let (k, p) = mechanical_energy(&boxed, st);
        k + p
    };
    let e0 = energy(&st);
    let mut gain = f64::NEG_INFINITY;
    for _ in 0..2000 {
        cone(&boxed, &st, &mut worst);
        st = world.substep(&st, None, &[], 1e-3)?.0;
        gain = gain.max(energy(&st) - e0);
    }
    c.at_most("drop_max_energy_gain_j", gain, 1e-3);
    c.below("drop_net_energy_change_j", energy(&st) - e0, 0.0);
    c.at_most("negative_normal_force_n", worst.0.max(0.0), 0.0);
    c.at_most("friction_cone_excess_n", worst.1.max(0.0), 0.0);
    Ok(())
}
