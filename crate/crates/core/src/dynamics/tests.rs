use approx::assert_relative_eq;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::contact::ContactParams;
use crate::mdp::ParamVector;
use crate::reference::SubjectSpec;

fn rod(name: &str, mass: f64, length: f64) -> SegmentSpec {
    SegmentSpec {
        name: name.into(),
        mass,
        length,
        com_offset: [0.0, -0.5 * length],
        inertia: mass * length * length / 12.0,
    }
}

fn hinge(name: &str, parent: usize, anchor: [f64; 2], damping: f64) -> JointSpec {
    JointSpec {
        name: name.into(),
        parent,
        anchor,
        damping,
        torque_limit: 1e9,
        kp: 0.0,
        kd: 0.0,
        lower: -1e9,
        upper: 1e9,
    }
}

/// Fixed pivot at the origin with a chain of `links` hanging rods.
pub(crate) fn pendulum_chain(links: &[(f64, f64)], damping: f64) -> ArticulatedModel {
    let mut model = ArticulatedModel::single_segment(
        rod("root", 1.0, 0.1),
        Base::Fixed {
            x: 0.0,
            z: 0.0,
            pitch: 0.0,
        },
    );
    let mut anchor = [0.0, 0.0];
    for (i, &(m, l)) in links.iter().enumerate() {
        model.segments.push(rod(&format!("link{i}"), m, l));
        model.joints.push(hinge(&format!("j{i}"), i, anchor, damping));
        anchor = [0.0, -l];
    }
    model
}

fn subject1() -> SubjectSpec {
    SubjectSpec::from_roster(1).unwrap()
}

fn biped() -> ArticulatedModel {
    let s = subject1();
    build_model(&s, &ParamVector::nominal(&s)).unwrap()
}

fn random_state(model: &ArticulatedModel, rng: &mut ChaCha8Rng, speed: f64) -> DynamicsState {
    let n = model.n_q();
    let mut st = DynamicsState::zeros(n);
    for k in 0..n {
        st.q[k] = rng.random_range(-1.5..1.5);
        st.qdot[k] = speed * rng.random_range(-1.0..1.0);
    }
    st
}

#[test]
fn subject_one_total_mass() {
    assert_relative_eq!(biped().total_mass(), 74.0, max_relative = 1e-12);
    assert_eq!(biped().n_q(), 9);
    assert_eq!(biped().segments.len(), 7);
}

#[test]
fn unit_length_scaling_is_identity() {
    let s = subject1();
    let nominal = ParamVector::nominal(&s);
    let mut scaled = nominal;
    scaled.foot_length *= 1.0;
    scaled.shank_length *= 1.0;
    scaled.thigh_length *= 1.0;
    assert_eq!(build_model(&s, &nominal).unwrap(), build_model(&s, &scaled).unwrap());
}

#[test]
fn thigh_length_sets_hip_to_knee_distance() {
    let s = subject1();
    let mut p = ParamVector::nominal(&s);
    p.thigh_length = 0.45;
    let model = build_model(&s, &p).unwrap();
    let kin = Kinematics::compute(&model, &DynamicsState::zeros(9));
    let d = (kin.origin[LEFT_SHANK] - kin.origin[LEFT_THIGH]).norm();
    assert_relative_eq!(d, 0.45, epsilon = 1e-12);
}

#[test]
fn rejects_non_positive_lengths() {
    let s = subject1();
    let mut p = ParamVector::nominal(&s);
    p.shank_length = 0.0;
    assert!(matches!(build_model(&s, &p), Err(DynamicsError::InvalidModel(_))));
}

#[test]
fn free_segment_mass_matrix_is_diagonal() {
    let seg = rod("box", 3.0, 0.4);
    let model = ArticulatedModel::single_segment(seg.clone(), Base::Floating);
    let m = mass_matrix(&model, &DVector::from_vec(vec![0.3, -1.0, 0.7]));
    // the COM is off the frame origin, so compare in COM coordinates:
    // M = J^T diag(m, m, I) J with J the origin-to-COM map
    let kin = Kinematics::compute(&model, &DynamicsState {
        q: DVector::from_vec(vec![0.3, -1.0, 0.7]),
        qdot: DVector::zeros(3),
        time: 0.0,
    });
    let r = kin.com[0] - kin.origin[0];
    let expected_rot = seg.inertia + seg.mass * r.norm_squared();
    assert_relative_eq!(m[(0, 0)], 3.0, epsilon = 1e-12);
    assert_relative_eq!(m[(1, 1)], 3.0, epsilon = 1e-12);
    assert_relative_eq!(m[(0, 1)], 0.0, epsilon = 1e-12);
    assert_relative_eq!(m[(2, 2)], expected_rot, epsilon = 1e-12);

    let centered = ArticulatedModel::single_segment(
        SegmentSpec {
            com_offset: [0.0, 0.0],
            ..seg.clone()
        },
        Base::Floating,
    );
    let m = mass_matrix(&centered, &DVector::from_vec(vec![0.3, -1.0, 0.7]));
    let expected = nalgebra::DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 3.0, seg.inertia]));
    assert!((m - expected).abs().max() < 1e-12);
}

#[test]
fn mass_matrix_symmetric_positive_definite() {
    let model = biped();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let st = random_state(&model, &mut rng, 0.0);
        let m = mass_matrix(&model, &st.q);
        assert!((&m - m.transpose()).abs().max() < 1e-10);
        assert!(m.cholesky().is_some());
    }
}

#[test]
fn kinetic_energy_matches_segment_sum() {
    let model = biped();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let st = random_state(&model, &mut rng, 2.0);
        let (ke, _) = mechanical_energy(&model, &st);
        let kin = Kinematics::compute(&model, &st);
        let oracle: f64 = model
            .segments
            .iter()
            .enumerate()
            .map(|(s, seg)| 0.5 * seg.mass * kin.com_vel[s].norm_squared() + 0.5 * seg.inertia * kin.omega[s].powi(2))
            .sum();
        assert_relative_eq!(ke, oracle, max_relative = 1e-12);
    }
}

#[test]
fn hanging_pendulum_is_in_equilibrium() {
    let model = pendulum_chain(&[(1.0, 0.5), (0.7, 0.4)], 0.0);
    let st = DynamicsState::zeros(2);
    let qdd = forward_dynamics(&model, &st, &DVector::zeros(2), &[]).unwrap();
    assert!(qdd.abs().max() < 1e-12);
}

#[test]
fn free_segment_falls_with_gravity() {
    let model = ArticulatedModel::single_segment(rod("box", 2.0, 0.3), Base::Floating);
    let mut st = DynamicsState::zeros(3);
    st.q[2] = 0.4;
    st.qdot[2] = 1.5;
    let qdd = forward_dynamics(&model, &st, &DVector::zeros(3), &[]).unwrap();
    let kin = Kinematics::compute(&model, &st);
    let mut acc = kin.com_bias[0];
    kin.for_each_column(0, kin.com[0], |k, c| acc += c * qdd[k]);
    assert_relative_eq!(acc.x, 0.0, epsilon = 1e-12);
    assert_relative_eq!(acc.y, -9.81, epsilon = 1e-12);
}

/// Closed-form double pendulum with relative second angle, integrated by RK4.
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
    let mut s = [q0[0], q0[1], 0.0, 0.0];
    for _ in 0..steps {
        let add = |s: [f64; 4], k: [f64; 4], h: f64| std::array::from_fn::<f64, 4, _>(|i| s[i] + h * k[i]);
        let k1 = f(s);
        let k2 = f(add(s, k1, 0.5 * dt));
        let k3 = f(add(s, k2, 0.5 * dt));
        let k4 = f(add(s, k3, dt));
        s = std::array::from_fn(|i| s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    s
}

pub(crate) fn double_pendulum_error(dt: f64) -> f64 {
    let links = [(1.0, 0.5), (0.7, 0.4)];
    let q0 = [0.8, -0.5];
    let model = pendulum_chain(&links, 0.0);
    let mut st = DynamicsState::zeros(2);
    st.q[0] = q0[0];
    st.q[1] = q0[1];
    let steps = (1.0 / dt).round() as usize;
    for _ in 0..steps {
        st = step(&model, &st, &DVector::zeros(2), &[], dt).unwrap();
    }
    let oracle = double_pendulum_rk4(links, q0, 1e-5, 100_000);
    (0..2)
        .map(|k| (st.q[k] - oracle[k]).abs().max((st.qdot[k] - oracle[k + 2]).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn double_pendulum_matches_reference_integrator() {
    // the step is first order, so it runs finer than the RK4 reference
    let err = double_pendulum_error(1e-6);
    assert!(err < 1e-4, "max deviation {err}");
}

#[test]
fn zero_forces_leave_state_unchanged() {
    let mut model = biped();
    model.gravity = [0.0, 0.0];
    let mut st = DynamicsState::zeros(9);
    st.q[1] = 1.0;
    st.q[4] = -0.3;
    let next = step(&model, &st, &DVector::zeros(9), &[], 1e-3).unwrap();
    assert_eq!(next.q, st.q);
    assert_eq!(next.qdot, st.qdot);
    assert_relative_eq!(next.time, 1e-3);
}

fn pendulum_energy(model: &ArticulatedModel, st: &DynamicsState) -> f64 {
    let (k, p) = mechanical_energy(model, st);
    let (_, p0) = mechanical_energy(model, &DynamicsState::zeros(model.n_q()));
    k + p - p0
}

pub(crate) fn passive_energy_drift(links: &[(f64, f64)], q0: &[f64], dt: f64, duration: f64) -> f64 {
    let model = pendulum_chain(links, 0.0);
    let mut st = DynamicsState::zeros(links.len());
    for (k, q) in q0.iter().enumerate() {
        st.q[k] = *q;
    }
    let e0 = pendulum_energy(&model, &st);
    let mut worst: f64 = 0.0;
    for _ in 0..(duration / dt).round() as usize {
        st = step(&model, &st, &DVector::zeros(links.len()), &[], dt).unwrap();
        worst = worst.max((pendulum_energy(&model, &st) - e0).abs() / e0);
    }
    worst
}

#[test]
fn undamped_pendulum_conserves_energy() {
    let drift = passive_energy_drift(&[(1.0, 0.5)], &[1.2], 1e-3, 10.0);
    assert!(drift < 0.02, "drift {drift}");
    let drift = passive_energy_drift(&[(1.0, 0.5), (0.7, 0.4)], &[0.5, 0.3], 1e-3, 10.0);
    assert!(drift < 0.02, "double pendulum drift {drift}");
}

#[test]
fn damped_pendulum_never_gains_energy() {
    let model = pendulum_chain(&[(1.0, 0.5), (0.7, 0.4)], 0.3);
    let mut st = DynamicsState::zeros(2);
    st.q[0] = 1.0;
    let mut e = pendulum_energy(&model, &st);
    let world = crate::world::World::new(&model);
    for _ in 0..3000 {
        st = world.substep(&st, None, &[], 1e-3).unwrap().0;
        let next = pendulum_energy(&model, &st);
        assert!(next <= e + 1e-9, "energy rose from {e} to {next}");
        e = next;
    }
}

#[test]
fn momentum_conserved_without_gravity() {
    let mut model = biped();
    model.gravity = [0.0, 0.0];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut st = random_state(&model, &mut rng, 2.0);
    st.q[1] = 5.0;
    let mut p = linear_momentum(&model, &st);
    for _ in 0..2000 {
        st = step(&model, &st, &DVector::zeros(9), &[], 1e-3).unwrap();
        let next = linear_momentum(&model, &st);
        assert!((next - p).norm() < 1e-8, "momentum changed by {}", (next - p).norm());
        p = next;
    }
}

#[test]
fn forward_dynamics_is_bitwise_deterministic() {
    let model = biped();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let st = random_state(&model, &mut rng, 1.0);
    let tau = DVector::from_fn(9, |k, _| if k < 3 { 0.0 } else { k as f64 });
    let a = forward_dynamics(&model, &st, &tau, &[]).unwrap();
    let b = forward_dynamics(&model, &st, &tau, &[]).unwrap();
    assert_eq!(a.as_slice(), b.as_slice());
}

#[test]
fn blowup_reports_last_valid_state() {
    let mut model = pendulum_chain(&[(1.0, 0.5)], 0.0);
    model.blowup.velocity = 1.0;
    let mut st = DynamicsState::zeros(1);
    st.q[0] = 1.5;
    let mut last = st.clone();
    let err = loop {
        match step(&model, &st, &DVector::zeros(1), &[], 1e-2) {
            Ok(next) => {
                last = next.clone();
                st = next;
            }
            Err(e) => break e,
        }
    };
    match err {
        DynamicsError::Divergence { last_valid, .. } => assert_eq!(*last_valid, last),
        other => panic!("unexpected {other}"),
    }
    assert!(matches!(
        step(&model, &st, &DVector::zeros(1), &[], 0.0),
        Err(DynamicsError::BadTimestep(_))
    ));
}

#[test]
fn pd_torque_examples() {
    let model = biped();
    let gains = model.pd_gains();
    let st = DynamicsState::zeros(9);
    let zero = pd_torques(&model, &st, &[0.0; 6], &gains);
    assert!(zero.iter().all(|t| *t == 0.0));
    let tau = pd_torques(&model, &st, &[0.1, 0.0, 0.0, 0.0, 0.0, 0.0], &gains);
    assert_relative_eq!(tau[3], 30.0, epsilon = 1e-12);
    let tau = pd_torques(&model, &st, &[0.0, 0.0, 0.0, 0.0, 0.0, -2.0], &gains);
    assert_eq!(tau[8], -DEFAULT_TORQUE_LIMIT);
    assert!(tau.rows(0, 3).iter().all(|t| *t == 0.0));
}

proptest! {
    #[test]
    fn pd_torques_respect_limit(
        target in prop::array::uniform6(-5.0f64..5.0),
        q in prop::array::uniform6(-3.0f64..3.0),
        qd in prop::array::uniform6(-30.0f64..30.0),
    ) {
        let model = biped();
        let mut st = DynamicsState::zeros(9);
        for j in 0..6 {
            st.q[3 + j] = q[j];
            st.qdot[3 + j] = qd[j];
        }
        let tau = pd_torques(&model, &st, &target, &model.pd_gains());
        for j in 0..6 {
            prop_assert!(tau[3 + j].abs() <= model.joints[j].torque_limit);
        }
    }
}

#[test]
fn com_is_mass_weighted_segment_average() {
    let model = biped();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let st = random_state(&model, &mut rng, 1.0);
    let kin = Kinematics::compute(&model, &st);
    let (com, vel, _) = com_state(&model, &st);
    let m = model.total_mass();
    let mut c = Vec2::zeros();
    let mut v = Vec2::zeros();
    for (s, seg) in model.segments.iter().enumerate() {
        c += kin.com[s] * seg.mass / m;
        v += kin.com_vel[s] * seg.mass / m;
    }
    assert!((com - c).norm() < 1e-12 && (vel - v).norm() < 1e-12);

    // mirrored legs leave the horizontal offset from the pelvis unchanged
    let mut a = DynamicsState::zeros(9);
    a.q[3] = 0.4;
    a.q[6] = -0.2;
    let mut b = a.clone();
    b.q.swap_rows(3, 6);
    b.q[0] = 2.0;
    let (ca, _, _) = com_state(&model, &a);
    let (cb, _, _) = com_state(&model, &b);
    assert_relative_eq!(cb.x - 2.0, ca.x, epsilon = 1e-12);
    assert_relative_eq!(cb.y, ca.y, epsilon = 1e-12);
}

#[test]
fn single_segment_com() {
    let model = ArticulatedModel::single_segment(rod("box", 2.0, 0.3), Base::Floating);
    let mut st = DynamicsState::zeros(3);
    st.q[0] = 1.0;
    st.q[2] = 0.5;
    st.qdot[2] = 2.0;
    let (com, vel, omega) = com_state(&model, &st);
    let kin = Kinematics::compute(&model, &st);
    assert_relative_eq!((com - kin.com[0]).norm(), 0.0, epsilon = 1e-15);
    assert_relative_eq!((vel - kin.com_vel[0]).norm(), 0.0, epsilon = 1e-15);
    assert_relative_eq!(omega, 2.0, epsilon = 1e-12);
}

#[test]
fn com_velocity_matches_finite_difference() {
    let model = biped();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let st = random_state(&model, &mut rng, 1.0);
    let h = 1e-6;
    let mut ahead = st.clone();
    ahead.q += &st.qdot * h;
    let mut behind = st.clone();
    behind.q -= &st.qdot * h;
    let (_, vel, _) = com_state(&model, &st);
    let fd = (com_state(&model, &ahead).0 - com_state(&model, &behind).0) / (2.0 * h);
    assert!((vel - fd).norm() < 1e-6);
}

#[test]
fn description_round_trip() {
    let model = biped();
    let s = subject1();
    let desc = ModelDescription {
        model: model.clone(),
        params: Some(ParamVector::nominal(&s)),
    };
    let text = desc.to_text().unwrap();
    assert!(text.starts_with(MODEL_HEADER));
    assert_eq!(ModelDescription::from_text(&text).unwrap(), desc);
    assert!(ModelDescription::from_text(&text.replacen("v1", "v9", 1)).is_err());
    assert_eq!(model.contact, ContactParams::default());
}

