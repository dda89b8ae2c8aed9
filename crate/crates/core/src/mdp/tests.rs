use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dynamics::{build_model, DynamicsState, BIPED_DOFS};
use crate::testutil::{env_with, ks_critical_1pct, ks_uniform, subject1, walk1};

fn nominal_model() -> ArticulatedModel {
    let s = subject1();
    build_model(&s, &ParamVector::nominal(&s)).unwrap()
}

fn deterministic_config() -> EnvConfig {
    EnvConfig {
        randomize: false,
        random_initial_phase: false,
        perturbation: PerturbationConfig {
            enabled: false,
            ..PerturbationConfig::default()
        },
        ..EnvConfig::default()
    }
}

#[test]
fn observation_dimension() {
    assert_eq!(OBS_DIM, 2 * 9 - 1 + 3 + 1 + 13);
    let model = nominal_model();
    let obs = observe(&model, &DynamicsState::zeros(9), 0.0, &ParamVector::nominal(&subject1()));
    assert_eq!(obs.to_vec().len(), OBS_DIM);
}

#[test]
fn zero_state_observation_has_zero_velocities() {
    let model = nominal_model();
    let obs = observe(&model, &DynamicsState::zeros(9), 0.0, &ParamVector::nominal(&subject1()));
    assert!(obs.qdot.iter().all(|v| *v == 0.0));
    assert_eq!(obs.v_com, [0.0, 0.0]);
    assert_eq!(obs.omega_com, 0.0);
    assert_eq!(obs.phase, 0.0);
}

#[test]
fn observations_differ_only_in_mu_block() {
    let model = nominal_model();
    let mut st = DynamicsState::zeros(9);
    st.q[1] = 0.9;
    st.qdot[4] = 0.3;
    let a = ParamVector::nominal(&subject1());
    let mut b = a;
    b.friction = 1.2;
    b.hip_offset = [0.01, -0.02];
    let (oa, ob) = (observe(&model, &st, 0.3, &a).to_vec(), observe(&model, &st, 0.3, &b).to_vec());
    let mu_start = OBS_DIM - PARAM_DIM;
    assert_eq!(oa[..mu_start], ob[..mu_start]);
    assert_ne!(oa[mu_start..], ob[mu_start..]);
}

#[test]
fn action_offsets_reference_targets() {
    let frame = walk1().sample(0.3);
    let zero = action_to_target(&[0.0; 6], &frame, 0.5);
    assert_eq!(&zero[..], frame.joints());
    let hip = action_to_target(&[0.1, 0.0, 0.0, 0.0, 0.0, 0.0], &frame, 0.5);
    assert_relative_eq!(hip[0], frame.joints()[0] + 0.1, epsilon = 1e-15);
    assert_eq!(&hip[1..], &frame.joints()[1..]);
    let big = action_to_target(&[2.0, -3.0, 0.0, 0.0, 0.0, 0.0], &frame, 0.5);
    assert_relative_eq!(big[0], frame.joints()[0] + 0.5, epsilon = 1e-15);
    assert_relative_eq!(big[1], frame.joints()[1] - 0.5, epsilon = 1e-15);
}

#[test]
fn reward_examples() {
    let w = RewardWeights::default();
    let perfect = RewardTerms::from_errors(0.0, 0.0, 0.0, 0.0, &w);
    assert_relative_eq!(perfect.total, 7.5, epsilon = 1e-12);
    let loaded = RewardTerms::from_errors(0.0, 0.0, 0.0, 100.0, &w);
    assert_relative_eq!(loaded.total, 7.0, epsilon = 1e-12);
    let lost = RewardTerms::from_errors(1e300, 1e300, 1e300, 100.0, &w);
    assert_relative_eq!(lost.total, -0.5, epsilon = 1e-12);
}

#[test]
fn reward_of_reference_pose_is_maximal() {
    let model = nominal_model();
    let frame = walk1().sample(0.0);
    let mut st = DynamicsState::zeros(9);
    for k in 0..BIPED_DOFS {
        st.q[k] = frame.pose[k];
    }
    let r = reward(&model, &st, &[0.0; 6], &frame, &RewardWeights::default());
    assert_relative_eq!(r.total, 7.5, epsilon = 1e-9);
}

#[test]
fn termination_thresholds() {
    let model = nominal_model();
    let limits = TerminationLimits::for_model(&model, 0.6, 0.8, 300);
    let h = model.standing_pelvis_height();
    let mut st = DynamicsState::zeros(9);
    st.q[1] = h;
    assert_eq!(check_termination(&st, &limits, 10), None);
    st.q[1] = 0.5 * h;
    assert_eq!(check_termination(&st, &limits, 10), Some(TerminationReason::PelvisLow));
    st.q[1] = h;
    st.q[2] = 1.0;
    assert_eq!(check_termination(&st, &limits, 10), Some(TerminationReason::BaseRotation));
    st.q[2] = 0.0;
    assert_eq!(check_termination(&st, &limits, 300), Some(TerminationReason::Horizon));
    st.q[4] = f64::NAN;
    assert_eq!(check_termination(&st, &limits, 10), Some(TerminationReason::Divergence));
}

proptest! {
    #[test]
    fn termination_monotone_in_pelvis_height(h in 0.0f64..1.2, lower in 0.0f64..1.0) {
        let model = nominal_model();
        let limits = TerminationLimits::for_model(&model, 0.6, 0.8, 300);
        let mut st = DynamicsState::zeros(9);
        st.q[1] = h;
        if check_termination(&st, &limits, 0).is_some() {
            st.q[1] = h * lower;
            prop_assert!(check_termination(&st, &limits, 0).is_some());
        }
    }
}

#[test]
fn push_impulse_matches_velocity_change() {
    let cfg = PerturbationConfig {
        enabled: true,
        magnitude_range: [800.0, 800.0],
        duration: 0.05,
    };
    let push = sample_perturbation(&mut ChaCha8Rng::seed_from_u64(1), &cfg, 1.0);
    assert_relative_eq!(push.impulse()[0].abs() / 74.0, 0.5405, epsilon = 1e-4);
    let none = PerturbationConfig {
        magnitude_range: [0.0, 0.0],
        ..cfg
    };
    let push = sample_perturbation(&mut ChaCha8Rng::seed_from_u64(1), &none, 1.0);
    assert_eq!(push.force[0].abs(), 0.0);
}

#[test]
fn push_magnitudes_are_uniform() {
    let cfg = PerturbationConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 10_000;
    let mut mags: Vec<f64> = (0..n).map(|_| sample_perturbation(&mut rng, &cfg, 1.0).force[0].abs()).collect();
    let d = ks_uniform(&mut mags, 0.0, 800.0);
    assert!(d < ks_critical_1pct(n), "KS statistic {d}");
}

#[test]
fn degenerate_bounds_give_nominal() {
    let p = ParamVector::nominal(&subject1());
    let bounds = ParamBounds::point(&p);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    assert_eq!(randomize_params(&mut rng, &bounds, false), p);
}

#[test]
fn randomized_params_respect_bounds_and_friction_is_uniform() {
    let bounds = ParamBounds::default_for(&subject1());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 10_000;
    let mut friction = Vec::with_capacity(n);
    for _ in 0..n {
        let p = randomize_params(&mut rng, &bounds, false);
        assert!(bounds.contains(&p));
        friction.push(p.friction);
    }
    let d = ks_uniform(&mut friction, 0.3, 1.5);
    assert!(d < ks_critical_1pct(n), "KS statistic {d}");
    let shared = randomize_params(&mut rng, &bounds, true);
    assert_eq!(shared.damping[0], shared.damping[2]);
}

#[test]
fn param_vector_round_trips_through_arrays_and_unit_box() {
    let s = subject1();
    let bounds = ParamBounds::default_for(&s);
    let p = bounds.perturb(&ParamVector::nominal(&s), 0.5);
    assert!(bounds.contains(&p));
    assert_eq!(ParamVector::from_slice(&p.to_array()).unwrap(), p);
    let back = bounds.from_unit(&bounds.to_unit(&p));
    for (a, b) in back.to_array().iter().zip(p.to_array()) {
        assert_relative_eq!(*a, b, epsilon = 1e-12);
    }
    assert!(ParamVector::from_slice(&[0.0; 3]).is_err());
}

#[test]
fn zero_action_first_step_is_near_maximal() {
    let mut env = env_with(deterministic_config());
    env.reset_with(ParamVector::nominal(&subject1()), 0.0, None).unwrap();
    let out = env.step(&[0.0; 6]).unwrap();
    // PD lag on the trailing leg costs about 0.12 of the 7.5 maximum
    assert!(out.reward.total >= 0.98 * 7.5, "reward {:?}", out.reward);
    assert!(out.done.is_none());
}

#[test]
fn episode_log_is_consistent() {
    let mut env = env_with(EnvConfig {
        horizon: 40,
        ..EnvConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let res = rollout(&mut env, &mut ZeroAction, &mut rng).unwrap();
    let gamma = env.config().gamma;
    let recomputed: f64 = res
        .record
        .steps
        .iter()
        .enumerate()
        .map(|(t, s)| gamma.powi(t as i32) * s.reward.total)
        .sum();
    assert!((res.ret - recomputed).abs() < 1e-9);
    for s in &res.record.steps {
        let r = s.reward;
        assert!((r.pose + r.com + r.effector - r.torque - r.total).abs() < 1e-12);
    }
    assert!(!res.record.is_empty());
}

#[test]
fn episodes_are_deterministic() {
    let run = || {
        let mut env = env_with(EnvConfig {
            horizon: 30,
            ..EnvConfig::default()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let res = rollout(&mut env, &mut ZeroAction, &mut rng).unwrap();
        (res.record.to_csv(), res.ret.to_bits(), res.params)
    };
    assert_eq!(run(), run());
}

#[test]
fn pushes_only_matter_after_onset() {
    let run = |enabled: bool| {
        let cfg = EnvConfig {
            horizon: 40,
            perturbation: PerturbationConfig {
                enabled,
                magnitude_range: [600.0, 800.0],
                duration: 0.05,
            },
            ..EnvConfig::default()
        };
        let mut env = env_with(cfg.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let res = rollout(&mut env, &mut ZeroAction, &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let _ = randomize_params(&mut rng, &ParamBounds::default_for(&subject1()), false);
        let _: f64 = rand::Rng::random(&mut rng);
        let push = sample_perturbation(&mut rng, &cfg.perturbation, walk1().cycle_duration());
        (res, push.active_window.0)
    };
    let (off, onset) = run(false);
    let (on, _) = run(true);
    let dt = off.record.dt;
    let mut compared = 0;
    for (a, b) in off.record.steps.iter().zip(&on.record.steps) {
        // a control step containing the onset already feels the push
        if a.time > onset.floor_to(dt) {
            break;
        }
        assert_eq!(a.q, b.q);
        compared += 1;
    }
    assert!(compared > 0 || onset < dt);
    let first_diff = off.record.steps.iter().zip(&on.record.steps).position(|(a, b)| a.q != b.q);
    assert!(first_diff.is_some(), "push had no effect");
}

trait FloorTo {
    fn floor_to(self, step: f64) -> f64;
}

impl FloorTo for f64 {
    fn floor_to(self, step: f64) -> f64 {
        (self / step).floor() * step
    }
}
