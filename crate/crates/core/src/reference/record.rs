use crate::alternation::segment_cycles;
use crate::mdp::{Controller, Env, EpisodeResult, ParamVector};
use crate::Error;

use super::{FrameKinetics, ReferenceFrame, ReferenceMotion};

/// Record one cycle of `controller` walking with parameters `params` as a
/// reference motion.
///
/// The rollout starts at phase 0 without perturbations and runs `cycle + 1`
/// reference cycles; frames are the states at every control step of cycle
/// `cycle` (which must be at least 2), so the control period has to divide the
/// cycle duration. Horizontal positions are shifted back by `cycle` strides,
/// which makes the recording line up with a fresh rollout indexed by the same
/// phase clock. A rollout is never exactly periodic, so the residual between
/// the last and first pose (all but base x) is spread linearly over the cycle;
/// kinetics, COM and effector tracks are kept as measured. The rollout itself
/// is returned alongside.
pub fn record_reference_from_rollout<C: Controller + ?Sized>(
    env: &mut Env,
    controller: &mut C,
    params: ParamVector,
    cycle: usize,
) -> Result<(ReferenceMotion, EpisodeResult), Error> {
    if cycle < 2 {
        return Err(Error::Reference("record from the third cycle or later".into()));
    }
    let cycle_duration = env.control_reference().cycle_duration();
    let ratio = cycle_duration / env.config().control_dt();
    let per_cycle = ratio.round() as usize;
    if per_cycle < 1 || (ratio - per_cycle as f64).abs() > 1e-9 {
        return Err(Error::Reference(format!(
            "cycle duration {cycle_duration} s is not a whole number of control periods"
        )));
    }
    let saved_horizon = env.config().horizon;
    env.set_horizon((cycle + 1) * per_cycle);
    let result = env
        .reset_with(params, 0.0, None)
        .and_then(|obs| env.run_episode(controller, obs));
    env.set_horizon(saved_horizon);
    let result = result?;
    if result.termination.is_failure() {
        return Err(Error::Reference(format!(
            "policy failed after {} steps ({}); no gait to record",
            result.record.len(),
            result.termination.as_str()
        )));
    }
    segment_cycles(&result.record).map_err(|e| {
        Error::Reference(format!("rollout has no segmentable gait: {e}"))
    })?;

    let steps = &result.record.steps;
    let first = cycle * per_cycle;
    let stride = steps[first + per_cycle - 1].q[0] - steps[first - 1].q[0];
    let shift = -(cycle as f64) * stride;
    let mut frames: Vec<ReferenceFrame> = (0..=per_cycle)
        .map(|j| {
            let s = &steps[first + j - 1];
            let mut frame = ReferenceFrame {
                pose: s.q,
                com: s.com,
                effectors: s.effectors,
                kinetics: Some(FrameKinetics {
                    torques: s.tau,
                    grf: s.grf,
                }),
            };
            frame.shift_x(shift);
            frame
        })
        .collect();
    close_loop(&mut frames);
    let motion = ReferenceMotion::new(frames, cycle_duration, stride / cycle_duration)?;
    Ok((motion, result))
}

/// Make pose coordinates 1.. of the last frame equal those of the first by
/// subtracting a linearly growing share of the residual.
fn close_loop(frames: &mut [ReferenceFrame]) {
    let n = frames.len() - 1;
    let first = frames[0].pose;
    let last = frames[n].pose;
    for (j, frame) in frames.iter_mut().enumerate() {
        let w = j as f64 / n as f64;
        for k in 1..first.len() {
            frame.pose[k] -= w * (last[k] - first[k]);
        }
    }
    frames[n].pose[1..].copy_from_slice(&first[1..]);
}
