//! Shared fixtures for unit tests.

use std::sync::{Arc, OnceLock};

use crate::mdp::{Env, EnvConfig};
use crate::reference::{synthesize_gait, GaitParams, ReferenceMotion, SubjectSpec};

pub fn subject1() -> SubjectSpec {
    SubjectSpec::from_roster(1).unwrap()
}

pub fn walk1() -> Arc<ReferenceMotion> {
    static GAIT: OnceLock<Arc<ReferenceMotion>> = OnceLock::new();
    GAIT.get_or_init(|| {
        let s = subject1();
        Arc::new(synthesize_gait(&s, &GaitParams::for_subject(&s)).unwrap())
    })
    .clone()
}

pub fn env_with(config: EnvConfig) -> Env {
    Env::new(subject1(), walk1(), config).unwrap()
}

/// Kolmogorov-Smirnov statistic of `samples` against U(lo, hi).
pub fn ks_uniform(samples: &mut [f64], lo: f64, hi: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Critical KS value at the 1% level for large `n`.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}
