//! Run configuration files (TOML). Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alternation::LoopConfig;
use crate::identification::CmaConfig;
use crate::mdp::{EnvConfig, ParamVector};
use crate::policy::PpoConfig;
use crate::reference::{read_roster, GaitParams, SubjectSpec};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory.
    pub output: PathBuf,
    pub subject: SubjectSection,
    pub reference: ReferenceSection,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub train: TrainSection,
    pub cma: CmaConfig,
    #[serde(rename = "loop")]
    pub alternation: LoopConfig,
    pub oracle: OracleSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output: PathBuf::from("runs/default"),
            subject: SubjectSection::default(),
            reference: ReferenceSection::default(),
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
            train: TrainSection::default(),
            cma: CmaConfig::default(),
            alternation: LoopConfig::default(),
            oracle: OracleSection::default(),
        }
    }
}

/// Subject from the built-in roster, a roster CSV, or given inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubjectSection {
    pub id: u32,
    /// Roster CSV to look `id` up in instead of the built-in table.
    pub roster: Option<PathBuf>,
    pub spec: Option<SubjectSpec>,
}

impl Default for SubjectSection {
    fn default() -> Self {
        Self {
            id: 1,
            roster: None,
            spec: None,
        }
    }
}

/// Reference CSV, or a synthesized gait with optional overrides of the
/// subject's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSection {
    pub path: Option<PathBuf>,
    pub cycle_duration: Option<f64>,
    pub stride_length: Option<f64>,
    pub knee_amplitude: Option<f64>,
    pub ankle_amplitude: Option<f64>,
    pub frames: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub iterations: usize,
    /// Parallel workers; 0 means all available cores.
    pub workers: usize,
    /// Checkpoint to continue from (training) or to use (identify, eval).
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            iterations: 100,
            workers: 0,
            checkpoint: None,
        }
    }
}

/// Synthetic-oracle setup: a reference recorded from the trained policy
/// walking with `params`, and a loop started from parameters moved
/// `perturbation` bound widths away.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub enabled: bool,
    pub params: Option<ParamVector>,
    pub perturbation: f64,
    /// Cycle of the oracle rollout that becomes the reference. Early cycles
    /// still carry the start-up transient.
    pub record_cycle: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            enabled: false,
            params: None,
            perturbation: 0.5,
            record_cycle: 6,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, Error> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String, Error> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.env.validate()?;
        self.ppo.validate()?;
        self.cma.validate()?;
        self.alternation.validate()?;
        if let Some(spec) = &self.subject.spec {
            spec.validate()?;
        }
        if !(0.0..=1.0).contains(&self.oracle.perturbation) {
            return Err(Error::Config("oracle.perturbation must be within [0, 1]".into()));
        }
        if self.oracle.record_cycle < 2 {
            return Err(Error::Config("oracle.record_cycle must be at least 2".into()));
        }
        Ok(())
    }

    pub fn resolve_subject(&self) -> Result<SubjectSpec, Error> {
        if let Some(spec) = &self.subject.spec {
            return Ok(spec.clone());
        }
        match &self.subject.roster {
            Some(path) => read_roster(path)?
                .into_iter()
                .find(|s| s.id == self.subject.id)
                .ok_or_else(|| {
                    Error::Config(format!("subject.id {} is not in {}", self.subject.id, path.display()))
                }),
            None => SubjectSpec::from_roster(self.subject.id),
        }
    }

    pub fn gait_params(&self, subject: &SubjectSpec) -> GaitParams {
        let mut g = GaitParams::for_subject(subject);
        let r = &self.reference;
        if let Some(v) = r.cycle_duration {
            g.cycle_duration = v;
            if r.stride_length.is_none() {
                g.stride_length = subject.speed * v;
            }
        }
        if let Some(v) = r.stride_length {
            g.stride_length = v;
        }
        if let Some(v) = r.knee_amplitude {
            g.knee_amplitude = v;
        }
        if let Some(v) = r.ankle_amplitude {
            g.ankle_amplitude = v;
        }
        if let Some(v) = r.frames {
            g.frames = v;
        }
        g
    }

    pub fn workers(&self) -> usize {
        if self.train.workers > 0 {
            self.train.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}
