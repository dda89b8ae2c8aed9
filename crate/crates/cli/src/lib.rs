//! Subcommand implementations behind the `biogait` binary.
//!
//! Every command takes a fully resolved [`RunConfig`], writes that config as
//! `config.toml` into its output directory and then its own artifacts. Output
//! CSVs depend only on the config (seed included), never on timing or thread
//! count.

pub mod commands;
pub mod export;
pub mod oracle;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use biogait::config::RunConfig;
use biogait::mdp::Env;
use biogait::policy::{Checkpoint, Trainer};
use biogait::reference::{load_reference, synthesize_gait, ReferenceMotion, SubjectSpec};

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub subject: Option<u32>,
}

/// Read `path` (or start from defaults) and apply the overrides.
pub fn resolve_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &overrides.out {
        cfg.output = out.clone();
    }
    if let Some(w) = overrides.workers {
        cfg.train.workers = w;
    }
    if let Some(id) = overrides.subject {
        cfg.subject.id = id;
        cfg.subject.spec = None;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Create the output directory and write the resolved config into it.
pub fn prepare_output(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    write_file(&dir.join("config.toml"), &cfg.to_toml()?)?;
    Ok(dir)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

/// Subject, reference motion and training environment described by a config.
pub struct Setup {
    pub subject: SubjectSpec,
    pub reference: Arc<ReferenceMotion>,
    pub env: Env,
}

impl Setup {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let subject = cfg.resolve_subject()?;
        let reference = match &cfg.reference.path {
            Some(path) => load_reference(path).with_context(|| "reference.path".to_string())?,
            None => synthesize_gait(&subject, &cfg.gait_params(&subject)).context("synthesizing the reference gait")?,
        };
        let reference = Arc::new(reference);
        let env = Env::new(subject.clone(), reference.clone(), cfg.env.clone())?;
        Ok(Self {
            subject,
            reference,
            env,
        })
    }
}

/// Trainer from `train.checkpoint`, or a fresh one seeded by the run seed.
pub fn trainer_for(cfg: &RunConfig) -> Result<Trainer> {
    match &cfg.train.checkpoint {
        Some(path) => {
            let ck = Checkpoint::load(path).with_context(|| format!("train.checkpoint = {}", path.display()))?;
            Ok(Trainer::from_checkpoint(ck)?)
        }
        None => Ok(Trainer::new(cfg.ppo.clone(), cfg.seed)?),
    }
}

pub fn require_checkpoint(cfg: &RunConfig, command: &str) -> Result<Trainer> {
    if cfg.train.checkpoint.is_none() {
        bail!("`{command}` needs a trained policy: set train.checkpoint in the config");
    }
    trainer_for(cfg)
}
