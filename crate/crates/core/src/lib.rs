//! Planar biped gait reproduction: rigid-body simulation with compliant ground
//! contact, imitation learning of a walking policy with PPO, and CMA-ES
//! identification of the model parameters that best explain a reference gait.
//!
//! The pipeline alternates the two optimizations until the simulated gait's
//! joint angles, joint moments and ground reaction forces match the reference.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod alternation;
pub mod config;
pub mod contact;
pub mod dynamics;
pub mod identification;
pub mod mdp;
pub mod policy;
pub mod reference;
pub mod seeding;
pub mod world;
#[cfg(test)]
mod testutil;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use dynamics::DynamicsError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("reference: {0}")]
    Reference(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("gait segmentation: {0}")]
    Segmentation(String),
    #[error("training: {0}")]
    Training(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn csv(path: &Path, e: impl std::fmt::Display) -> Self {
        Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
