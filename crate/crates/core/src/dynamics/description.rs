//! Model description files.
//!
//! A description is TOML preceded by a versioned header line:
//!
//! ```text
//! # biogait-model v1
//! gravity = [0.0, -9.81]
//! base = { kind = "floating" }
//! ...
//! [[segments]]
//! name = "pelvis"
//! mass = 50.17
//! ...
//! [params]          # optional identified parameter vector
//! friction = 0.8
//! ```
//!
//! Segments, joints (with gains, torque and motion limits), contact points and
//! contact parameters are all stored; see `ArticulatedModel` for field units.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::mdp::ParamVector;
use crate::Error;

use super::ArticulatedModel;

pub const MODEL_HEADER: &str = "# biogait-model v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescription {
    #[serde(flatten)]
    pub model: ArticulatedModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamVector>,
}

impl ModelDescription {
    pub fn to_text(&self) -> Result<String, Error> {
        let body = toml::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        Ok(format!("{MODEL_HEADER}\n{body}"))
    }

    pub fn from_text(text: &str) -> Result<Self, Error> {
        let first = text.lines().next().unwrap_or_default().trim();
        if first != MODEL_HEADER {
            return Err(Error::Format(format!(
                "model description must start with '{MODEL_HEADER}', found '{first}'"
            )));
        }
        let desc: ModelDescription =
            toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        desc.model.validate()?;
        Ok(desc)
    }
}

pub fn save_description(path: &Path, desc: &ModelDescription) -> Result<(), Error> {
    std::fs::write(path, desc.to_text()?).map_err(|e| Error::io(path, e))
}

pub fn load_description(path: &Path) -> Result<ModelDescription, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelDescription::from_text(&text)
}
