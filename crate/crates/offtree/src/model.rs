//! Versioned JSON container for trained models.

use std::path::Path;

use offtree_core::harness::{Method, TrainedModel};
use serde::{Deserialize, Serialize};

pub const FORMAT: &str = "offtree-model";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub method: Method,
    pub k: usize,
    /// Feature dimension of the training log.
    pub dim: usize,
    pub learner: String,
    pub model: TrainedModel,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: not a model file: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: expected format `{FORMAT}`, found `{found}`")]
    Format { path: String, found: String },
    #[error("{path}: unsupported model version {found} (this build reads version {VERSION})")]
    Version { path: String, found: u32 },
    #[error("{path}: header says method {header} but the payload is {payload}")]
    Inconsistent { path: String, header: Method, payload: Method },
}

impl ModelFile {
    pub fn new(model: TrainedModel, dim: usize, learner: &str) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            method: model.method(),
            k: model.num_actions(),
            dim,
            learner: learner.into(),
            model,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("models serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, path: &str) -> Result<Self, ModelError> {
        // Check the header before the payload so old or foreign files get a
        // useful message.
        #[derive(Deserialize)]
        struct Head {
            format: String,
            version: u32,
        }
        let head: Head = serde_json::from_str(text).map_err(|source| ModelError::Json { path: path.into(), source })?;
        if head.format != FORMAT {
            return Err(ModelError::Format { path: path.into(), found: head.format });
        }
        if head.version != VERSION {
            return Err(ModelError::Version { path: path.into(), found: head.version });
        }
        let file: ModelFile =
            serde_json::from_str(text).map_err(|source| ModelError::Json { path: path.into(), source })?;
        if file.model.method() != file.method {
            return Err(ModelError::Inconsistent {
                path: path.into(),
                header: file.method,
                payload: file.model.method(),
            });
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io { path: name.clone(), source })?;
        Self::from_json(&text, &name)
    }
}
