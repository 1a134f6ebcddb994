//! JSON model containers. Floats are written in shortest round-trip form,
//! so a save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use recsteal_core::attack::CloneModel;
use recsteal_core::{
    EmbeddingModel, FusedCloneModel, Matrix, Result as CoreResult, TrainingSummary,
};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{AppError, Result};

pub const FORMAT: &str = "recsteal-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint<M> {
    pub format: String,
    pub version: u32,
    /// Raw identifiers of the dense user and item indices.
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<TrainingSummary>,
    pub model: M,
}

impl<M> Checkpoint<M> {
    pub fn new(model: M, user_ids: Vec<String>, item_ids: Vec<String>) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            user_ids,
            item_ids,
            summary: None,
            model,
        }
    }
}

/// Rebuilds through the checked constructors, since deserialization alone
/// skips their validation.
pub trait Validate: Sized {
    fn validate(self) -> CoreResult<Self>;
}

fn matrix(m: &Matrix) -> CoreResult<Matrix> {
    Matrix::from_vec(m.rows(), m.cols(), m.as_slice().to_vec())
}

impl Validate for EmbeddingModel {
    fn validate(self) -> CoreResult<Self> {
        EmbeddingModel::from_parts(
            self.kind(),
            matrix(self.user_embeddings())?,
            matrix(self.item_embeddings())?,
            self.head().cloned(),
        )
    }
}

impl Validate for FusedCloneModel {
    fn validate(self) -> CoreResult<Self> {
        let base = self.base().clone().validate()?;
        let mut m = FusedCloneModel::new(base, matrix(self.aux_items())?, self.mask().clone())?;
        m.set_attention(self.attention().clone())?;
        m.set_attention_trainable(self.attention_trainable());
        Ok(m)
    }
}

impl Validate for CloneModel {
    fn validate(self) -> CoreResult<Self> {
        Ok(match self {
            CloneModel::Plain(m) => CloneModel::Plain(m.validate()?),
            CloneModel::Fused(m) => CloneModel::Fused(m.validate()?),
        })
    }
}

pub fn save<M: Serialize>(path: &Path, ckpt: &Checkpoint<M>) -> Result<()> {
    let json = serde_json::to_string(ckpt).map_err(|e| AppError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, json).map_err(|e| AppError::io(path, e))
}

pub fn load<M: DeserializeOwned + Validate>(path: &Path) -> Result<Checkpoint<M>> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    let ckpt: Checkpoint<M> = serde_json::from_str(&text).map_err(|e| AppError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    if ckpt.format != FORMAT || ckpt.version != VERSION {
        return Err(AppError::Config(format!(
            "{}: not a {FORMAT} v{VERSION} file (found {} v{})",
            path.display(),
            ckpt.format,
            ckpt.version
        )));
    }
    Ok(Checkpoint {
        model: ckpt.model.validate()?,
        ..ckpt
    })
}
