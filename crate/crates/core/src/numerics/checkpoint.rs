use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "lucgen-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON snapshot of a trained model: its kind, the configuration it
/// was built with, the seed, the training iteration and every named tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub seed: u64,
    pub iteration: u64,
    pub config: serde_json::Value,
    pub params: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new<C: Serialize>(
        kind: &str,
        config: &C,
        seed: u64,
        iteration: u64,
        params: &ParamSet,
    ) -> Result<Self> {
        Ok(Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            kind: kind.to_string(),
            seed,
            iteration,
            config: serde_json::to_value(config)?,
            params: params.to_map(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Loads and validates format, version, kind and every tensor.
    pub fn load(path: &Path, kind: &str) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        let bad = |detail: String| Error::Ingest {
            path: path.to_path_buf(),
            line: None,
            detail,
        };
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(bad(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        if ck.kind != kind {
            return Err(bad(format!(
                "expected a {kind} checkpoint, found {}",
                ck.kind
            )));
        }
        for (name, t) in &ck.params {
            Tensor::new(t.shape().to_vec(), t.data().to_vec())
                .map_err(|e| bad(format!("parameter {name}: {e}")))?;
        }
        Ok(ck)
    }

    pub fn config<C: for<'de> Deserialize<'de>>(&self) -> Result<C> {
        Ok(serde_json::from_value(self.config.clone())?)
    }

    pub fn param_set(&self) -> ParamSet {
        ParamSet::from_map(self.params.clone())
    }
}
