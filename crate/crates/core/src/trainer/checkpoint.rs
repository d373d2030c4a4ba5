use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainState;
use crate::error::{DcpError, Result};

pub const CHECKPOINT_FORMAT: &str = "dcp-checkpoint-v1";

/// Serialized training state: every network, both optimizers' velocity
/// buffers, both centroid banks, the threshold schedule and the config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    #[serde(flatten)]
    pub state: TrainState,
}

impl Checkpoint {
    pub fn new(state: TrainState) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            state,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a checkpoint, refusing any format other than
    /// [`CHECKPOINT_FORMAT`] before looking at the rest of the document.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: serde_json::Value = serde_json::from_str(text)?;
        let found = doc
            .get("format")
            .and_then(|f| f.as_str())
            .unwrap_or("<missing>")
            .to_string();
        if found != CHECKPOINT_FORMAT {
            return Err(DcpError::Version {
                found,
                expected: CHECKPOINT_FORMAT.into(),
            });
        }
        Ok(serde_json::from_value(doc)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
