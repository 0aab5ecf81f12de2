use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataset::{CLASS_COUNT, DEFAULT_INPUT_SIZE};
use crate::error::{Error, Result};

pub const DEFAULT_BACKBONE: &str = "inception-resnet-v2";
pub const STUB_BACKBONE: &str = "stub";

/// Which backbone layers receive gradient updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezePolicy {
    #[default]
    FreezeBackbone,
    UnfreezeAll,
    /// The top `n` backbone layers train, the rest stay frozen.
    UnfreezeTopN(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub backbone_name: String,
    pub input_size: usize,
    pub num_classes: usize,
    pub head_dense_units: usize,
    pub dropout_rate: f64,
    pub freeze_policy: FreezePolicy,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone_name: DEFAULT_BACKBONE.to_string(),
            input_size: DEFAULT_INPUT_SIZE,
            num_classes: CLASS_COUNT,
            head_dense_units: 256,
            dropout_rate: 0.5,
            freeze_policy: FreezePolicy::FreezeBackbone,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::invalid("model.num_classes must be at least 2"));
        }
        if self.input_size == 0 {
            return Err(Error::invalid("model.input_size must be positive"));
        }
        if self.head_dense_units == 0 {
            return Err(Error::invalid("model.head_dense_units must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid(format!(
                "model.dropout_rate {} not in [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Where backbone weights come from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightSource {
    /// Exported backbone weights (or a full checkpoint) to start from.
    pub pretrained: Option<PathBuf>,
    /// Permit seeded random backbone weights when no file is given. Only
    /// bundled architectures can be built this way.
    pub random_fallback: bool,
    /// Seeds head initialization, and the backbone under random fallback.
    pub seed: u64,
}
