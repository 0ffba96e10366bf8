//! Training configuration file (TOML) and the model description stored
//! next to checkpoints.

use std::path::Path;

use evseg_core::models::{EventTarget, ModelKind, NetworkConfig, Scale, SppEventMode};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// ```toml
/// model = "d2s"
/// repr = "P+N"
/// scale = "toy"
/// seed = 7
///
/// [train]
/// steps = 500
/// batch_size = 4
/// lr = 0.01
/// momentum = 0.9
///
/// [loss]
/// ce_weight = 1.0
/// bce_weight = 1.0
///
/// [d2s]
/// event_target = "binary_occupancy"
///
/// [context]
/// spp_event_mode = "inside"
/// ```
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    pub model: Option<String>,
    pub repr: Option<String>,
    pub scale: Option<Scale>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub d2s: D2sSection,
    #[serde(default)]
    pub context: ContextSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub momentum: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub ce_weight: Option<f64>,
    pub bce_weight: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct D2sSection {
    pub event_target: Option<EventTarget>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSection {
    pub spp_event_mode: Option<SppEventMode>,
}

impl TrainFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Everything needed to rebuild a trained network from its checkpoint.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub kind: ModelKind,
    pub repr: Option<String>,
    pub event_target: EventTarget,
    pub network: NetworkConfig,
}

impl ModelFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
