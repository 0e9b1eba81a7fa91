//! Versioned JSON checkpoints holding a policy, its normalizer and the
//! optimizer state needed to resume training.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{check_len, Error, Result};
use crate::optimizer::AdamState;
use crate::policy::{NormalizerStats, PolicyParams};
use crate::trainer::TrainState;

pub const CHECKPOINT_MAGIC: &str = "ars-policy-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub magic: String,
    pub format_version: u32,
    /// Completed training epochs.
    pub epoch: u64,
    pub config_hash: String,
    pub policy: PolicyParams,
    pub stats: NormalizerStats,
    /// Per-component normalizer variance, for readers that do not want to
    /// reconstruct it from `stats`. Ignored on load.
    pub normalizer_var: Vec<f64>,
    pub adam: AdamState,
    pub config: RunConfig,
}

impl Checkpoint {
    pub fn new(state: &TrainState, config: &RunConfig) -> Self {
        Self {
            magic: CHECKPOINT_MAGIC.to_string(),
            format_version: CHECKPOINT_VERSION,
            epoch: state.epoch,
            config_hash: config.config_hash(),
            policy: state.policy.clone(),
            stats: state.stats.clone(),
            normalizer_var: state.stats.var(),
            adam: state.adam.clone(),
            config: config.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and checks the magic string, version and internal dimensions.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        match raw.get("magic").and_then(|m| m.as_str()) {
            Some(CHECKPOINT_MAGIC) => {}
            other => return Err(Error::Checkpoint(format!("not a policy checkpoint (magic {other:?})"))),
        }
        match raw.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == CHECKPOINT_VERSION as u64 => {}
            other => {
                return Err(Error::Checkpoint(format!(
                    "unsupported format version {other:?}, this build reads {CHECKPOINT_VERSION}"
                )))
            }
        }
        let ck: Checkpoint = serde_json::from_value(raw)?;
        ck.validate()?;
        Ok(ck)
    }

    pub fn validate(&self) -> Result<()> {
        let p = PolicyParams::from_parts(self.policy.kind, self.policy.shape.clone(), self.policy.theta.clone(), self.policy.action_bound)?;
        check_len("checkpoint normalizer", p.obs_dim(), self.stats.dim())?;
        check_len("checkpoint adam moments", p.dim(), self.adam.m.len())?;
        self.adam.validate()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        // Write then rename so a crash never leaves a half-written checkpoint.
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, self.to_json()?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn train_state(&self) -> TrainState {
        TrainState {
            policy: self.policy.clone(),
            stats: self.stats.clone(),
            adam: self.adam.clone(),
            epoch: self.epoch,
        }
    }
}
