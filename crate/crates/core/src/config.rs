//! Run configuration: task presets, TOML loading, dotted-key overrides and a
//! stable hash of the resolved configuration.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{AttackKind, EnvConfig};
use crate::error::{Error, Result};
use crate::policy::PolicyKind;
use crate::trainer::{Algorithm, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Imbalance,
    Oscillation,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "imbalance" | "unbalance" => Ok(Task::Imbalance),
            "oscillation" => Ok(Task::Oscillation),
            other => Err(Error::InvalidConfig(format!("unknown task `{other}` (expected imbalance or oscillation)"))),
        }
    }
}

/// Per-algorithm hyperparameter overrides applied on top of `[train]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgoOverride {
    pub alpha: Option<f64>,
    pub nu: Option<f64>,
    pub top_b: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Write a checkpoint every this many epochs; 0 writes only the final one.
    pub checkpoint_every: usize,
    /// Record elapsed milliseconds in the training log. With `false` the column
    /// is written as 0 and logs are byte-reproducible.
    pub record_wall_time: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            checkpoint_every: 10,
            record_wall_time: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub algorithm: Algorithm,
    pub policy: PolicyKind,
    pub train: TrainConfig,
    /// Keyed by algorithm name (`rs`, `ars`, `adam-ars`).
    pub algorithms: BTreeMap<String, AlgoOverride>,
    pub env: EnvConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset(Task::Imbalance)
    }
}

impl RunConfig {
    /// Defaults for the two tasks.
    ///
    /// Imbalance: (16, 16) tanh network, 16 directions keeping the best 8,
    /// ν = 0.03, α = 0.01, 250 epochs. Oscillation: linear policy, ν = 0.01,
    /// α = 0.003, 100 epochs.
    pub fn preset(task: Task) -> Self {
        let mut env = EnvConfig::default();
        let mut train = TrainConfig::default();
        let algorithms = BTreeMap::new();
        let policy = match task {
            Task::Imbalance => {
                env.attack.kind = AttackKind::Imbalance;
                train.nu = 3e-2;
                train.alpha = 1e-2;
                train.n_directions = 16;
                train.top_b = 8;
                train.episodes_per_iteration = 4;
                train.epochs = 250;
                PolicyKind::Mlp
            }
            Task::Oscillation => {
                env.attack.kind = AttackKind::Oscillation;
                train.nu = 1e-2;
                train.alpha = 3e-3;
                train.episodes_per_iteration = 4;
                PolicyKind::Linear
            }
        };
        train.horizon = env.horizon;
        Self {
            task,
            algorithm: Algorithm::AdamArs,
            policy,
            train,
            algorithms,
            env,
            output: OutputConfig::default(),
        }
    }

    /// Parses TOML text. Missing keys take the values of the preset named by
    /// `task` (imbalance when absent).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Value = toml::from_str(text)?;
        let task = match value.get("task") {
            Some(t) => t
                .as_str()
                .ok_or_else(|| Error::InvalidConfig("`task` must be a string".into()))?
                .parse()?,
            None => Task::Imbalance,
        };
        let mut base = toml::Value::try_from(Self::preset(task))?;
        merge_toml(&mut base, value);
        let cfg: RunConfig = base.try_into()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Applies `key=value` where `key` is a dotted path such as `train.alpha`.
    /// The value is read as a TOML literal, falling back to a bare string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("override `{assignment}` is not of the form key=value")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let value = parse_literal(raw);
        let mut root = toml::Value::try_from(&*self)?;
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::InvalidConfig(format!("`{}` is not a table", parts[..i].join("."))))?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), value.clone());
                break;
            }
            node = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
        }
        *self = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(format!("override `{assignment}`: {}", e.message())))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.train.validate()?;
        if self.train.horizon != self.env.horizon {
            return Err(Error::InvalidConfig(format!(
                "train.horizon = {} must equal env.horizon = {}",
                self.train.horizon, self.env.horizon
            )));
        }
        for name in self.algorithms.keys() {
            name.parse::<Algorithm>()?;
        }
        for algo in Algorithm::ALL {
            self.train_config(algo).validate()?;
        }
        Ok(())
    }

    /// Training hyperparameters for `algo`: `[train]`, then the recipe, then
    /// any `[algorithms.<name>]` overrides.
    pub fn train_config(&self, algo: Algorithm) -> TrainConfig {
        let mut t = self.train.clone();
        algo.apply(&mut t);
        if let Some(o) = self.algorithms.get(algo.name()) {
            if let Some(a) = o.alpha {
                t.alpha = a;
            }
            if let Some(n) = o.nu {
                t.nu = n;
            }
            if let Some(b) = o.top_b {
                t.top_b = b;
            }
        }
        if algo == Algorithm::Rs {
            t.top_b = t.n_directions;
        }
        t
    }

    /// Hex SHA-256 of the canonical JSON form of this configuration.
    pub fn config_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("configuration serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Recursively overlays `top` onto `base`; tables merge, everything else replaces.
fn merge_toml(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge_toml(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for task in [Task::Imbalance, Task::Oscillation] {
            let cfg = RunConfig::preset(task);
            cfg.validate().unwrap();
            let text = cfg.to_toml_string().unwrap();
            assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn partial_file_uses_task_preset() {
        let cfg = RunConfig::from_toml_str("task = \"oscillation\"\n[train]\nepochs = 5\n").unwrap();
        assert_eq!(cfg.policy, PolicyKind::Linear);
        assert_eq!(cfg.train.epochs, 5);
        assert_eq!(cfg.train.nu, 1e-2);
        assert_eq!(cfg.env.attack.kind, AttackKind::Oscillation);
    }

    #[test]
    fn overrides() {
        let mut cfg = RunConfig::preset(Task::Imbalance);
        cfg.apply_override("train.alpha=0.2").unwrap();
        cfg.apply_override("train.seed = 9").unwrap();
        cfg.apply_override("algorithm=ars").unwrap();
        cfg.apply_override("env.attack.kind=oscillation").unwrap();
        cfg.apply_override("algorithms.ars.nu=0.5").unwrap();
        assert_eq!(cfg.train.alpha, 0.2);
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.algorithm, Algorithm::Ars);
        assert_eq!(cfg.env.attack.kind, AttackKind::Oscillation);
        assert_eq!(cfg.train_config(Algorithm::Ars).nu, 0.5);
        assert!(cfg.apply_override("train.alpa=1").is_err());
        assert!(cfg.apply_override("train.alpha").is_err());
        assert!(cfg.apply_override("train.epochs=\"x\"").is_err());
    }

    #[test]
    fn per_algorithm_step_sizes() {
        let mut cfg = RunConfig::preset(Task::Imbalance);
        cfg.apply_override("algorithms.ars.alpha=0.02").unwrap();
        assert_eq!(cfg.train_config(Algorithm::AdamArs).alpha, 1e-2);
        assert_eq!(cfg.train_config(Algorithm::Ars).alpha, 2e-2);
        let rs = cfg.train_config(Algorithm::Rs);
        assert_eq!(rs.top_b, rs.n_directions);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::preset(Task::Imbalance);
        let mut b = a.clone();
        assert_eq!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 64);
        b.train.seed += 1;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn horizon_mismatch_rejected() {
        let mut cfg = RunConfig::preset(Task::Imbalance);
        cfg.train.horizon = 10;
        assert!(cfg.validate().is_err());
    }
}
