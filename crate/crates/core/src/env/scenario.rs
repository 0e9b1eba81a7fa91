use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{AttackKind, EnvConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Phase {
        Phase::ALL[i % 3]
    }
}

impl std::str::FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Phase::A),
            "b" => Ok(Phase::B),
            "c" => Ok(Phase::C),
            other => Err(Error::InvalidConfig(format!("unknown phase `{other}` (expected a, b or c)"))),
        }
    }
}

/// One episode's randomized operating point and attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Share of each node's inverter capacity the attacker controls.
    pub compromised_fraction: f64,
    pub attack_kind: AttackKind,
    pub attack_start: usize,
    pub attack_end: usize,
    pub horizon: usize,
    pub load_scale: f64,
    pub solar_scale: f64,
    pub regulator_phase: Phase,
    /// Seeds the per-node load spread.
    pub seed: u64,
}

impl Scenario {
    /// Mid-band operating point with the configured attack at the given fraction.
    pub fn nominal(cfg: &EnvConfig, compromised_fraction: f64, seed: u64) -> Self {
        let mid = |b: [f64; 2]| 0.5 * (b[0] + b[1]);
        Self {
            compromised_fraction,
            attack_kind: cfg.attack.kind,
            attack_start: cfg.attack.start,
            attack_end: cfg.attack.end,
            horizon: cfg.horizon,
            load_scale: mid(cfg.scenario.load_scale),
            solar_scale: mid(cfg.scenario.solar_scale),
            regulator_phase: Phase::A,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.compromised_fraction) {
            return Err(Error::InvalidConfig(format!(
                "compromised_fraction = {} must lie in [0, 1]",
                self.compromised_fraction
            )));
        }
        if !(self.attack_start < self.attack_end && self.attack_end <= self.horizon) {
            return Err(Error::InvalidConfig(format!(
                "attack window [{}, {}] must satisfy start < end <= horizon ({})",
                self.attack_start, self.attack_end, self.horizon
            )));
        }
        if !(self.load_scale > 0.0 && self.load_scale.is_finite()) || !(self.solar_scale >= 0.0 && self.solar_scale <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "load_scale = {} must be positive and solar_scale = {} in [0, 1]",
                self.load_scale, self.solar_scale
            )));
        }
        Ok(())
    }

    /// Whether compromised inverters run the attack curve at step `t`.
    pub fn attack_active(&self, t: usize) -> bool {
        self.attack_kind != AttackKind::None && t >= self.attack_start && t <= self.attack_end
    }
}

fn uniform<R: Rng>(rng: &mut R, b: [f64; 2]) -> f64 {
    if b[1] > b[0] {
        rng.random_range(b[0]..b[1])
    } else {
        b[0]
    }
}

/// Draws a scenario from the configured bands.
pub fn randomize_scenario<R: Rng>(rng: &mut R, cfg: &EnvConfig) -> Scenario {
    let s = &cfg.scenario;
    Scenario {
        compromised_fraction: uniform(rng, s.compromised_fraction),
        attack_kind: cfg.attack.kind,
        attack_start: cfg.attack.start,
        attack_end: cfg.attack.end,
        horizon: cfg.horizon,
        load_scale: uniform(rng, s.load_scale),
        solar_scale: uniform(rng, s.solar_scale),
        regulator_phase: Phase::from_index(rng.random_range(0..3)),
        seed: rng.random(),
    }
}
