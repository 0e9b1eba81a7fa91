use serde::{Deserialize, Serialize};

use super::feeder::FeederConfig;
use crate::error::{Error, Result};
use crate::inverter::{VvwCurve, DEFAULT_ETA, MAX_ATTACK_OFFSET};
use crate::observer::VoParams;

/// Inverter sizing and dynamics shared by every DER on the feeder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InverterConfig {
    pub tau_meas: f64,
    pub tau_out: f64,
    pub default_eta: [f64; 5],
    /// Peak solar output as a fraction of the node's nominal load.
    pub peak_fraction: f64,
    /// Apparent power rating as a multiple of peak solar output.
    pub oversize: f64,
}

impl Default for InverterConfig {
    fn default() -> Self {
        Self {
            tau_meas: 1.5,
            tau_out: 2.0,
            default_eta: DEFAULT_ETA,
            peak_fraction: 1.0,
            oversize: 1.3,
        }
    }
}

/// Weights of the per-step penalty terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    /// Imbalance term.
    pub sigma_u: f64,
    /// Oscillation term.
    pub sigma_y: f64,
    /// Per-phase action change.
    pub sigma_a: f64,
    /// Per-phase action magnitude.
    pub sigma_0: f64,
    /// Active power curtailment.
    pub sigma_p: f64,
    /// Curtailment is not scored for inverters with less available power than this, kW.
    pub p_max_eps: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            sigma_u: 300.0,
            sigma_y: 300.0,
            sigma_a: 0.5,
            sigma_0: 1.0,
            sigma_p: 1.0,
            p_max_eps: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    None,
    Oscillation,
    Imbalance,
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AttackKind::None => "none",
            AttackKind::Oscillation => "oscillation",
            AttackKind::Imbalance => "imbalance",
        })
    }
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(AttackKind::None),
            "oscillation" | "vo" => Ok(AttackKind::Oscillation),
            "imbalance" | "unbalance" | "vi" => Ok(AttackKind::Imbalance),
            other => Err(Error::InvalidConfig(format!("unknown attack kind `{other}`"))),
        }
    }
}

/// Attack schedule and the curves compromised inverters switch to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// First attacked step.
    pub start: usize,
    /// Last attacked step.
    pub end: usize,
    /// Breakpoints used by every compromised inverter during an oscillation attack.
    pub oscillation_eta: [f64; 5],
    /// Offsets applied to compromised inverters on phases A, B, C during an imbalance attack.
    pub imbalance_offsets: [f64; 3],
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            kind: AttackKind::Imbalance,
            start: 200,
            end: 450,
            oscillation_eta: [0.999, 1.0, 1.0, 1.001, 1.1],
            imbalance_offsets: [0.1, -0.1, -0.1],
        }
    }
}

/// Ranges scenario parameters are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioBands {
    pub compromised_fraction: [f64; 2],
    pub load_scale: [f64; 2],
    pub solar_scale: [f64; 2],
    /// Relative spread of per-node load draws around the layout weights.
    pub node_load_jitter: f64,
}

impl Default for ScenarioBands {
    fn default() -> Self {
        Self {
            compromised_fraction: [0.1, 0.4],
            load_scale: [0.6, 1.0],
            solar_scale: [0.6, 1.0],
            node_load_jitter: 0.1,
        }
    }
}

/// Everything needed to build feeder environments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub horizon: usize,
    pub dt: f64,
    /// Steps between agent decisions; the action is held in between.
    pub action_period: usize,
    /// Untimed steps run on default curves before `t = 0` so episodes start settled.
    pub warmup_steps: usize,
    pub feeder: FeederConfig,
    pub inverter: InverterConfig,
    pub observer: VoParams,
    pub reward: RewardWeights,
    pub attack: AttackConfig,
    pub scenario: ScenarioBands,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            horizon: 700,
            dt: 1.0,
            action_period: 20,
            warmup_steps: 100,
            feeder: FeederConfig::default(),
            inverter: InverterConfig::default(),
            observer: VoParams::default(),
            reward: RewardWeights::default(),
            attack: AttackConfig::default(),
            scenario: ScenarioBands::default(),
        }
    }
}

fn band(name: &str, b: [f64; 2], lo: f64, hi: f64) -> Result<()> {
    if b[0].is_finite() && b[1].is_finite() && lo <= b[0] && b[0] <= b[1] && b[1] <= hi {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} = {b:?} must satisfy {lo} <= lo <= hi <= {hi}")))
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be positive".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt = {} must be positive", self.dt)));
        }
        if self.action_period == 0 {
            return Err(Error::InvalidConfig("action_period must be positive".into()));
        }
        self.feeder.validate()?;
        let inv = &self.inverter;
        if !(inv.tau_meas >= 0.0 && inv.tau_out >= 0.0) {
            return Err(Error::InvalidConfig("inverter time constants must be non-negative".into()));
        }
        if !(inv.peak_fraction >= 0.0) || !(inv.oversize >= 1.0) {
            return Err(Error::InvalidConfig(
                "inverter.peak_fraction must be >= 0 and inverter.oversize >= 1".into(),
            ));
        }
        VvwCurve::new(inv.default_eta, 0.0)
            .map_err(|e| Error::InvalidConfig(format!("inverter.default_eta: {e}")))?;
        let obs = &self.observer;
        if !(obs.c > 0.0 && obs.hp_cutoff_hz > 0.0 && obs.lp_cutoff_hz > 0.0) {
            return Err(Error::InvalidConfig("observer gain and cutoffs must be positive".into()));
        }
        let w = &self.reward;
        for (name, x) in [
            ("sigma_u", w.sigma_u),
            ("sigma_y", w.sigma_y),
            ("sigma_a", w.sigma_a),
            ("sigma_0", w.sigma_0),
            ("sigma_p", w.sigma_p),
            ("p_max_eps", w.p_max_eps),
        ] {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(Error::InvalidConfig(format!("reward.{name} = {x} must be non-negative")));
            }
        }
        let a = &self.attack;
        if !(a.start < a.end && a.end <= self.horizon) {
            return Err(Error::InvalidConfig(format!(
                "attack window [{}, {}] must satisfy start < end <= horizon ({})",
                a.start, a.end, self.horizon
            )));
        }
        VvwCurve::new(a.oscillation_eta, 0.0)
            .map_err(|e| Error::InvalidConfig(format!("attack.oscillation_eta: {e}")))?;
        if a.imbalance_offsets.iter().any(|o| !(o.abs() <= MAX_ATTACK_OFFSET)) {
            return Err(Error::InvalidConfig(format!(
                "attack.imbalance_offsets {:?} must lie in [-{MAX_ATTACK_OFFSET}, {MAX_ATTACK_OFFSET}]",
                a.imbalance_offsets
            )));
        }
        let s = &self.scenario;
        band("scenario.compromised_fraction", s.compromised_fraction, 0.0, 1.0)?;
        band("scenario.load_scale", s.load_scale, 0.0, 10.0)?;
        band("scenario.solar_scale", s.solar_scale, 0.0, 1.0)?;
        if !(0.0..1.0).contains(&s.node_load_jitter) {
            return Err(Error::InvalidConfig("scenario.node_load_jitter must lie in [0, 1)".into()));
        }
        Ok(())
    }
}
