use std::sync::Arc;

use super::{randomize_scenario, EnvConfig, EpisodeTrace, FeederEnv, FeederModel, Scenario, ACT_DIM, OBS_DIM};
use crate::error::{check_len, Result};
use crate::policy::{NormalizerStats, PolicyParams};
use crate::rng::{stream, Purpose};
use crate::trainer::{EpisodeKey, Objective, Rollout};

/// Totals of one closed-loop episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub total_reward: f64,
    pub steps: usize,
    /// Largest imbalance and oscillation signal over the whole episode.
    pub max_vi: f64,
    pub max_vo: f64,
    /// The same maxima restricted to the attack window.
    pub attack_max_vi: f64,
    pub attack_max_vo: f64,
    /// Sum over steps of the curtailment penalty before weighting.
    pub curtailment: f64,
    pub visited: NormalizerStats,
    pub trace: Option<EpisodeTrace>,
}

impl EpisodeSummary {
    pub fn mean_reward(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.total_reward / self.steps as f64
        }
    }
}

/// Runs `env` to its horizon, querying the policy at each decision instant.
///
/// The states the policy was queried on are accumulated into `visited`.
pub fn run_episode(env: &mut FeederEnv, policy: &PolicyParams, stats: &NormalizerStats, record_trace: bool) -> Result<EpisodeSummary> {
    check_len("policy observation size", OBS_DIM, policy.obs_dim())?;
    check_len("policy action size", ACT_DIM, policy.act_dim())?;
    check_len("normalizer size", OBS_DIM, stats.dim())?;
    env.record_trace(record_trace);
    let sigma_p = env.config().reward.sigma_p;
    let mut visited = NormalizerStats::new(OBS_DIM);
    let mut s = EpisodeSummary {
        total_reward: 0.0,
        steps: 0,
        max_vi: 0.0,
        max_vo: 0.0,
        attack_max_vi: 0.0,
        attack_max_vo: 0.0,
        curtailment: 0.0,
        visited: NormalizerStats::new(OBS_DIM),
        trace: None,
    };
    let mut action = [0.0; 3];
    while !env.is_done() {
        if env.at_decision() {
            let obs = env.observation().to_vec();
            visited.push(&obs);
            let a = policy.evaluate(stats, &obs)?;
            action = [a[0], a[1], a[2]];
        }
        let t = env.time_step();
        let step = env.step(action)?;
        s.total_reward += step.reward;
        s.steps += 1;
        s.max_vi = s.max_vi.max(step.obs.vi);
        s.max_vo = s.max_vo.max(step.obs.vo);
        if env.scenario().attack_active(t) {
            s.attack_max_vi = s.attack_max_vi.max(step.obs.vi);
            s.attack_max_vo = s.attack_max_vo.max(step.obs.vo);
        }
        if sigma_p > 0.0 {
            s.curtailment += step.terms.curtailment / sigma_p;
        }
    }
    s.visited = visited;
    s.trace = env.take_trace();
    Ok(s)
}

/// Builds environments for training rollouts.
///
/// The scenario of a rollout depends only on `(epoch, episode)`: both signs of
/// every direction in an epoch face the same set of conditions, so their
/// rewards differ only through the policy.
#[derive(Debug, Clone)]
pub struct EnvObjective {
    cfg: Arc<EnvConfig>,
    model: Arc<FeederModel>,
}

impl EnvObjective {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let model = Arc::new(FeederModel::from_config(&cfg.feeder)?);
        Ok(Self { cfg: Arc::new(cfg), model })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn scenario_for(&self, key: &EpisodeKey) -> Scenario {
        let mut rng = stream(key.seed, Purpose::Scenario, &[key.epoch, key.episode as u64]);
        randomize_scenario(&mut rng, &self.cfg)
    }

    pub fn make_env(&self, scenario: Scenario) -> Result<FeederEnv> {
        FeederEnv::new(self.cfg.clone(), self.model.clone(), scenario)
    }
}

impl Objective for EnvObjective {
    fn rollout(&self, policy: &PolicyParams, stats: &NormalizerStats, key: EpisodeKey) -> Result<Rollout> {
        let mut env = self.make_env(self.scenario_for(&key))?;
        let s = run_episode(&mut env, policy, stats, false)?;
        Ok(Rollout { reward: s.total_reward, visited: s.visited })
    }

    fn horizon(&self) -> Option<usize> {
        Some(self.cfg.horizon)
    }
}
