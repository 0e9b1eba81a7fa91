//! Augmented random search with an Adam or plain ascent update.
//!
//! One epoch samples `N` Gaussian directions, rolls out the policy perturbed
//! by `+nu*delta` and `-nu*delta` for several episodes each, keeps the `b`
//! directions whose better side scored highest, and steps the parameters
//! along the reward-weighted sum of those directions. States seen during the
//! rollouts are merged into the observation normalizer afterwards, so every
//! rollout of an epoch uses the same frozen statistics.

use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::optimizer::{sgd_ascent_step, AdamState, DEFAULT_ADAM_EPS, DEFAULT_BETA1, DEFAULT_BETA2};
use crate::policy::{norm, NormalizerStats, PolicyParams};
use crate::rng::{stream, Purpose};

/// σ_R below this is treated as "no signal" and yields a zero update.
pub const SIGMA_R_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Named training recipes.
///
/// `Rs` is basic random search: no state normalization, every direction used,
/// no reward-std scaling, plain ascent. `Ars` adds those three and `AdamArs`
/// swaps the ascent step for Adam.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "rs")]
    Rs,
    #[serde(rename = "ars")]
    Ars,
    #[serde(rename = "adam-ars")]
    AdamArs,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Rs, Algorithm::Ars, Algorithm::AdamArs];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Rs => "rs",
            Algorithm::Ars => "ars",
            Algorithm::AdamArs => "adam-ars",
        }
    }

    /// Overwrites the fields of `cfg` that distinguish the recipes.
    pub fn apply(self, cfg: &mut TrainConfig) {
        match self {
            Algorithm::Rs => {
                cfg.optimizer = OptimizerKind::Sgd;
                cfg.top_b = cfg.n_directions;
                cfg.normalize_states = false;
                cfg.scale_by_reward_std = false;
            }
            Algorithm::Ars => {
                cfg.optimizer = OptimizerKind::Sgd;
                cfg.normalize_states = true;
                cfg.scale_by_reward_std = true;
            }
            Algorithm::AdamArs => {
                cfg.optimizer = OptimizerKind::Adam;
                cfg.normalize_states = true;
                cfg.scale_by_reward_std = true;
            }
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "rs" | "brs" => Ok(Algorithm::Rs),
            "ars" => Ok(Algorithm::Ars),
            "adam-ars" | "adamars" | "adam" => Ok(Algorithm::AdamArs),
            other => Err(Error::InvalidConfig(format!("unknown algorithm `{other}` (expected rs, ars or adam-ars)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Directions sampled per epoch (`N`).
    pub n_directions: usize,
    /// Directions kept for the update (`b`).
    pub top_b: usize,
    /// Exploration noise.
    pub nu: f64,
    /// Step size.
    pub alpha: f64,
    /// Steps per rollout.
    pub horizon: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub episodes_per_iteration: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub normalize_states: bool,
    pub scale_by_reward_std: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_directions: 8,
            top_b: 4,
            nu: 3e-2,
            alpha: 5e-2,
            horizon: 700,
            epochs: 100,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            episodes_per_iteration: 4,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            adam_eps: DEFAULT_ADAM_EPS,
            normalize_states: true,
            scale_by_reward_std: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_directions == 0 {
            return bad("n_directions must be positive".into());
        }
        if self.top_b == 0 || self.top_b > self.n_directions {
            return bad(format!("top_b = {} must lie in [1, n_directions = {}]", self.top_b, self.n_directions));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("nu = {} must be positive", self.nu));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha = {} must be positive", self.alpha));
        }
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if self.episodes_per_iteration == 0 {
            return bad("episodes_per_iteration must be positive".into());
        }
        AdamState::with_rates(0, self.beta1, self.beta2, self.adam_eps).validate()
    }
}

/// Summary of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub epoch: u64,
    /// Mean over the `2N` perturbed-policy rewards.
    pub mean_reward: f64,
    /// Population standard deviation of the same rewards.
    pub reward_std: f64,
    pub g_norm: f64,
    /// Norm of the parameters after the update.
    pub theta_norm: f64,
    pub wall_ms: u64,
}

pub const TRAIN_LOG_HEADER: &str = "epoch,mean_reward,reward_std,g_norm,theta_norm,wall_ms";

impl IterationReport {
    /// One line of the training log, without the newline. With
    /// `record_wall_time` off the timing column is 0 so logs are reproducible.
    pub fn csv_row(&self, record_wall_time: bool) -> String {
        let ms = if record_wall_time { self.wall_ms } else { 0 };
        format!("{},{},{},{},{},{ms}", self.epoch, self.mean_reward, self.reward_std, self.g_norm, self.theta_norm)
    }
}

/// Identifies one rollout of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EpisodeKey {
    pub seed: u64,
    pub epoch: u64,
    pub direction: usize,
    /// +1 or -1.
    pub sign: i8,
    pub episode: usize,
}

/// Outcome of one rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub reward: f64,
    /// Statistics of the states the policy was queried on.
    pub visited: NormalizerStats,
}

/// Something a policy can be scored on.
///
/// Implementations must be deterministic in `(policy, stats, key)` and must
/// not share mutable state between calls: rollouts of an epoch run in parallel.
pub trait Objective: Sync {
    fn rollout(&self, policy: &PolicyParams, stats: &NormalizerStats, key: EpisodeKey) -> Result<Rollout>;

    /// Episode length the objective runs, when it has one.
    fn horizon(&self) -> Option<usize> {
        None
    }
}

/// Scores the raw parameter vector with a closure. Visits no states.
pub struct ParamObjective<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for ParamObjective<F> {
    fn rollout(&self, policy: &PolicyParams, stats: &NormalizerStats, _key: EpisodeKey) -> Result<Rollout> {
        Ok(Rollout {
            reward: (self.0)(&policy.theta),
            visited: NormalizerStats::new(stats.dim()),
        })
    }
}

/// Direction `k` of `epoch`, drawn from its own sub-stream.
pub fn sample_direction(seed: u64, epoch: u64, k: usize, dim: usize) -> Vec<f64> {
    let mut rng = stream(seed, Purpose::Direction, &[epoch, k as u64]);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn sample_directions(seed: u64, epoch: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|k| sample_direction(seed, epoch, k, dim)).collect()
}

/// Reward-weighted direction sum over the top `b` pairs, scaled by
/// `1 / (b * sigma_R)`.
///
/// Pairs are ranked by `max(r_plus, r_minus)`, ties broken by position. The
/// retained pairs are then summed in their original order, so `b = N` is
/// exactly the plain average of finite differences.
pub fn estimate_gradient(pairs: &[(f64, f64, Vec<f64>)], b: usize) -> Result<Vec<f64>> {
    estimate_gradient_with(pairs, b, true)
}

/// As [`estimate_gradient`]; `scale_by_std = false` divides by `b` only.
pub fn estimate_gradient_with(pairs: &[(f64, f64, Vec<f64>)], b: usize, scale_by_std: bool) -> Result<Vec<f64>> {
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("estimate_gradient needs at least one pair".into()));
    }
    if b == 0 || b > pairs.len() {
        return Err(Error::InvalidConfig(format!("b = {b} must lie in [1, {}]", pairs.len())));
    }
    let dim = pairs[0].2.len();
    for (k, (rp, rm, delta)) in pairs.iter().enumerate() {
        if !rp.is_finite() || !rm.is_finite() {
            return Err(Error::NonFiniteReward { direction: k });
        }
        check_len("direction", dim, delta.len())?;
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (pairs[i].0.max(pairs[i].1), pairs[j].0.max(pairs[j].1));
        b.total_cmp(&a)
    });
    let mut kept = order[..b].to_vec();
    kept.sort_unstable();

    let scale = if scale_by_std {
        // Symmetric in each pair, so swapping r_plus and r_minus leaves it bit-identical.
        let mean = kept.iter().map(|&k| pairs[k].0 + pairs[k].1).sum::<f64>() / (2 * b) as f64;
        let ss: f64 = kept
            .iter()
            .map(|&k| {
                let (p, m) = (pairs[k].0 - mean, pairs[k].1 - mean);
                p * p + m * m
            })
            .sum();
        let sigma = (ss / (2 * b) as f64).sqrt();
        if sigma < SIGMA_R_FLOOR {
            return Ok(vec![0.0; dim]);
        }
        1.0 / (b as f64 * sigma)
    } else {
        1.0 / b as f64
    };
    let mut g = vec![0.0; dim];
    for &k in &kept {
        let (rp, rm, delta) = &pairs[k];
        let w = rp - rm;
        for (gi, d) in g.iter_mut().zip(delta) {
            *gi += w * d;
        }
    }
    g.iter_mut().for_each(|x| *x *= scale);
    Ok(g)
}

/// Everything that evolves during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub policy: PolicyParams,
    pub stats: NormalizerStats,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: u64,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig, policy: PolicyParams) -> Self {
        Self {
            stats: NormalizerStats::new(policy.obs_dim()),
            adam: AdamState::with_rates(policy.dim(), cfg.beta1, cfg.beta2, cfg.adam_eps),
            policy,
            epoch: 0,
        }
    }
}

fn population_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs one epoch and advances `state`. On error `state` is left untouched.
pub fn train_epoch<O: Objective + ?Sized>(cfg: &TrainConfig, objective: &O, state: &mut TrainState) -> Result<IterationReport> {
    let started = Instant::now();
    let epoch = state.epoch;
    let dim = state.policy.dim();
    let deltas = sample_directions(cfg.seed, epoch, cfg.n_directions, dim);
    let frozen = if cfg.normalize_states {
        state.stats.clone()
    } else {
        NormalizerStats::new(state.stats.dim())
    };

    let jobs: Vec<(usize, i8, usize)> = (0..cfg.n_directions)
        .flat_map(|k| [1i8, -1].into_iter().flat_map(move |s| (0..cfg.episodes_per_iteration).map(move |e| (k, s, e))))
        .collect();
    let policy = &state.policy;
    let results: Vec<Result<Rollout>> = jobs
        .par_iter()
        .map(|&(k, sign, episode)| {
            let key = EpisodeKey { seed: cfg.seed, epoch, direction: k, sign, episode };
            let wrap = |source: Error| Error::Rollout { direction: k, sign, episode, source: Box::new(source) };
            let perturbed = policy.perturb(&deltas[k], cfg.nu, sign as f64).map_err(wrap)?;
            let r = objective.rollout(&perturbed, &frozen, key).map_err(wrap)?;
            if !r.reward.is_finite() {
                return Err(wrap(Error::NonFiniteReward { direction: k }));
            }
            Ok(r)
        })
        .collect();

    let eps = cfg.episodes_per_iteration;
    let mut sums = vec![[0.0f64; 2]; cfg.n_directions];
    let mut visited = NormalizerStats::new(state.stats.dim());
    for (&(k, sign, _), r) in jobs.iter().zip(results) {
        let r = r?;
        sums[k][(sign < 0) as usize] += r.reward;
        visited.merge(&r.visited)?;
    }
    let pairs: Vec<(f64, f64, Vec<f64>)> = sums
        .iter()
        .zip(deltas)
        .map(|(s, d)| (s[0] / eps as f64, s[1] / eps as f64, d))
        .collect();
    let g = estimate_gradient_with(&pairs, cfg.top_b, cfg.scale_by_reward_std)?;
    check_finite("gradient", &g)?;
    if g.iter().all(|x| *x == 0.0) {
        log::debug!("epoch {epoch}: zero update (no reward spread among retained directions)");
    }

    let mut adam = state.adam.clone();
    let theta = match cfg.optimizer {
        OptimizerKind::Adam => adam.ascent_step(&state.policy.theta, &g, cfg.alpha)?,
        OptimizerKind::Sgd => sgd_ascent_step(&state.policy.theta, &g, cfg.alpha)?,
    };
    let policy = state.policy.with_theta(theta)?;
    let mut stats = state.stats.clone();
    if cfg.normalize_states {
        stats.merge(&visited)?;
    }

    let rewards: Vec<f64> = pairs.iter().flat_map(|p| [p.0, p.1]).collect();
    let (mean_reward, reward_std) = population_std(&rewards);
    let report = IterationReport {
        epoch,
        mean_reward,
        reward_std,
        g_norm: norm(&g),
        theta_norm: policy.theta_norm(),
        wall_ms: started.elapsed().as_millis() as u64,
    };
    state.policy = policy;
    state.stats = stats;
    state.adam = adam;
    state.epoch += 1;
    Ok(report)
}

/// Trains until `state.epoch == cfg.epochs`, calling `on_epoch` after each one.
pub fn train_from<O, F>(cfg: &TrainConfig, objective: &O, state: &mut TrainState, mut on_epoch: F) -> Result<Vec<IterationReport>>
where
    O: Objective + ?Sized,
    F: FnMut(&IterationReport, &TrainState) -> Result<()>,
{
    cfg.validate()?;
    if let Some(h) = objective.horizon() {
        if h != cfg.horizon {
            return Err(Error::InvalidConfig(format!(
                "training horizon {} does not match the environment horizon {h}",
                cfg.horizon
            )));
        }
    }
    check_len("adam moments", state.policy.dim(), state.adam.m.len())?;
    check_len("normalizer", state.policy.obs_dim(), state.stats.dim())?;
    let mut reports = Vec::new();
    while (state.epoch as usize) < cfg.epochs {
        let report = train_epoch(cfg, objective, state)?;
        on_epoch(&report, state)?;
        reports.push(report);
    }
    Ok(reports)
}

/// Trains `policy` from scratch for `cfg.epochs` epochs.
pub fn train<O: Objective + ?Sized>(
    cfg: &TrainConfig,
    objective: &O,
    policy: PolicyParams,
) -> Result<(PolicyParams, NormalizerStats, Vec<IterationReport>)> {
    let mut state = TrainState::new(cfg, policy);
    let reports = train_from(cfg, objective, &mut state, |_, _| Ok(()))?;
    Ok((state.policy, state.stats, reports))
}
