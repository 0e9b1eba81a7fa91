//! Multi-seed algorithm comparison and learning-curve metrics.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::env::{run_episode, EnvConfig, EnvObjective, EpisodeSummary, FeederEnv, Scenario, ACT_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::policy::{NormalizerStats, PolicyParams};
use crate::trainer::{train, Algorithm, IterationReport};

pub const COMPARE_HEADER: &str = "epoch,algo,mean,std";

/// Across-seed summary of one algorithm at one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub epoch: u64,
    pub algo: Algorithm,
    pub mean: f64,
    /// Population standard deviation across seeds.
    pub std: f64,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub algo: Algorithm,
    pub seed: u64,
    /// Trained policy, its normalizer and the per-epoch reports.
    pub result: Result<(PolicyParams, NormalizerStats, Vec<IterationReport>)>,
}

#[derive(Debug)]
pub struct Comparison {
    pub runs: Vec<RunOutcome>,
    pub rows: Vec<CompareRow>,
}

impl Comparison {
    /// Per-epoch mean rewards of every successful run of `algo`, in seed order.
    pub fn curves(&self, algo: Algorithm) -> Vec<(u64, Vec<f64>)> {
        self.runs
            .iter()
            .filter(|r| r.algo == algo)
            .filter_map(|r| r.result.as_ref().ok().map(|(_, _, rep)| (r.seed, rep.iter().map(|x| x.mean_reward).collect())))
            .collect()
    }

    pub fn rows_for(&self, algo: Algorithm) -> impl Iterator<Item = &CompareRow> {
        self.rows.iter().filter(move |r| r.algo == algo)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{COMPARE_HEADER}")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.epoch, r.algo, r.mean, r.std)?;
        }
        Ok(())
    }
}

/// Trains every `(algo, seed)` cell from zero weights and summarizes the
/// learning curves. Failed cells are kept in `runs` and left out of `rows`.
pub fn compare(cfg: &RunConfig, algos: &[Algorithm], seeds: &[u64]) -> Result<Comparison> {
    if algos.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidConfig("compare needs at least one algorithm and one seed".into()));
    }
    cfg.validate()?;
    let objective = EnvObjective::new(cfg.env.clone())?;
    let cells: Vec<(Algorithm, u64)> = algos.iter().flat_map(|&a| seeds.iter().map(move |&s| (a, s))).collect();
    let runs: Vec<RunOutcome> = cells
        .par_iter()
        .map(|&(algo, seed)| {
            let mut t = cfg.train_config(algo);
            t.seed = seed;
            let policy = PolicyParams::zeros(cfg.policy, OBS_DIM, ACT_DIM);
            let result = train(&t, &objective, policy);
            if let Err(e) = &result {
                log::warn!("{algo} seed {seed} failed and is excluded: {e}");
            }
            RunOutcome { algo, seed, result }
        })
        .collect();

    let mut rows = Vec::new();
    for &algo in algos {
        let curves: Vec<Vec<f64>> = runs
            .iter()
            .filter(|r| r.algo == algo)
            .filter_map(|r| r.result.as_ref().ok().map(|(_, _, rep)| rep.iter().map(|x| x.mean_reward).collect()))
            .collect();
        let epochs = curves.iter().map(Vec::len).min().unwrap_or(0);
        for e in 0..epochs {
            let xs: Vec<f64> = curves.iter().map(|c| c[e]).collect();
            let (mean, std) = mean_std(&xs);
            rows.push(CompareRow { epoch: e as u64, algo, mean, std });
        }
    }
    Ok(Comparison { runs, rows })
}

/// One deterministic closed-loop episode of `policy` on `scenario`.
pub fn evaluate(
    env: &EnvConfig,
    policy: &PolicyParams,
    stats: &NormalizerStats,
    scenario: Scenario,
    record_trace: bool,
) -> Result<EpisodeSummary> {
    let mut e = FeederEnv::from_config(env.clone(), scenario)?;
    run_episode(&mut e, policy, stats, record_trace)
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trailing moving average with window `w` (shorter at the start).
pub fn smooth(xs: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    (0..xs.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            xs[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// First epoch at which the `smoothing`-epoch trailing mean closes `fraction`
/// of the gap between the first epoch's reward and the final level (mean of
/// the last `final_window` epochs). `None` when the curve never gets there.
///
/// A curve that ends no better than it started counts as converged at 0.
pub fn convergence_epoch(rewards: &[f64], fraction: f64, final_window: usize, smoothing: usize) -> Option<usize> {
    if rewards.is_empty() {
        return None;
    }
    let w = final_window.clamp(1, rewards.len());
    let fin = rewards[rewards.len() - w..].iter().sum::<f64>() / w as f64;
    let start = rewards[0];
    if fin <= start {
        return Some(0);
    }
    let target = start + fraction * (fin - start);
    smooth(rewards, smoothing).iter().position(|&r| r >= target)
}

pub fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convergence_of_a_ramp() {
        let r: Vec<f64> = (0..100).map(|e| if e < 50 { -100.0 + 2.0 * e as f64 } else { 0.0 }).collect();
        // 95% of the gap from -100 to 0 is -5, first reached at e = 48.
        assert_eq!(convergence_epoch(&r, 0.95, 10, 1), Some(48));
        assert_eq!(convergence_epoch(&[-1.0, -2.0, -3.0], 0.95, 1, 1), Some(0));
    }

    #[test]
    fn smoothing_and_stats() {
        assert_eq!(smooth(&[1.0, 3.0, 5.0], 2), vec![1.0, 2.0, 4.0]);
        assert_eq!(mean_std(&[2.0, 4.0]), (3.0, 1.0));
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn single_seed_has_zero_std() {
        let mut cfg = RunConfig::preset(crate::config::Task::Oscillation);
        cfg.train.epochs = 2;
        cfg.train.n_directions = 2;
        cfg.train.top_b = 1;
        cfg.train.episodes_per_iteration = 1;
        let c = compare(&cfg, &[Algorithm::Ars, Algorithm::AdamArs], &[4]).unwrap();
        assert_eq!(c.rows.len(), 4);
        assert!(c.rows.iter().all(|r| r.std == 0.0));
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("epoch,algo,mean,std\n0,ars,"));
    }
}
