//! Linear and small-MLP policies over normalized observations.
//!
//! Parameters live in one flat vector so the search can perturb them as a
//! single point. Linear policies store a row-major `act_dim x obs_dim` matrix;
//! MLPs store, per layer, a row-major weight matrix followed by its biases.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};

/// Bound on every action component, in per-unit voltage.
pub const ACTION_BOUND: f64 = 0.1;
/// Hidden layer widths of the MLP policy.
pub const MLP_HIDDEN: [usize; 2] = [16, 16];
/// Default floor applied to normalizer variances.
pub const VAR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Linear,
    Mlp,
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicyKind::Linear => f.write_str("linear"),
            PolicyKind::Mlp => f.write_str("mlp"),
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(PolicyKind::Linear),
            "mlp" | "nn" => Ok(PolicyKind::Mlp),
            other => Err(Error::InvalidConfig(format!("unknown policy kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub kind: PolicyKind,
    /// Layer sizes from input to output, e.g. `[9, 3]` or `[9, 16, 16, 3]`.
    pub shape: Vec<usize>,
    pub theta: Vec<f64>,
    pub action_bound: f64,
}

fn param_count(kind: PolicyKind, shape: &[usize]) -> usize {
    match kind {
        PolicyKind::Linear => shape[0] * shape[1],
        PolicyKind::Mlp => shape.windows(2).map(|w| w[0] * w[1] + w[1]).sum(),
    }
}

impl PolicyParams {
    /// Zero-initialized policy.
    pub fn zeros(kind: PolicyKind, obs_dim: usize, act_dim: usize) -> Self {
        let shape = match kind {
            PolicyKind::Linear => vec![obs_dim, act_dim],
            PolicyKind::Mlp => {
                let mut s = vec![obs_dim];
                s.extend_from_slice(&MLP_HIDDEN);
                s.push(act_dim);
                s
            }
        };
        let n = param_count(kind, &shape);
        Self {
            kind,
            shape,
            theta: vec![0.0; n],
            action_bound: ACTION_BOUND,
        }
    }

    /// Builds a policy from explicit parameters, checking the layout.
    pub fn from_parts(kind: PolicyKind, shape: Vec<usize>, theta: Vec<f64>, action_bound: f64) -> Result<Self> {
        let min_layers = match kind {
            PolicyKind::Linear => 2,
            PolicyKind::Mlp => 2,
        };
        if shape.len() < min_layers || (kind == PolicyKind::Linear && shape.len() != 2) {
            return Err(Error::InvalidConfig(format!("bad {kind} shape {shape:?}")));
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig(format!("zero-width layer in shape {shape:?}")));
        }
        if !(action_bound > 0.0) {
            return Err(Error::InvalidConfig(format!("action bound {action_bound} must be positive")));
        }
        check_len("policy theta", param_count(kind, &shape), theta.len())?;
        check_finite("policy theta", &theta)?;
        Ok(Self {
            kind,
            shape,
            theta,
            action_bound,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.shape[0]
    }

    pub fn act_dim(&self) -> usize {
        *self.shape.last().expect("shape has at least two layers")
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        check_len("policy theta", self.theta.len(), theta.len())?;
        Ok(Self {
            theta,
            ..self.clone()
        })
    }

    /// Action for a raw observation, normalized with `stats`.
    pub fn evaluate(&self, stats: &NormalizerStats, obs: &[f64]) -> Result<Vec<f64>> {
        check_len("observation", self.obs_dim(), obs.len())?;
        check_len("normalizer", self.obs_dim(), stats.dim())?;
        let x = stats.normalize(obs);
        Ok(self.forward(&x))
    }

    /// Forward pass on an already-normalized input.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let bound = self.action_bound;
        match self.kind {
            PolicyKind::Linear => {
                let (n_in, n_out) = (self.shape[0], self.shape[1]);
                (0..n_out)
                    .map(|r| {
                        let row = &self.theta[r * n_in..(r + 1) * n_in];
                        dot(row, x).clamp(-bound, bound)
                    })
                    .collect()
            }
            PolicyKind::Mlp => {
                let mut h = x.to_vec();
                let mut offset = 0;
                for w in self.shape.windows(2) {
                    let (n_in, n_out) = (w[0], w[1]);
                    let weights = &self.theta[offset..offset + n_in * n_out];
                    let biases = &self.theta[offset + n_in * n_out..offset + n_in * n_out + n_out];
                    offset += n_in * n_out + n_out;
                    h = (0..n_out)
                        .map(|r| (dot(&weights[r * n_in..(r + 1) * n_in], &h) + biases[r]).tanh())
                        .collect();
                }
                h.into_iter().map(|y| bound * y).collect()
            }
        }
    }

    /// Returns `theta + sign * nu * delta` as a new policy.
    pub fn perturb(&self, delta: &[f64], nu: f64, sign: f64) -> Result<Self> {
        check_len("perturbation", self.theta.len(), delta.len())?;
        if !(nu >= 0.0) || !nu.is_finite() {
            return Err(Error::InvalidConfig(format!("exploration noise {nu} must be non-negative")));
        }
        let theta = self
            .theta
            .iter()
            .zip(delta)
            .map(|(t, d)| t + sign * nu * d)
            .collect();
        Ok(Self {
            theta,
            ..self.clone()
        })
    }

    pub fn theta_norm(&self) -> f64 {
        norm(&self.theta)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Running per-component mean and variance of observed states.
///
/// Uses Welford updates and Chan's pairwise merge so that per-rollout
/// accumulators can be combined after the fact. With no samples the
/// statistics are the identity transform (zero mean, unit variance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizerStats {
    pub count: u64,
    pub mean: Vec<f64>,
    /// Sum of squared deviations from the mean.
    pub m2: Vec<f64>,
    pub var_floor: f64,
}

impl NormalizerStats {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            var_floor: VAR_FLOOR,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Population variance per component, floored. Unit variance before any data.
    pub fn var(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![1.0; self.dim()];
        }
        let n = self.count as f64;
        self.m2.iter().map(|m| (m / n).max(self.var_floor)).collect()
    }

    pub fn normalize(&self, obs: &[f64]) -> Vec<f64> {
        if self.count == 0 {
            return obs.to_vec();
        }
        let n = self.count as f64;
        obs.iter()
            .zip(self.mean.iter().zip(&self.m2))
            .map(|(x, (mu, m2))| (x - mu) / (m2 / n).max(self.var_floor).sqrt())
            .collect()
    }

    pub fn push(&mut self, state: &[f64]) {
        debug_assert_eq!(state.len(), self.dim());
        self.count += 1;
        let n = self.count as f64;
        for ((mu, m2), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(state) {
            let d = x - *mu;
            *mu += d / n;
            *m2 += d * (x - *mu);
        }
    }

    /// Absorbs every state in `states`.
    pub fn update(&mut self, states: &[Vec<f64>]) -> Result<()> {
        for s in states {
            check_len("state", self.dim(), s.len())?;
            check_finite("state", s)?;
            self.push(s);
        }
        Ok(())
    }

    /// Combines with statistics gathered over a disjoint set of states.
    pub fn merge(&mut self, other: &NormalizerStats) -> Result<()> {
        check_len("normalizer merge", self.dim(), other.dim())?;
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            self.count = other.count;
            self.mean.clone_from(&other.mean);
            self.m2.clone_from(&other.m2);
            return Ok(());
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.dim() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.count += other.count;
        Ok(())
    }
}

/// Functional form of [`NormalizerStats::update`].
pub fn update_stats(stats: &NormalizerStats, states: &[Vec<f64>]) -> Result<NormalizerStats> {
    let mut out = stats.clone();
    out.update(states)?;
    Ok(out)
}
