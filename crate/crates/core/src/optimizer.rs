//! Parameter update rules: Adam and plain gradient ascent.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_ADAM_EPS: f64 = 1e-8;

/// Moment accumulators for Adam.
///
/// `step` counts completed updates; the next call to [`AdamState::step`] is
/// update number `step + 1` and uses that exponent for bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self::with_rates(dim, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_ADAM_EPS)
    }

    pub fn with_rates(dim: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidConfig(format!("{name} = {b} must lie in (0, 1)")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidConfig(format!("adam eps = {} must be positive", self.eps)));
        }
        Ok(())
    }

    /// One descent step: returns `theta - alpha * m_hat / (sqrt(v_hat) + eps)`.
    ///
    /// The state is only modified when the step succeeds.
    pub fn step(&mut self, theta: &[f64], g: &[f64], alpha: f64) -> Result<Vec<f64>> {
        check_len("adam gradient", theta.len(), g.len())?;
        check_len("adam moments", theta.len(), self.m.len())?;
        check_finite("adam gradient", g)?;
        if !(alpha > 0.0) {
            return Err(Error::InvalidConfig(format!("step size {alpha} must be positive")));
        }
        let j = self.step + 1;
        let c1 = 1.0 - self.beta1.powf(j as f64);
        let c2 = 1.0 - self.beta2.powf(j as f64);
        let mut out = Vec::with_capacity(theta.len());
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            out.push(theta[i] - alpha * m_hat / (v_hat.sqrt() + self.eps));
        }
        self.step = j;
        Ok(out)
    }

    /// Ascent on `g` through the descent rule above (feeds it `-g`).
    pub fn ascent_step(&mut self, theta: &[f64], g: &[f64], alpha: f64) -> Result<Vec<f64>> {
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        self.step(theta, &neg, alpha)
    }
}

/// Functional wrapper around [`AdamState::step`].
pub fn adam_step(state: &AdamState, theta: &[f64], g: &[f64], alpha: f64) -> Result<(Vec<f64>, AdamState)> {
    let mut next = state.clone();
    let theta = next.step(theta, g, alpha)?;
    Ok((theta, next))
}

/// `theta + alpha * g`.
pub fn sgd_ascent_step(theta: &[f64], g: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_len("gradient", theta.len(), g.len())?;
    check_finite("gradient", g)?;
    Ok(theta.iter().zip(g).map(|(t, gi)| t + alpha * gi).collect())
}
