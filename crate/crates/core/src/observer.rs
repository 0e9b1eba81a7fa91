//! Attack-intensity signals: oscillation energy and phase imbalance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{HighPass, LowPass};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoParams {
    /// Gain of the squaring stage.
    pub c: f64,
    pub hp_cutoff_hz: f64,
    pub lp_cutoff_hz: f64,
}

impl Default for VoParams {
    fn default() -> Self {
        Self {
            c: 100.0,
            hp_cutoff_hz: 0.05,
            lp_cutoff_hz: 0.2,
        }
    }
}

/// High-pass, `c * x^2`, low-pass cascade over one voltage signal.
///
/// The output is non-negative: the low-pass is a convex blend of its previous
/// output and a squared input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoFilter {
    hp: HighPass,
    lp: LowPass,
    c: f64,
}

impl VoFilter {
    /// Filter settled on a constant voltage `v_init`.
    pub fn new(params: &VoParams, v_init: f64) -> Self {
        Self {
            hp: HighPass::from_cutoff(params.hp_cutoff_hz, v_init),
            lp: LowPass::from_cutoff(params.lp_cutoff_hz, 0.0),
            c: params.c,
        }
    }

    pub fn step(&mut self, v: f64, dt: f64) -> f64 {
        let dv = self.hp.step(v, dt);
        self.lp.step(self.c * dv * dv, dt)
    }

    pub fn output(&self) -> f64 {
        self.lp.output()
    }
}

/// Largest per-phase deviation from the three-phase mean, relative to that mean.
pub fn vi_metric(va: f64, vb: f64, vc: f64) -> Result<f64> {
    for (phase, v) in [va, vb, vc].into_iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NonPositiveVoltage { phase, value: v });
        }
    }
    // Sorting first makes the result exactly invariant to phase order.
    let mut v = [va, vb, vc];
    v.sort_by(f64::total_cmp);
    if v[0] == v[2] {
        // Balanced; skip the mean, whose rounding could leave a residue.
        return Ok(0.0);
    }
    let mean = (v[0] + v[1] + v[2]) / 3.0;
    let dev = (mean - v[0]).abs().max((v[2] - mean).abs());
    Ok(dev / mean)
}
