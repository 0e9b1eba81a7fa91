//! First-order discrete filters shared by the inverter and observer models.
//!
//! The low-pass is `y_t = (1 - k) y_{t-1} + k u_t` with `k = dt / (tau + dt)`,
//! which has unity DC gain and is stable for any `tau >= 0`, `dt > 0`.
//! The high-pass is the input minus its own low-pass.

use std::f64::consts::PI;

/// Smoothing coefficient for a time constant `tau` (s) and step `dt` (s).
pub fn smoothing(tau: f64, dt: f64) -> f64 {
    debug_assert!(dt > 0.0 && tau >= 0.0);
    dt / (tau + dt)
}

/// Time constant of a first-order section with the given cutoff (Hz).
pub fn time_constant(cutoff_hz: f64) -> f64 {
    1.0 / (2.0 * PI * cutoff_hz)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowPass {
    tau: f64,
    y: f64,
    // Smoothing coefficient cached for the last step length seen.
    k: f64,
    k_dt: f64,
}

impl LowPass {
    pub fn new(tau: f64, initial: f64) -> Self {
        Self { tau, y: initial, k: f64::NAN, k_dt: f64::NAN }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn from_cutoff(cutoff_hz: f64, initial: f64) -> Self {
        Self::new(time_constant(cutoff_hz), initial)
    }

    pub fn step(&mut self, u: f64, dt: f64) -> f64 {
        if dt != self.k_dt {
            self.k = smoothing(self.tau, dt);
            self.k_dt = dt;
        }
        self.y += self.k * (u - self.y);
        self.y
    }

    pub fn output(&self) -> f64 {
        self.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighPass {
    lp: LowPass,
    y: f64,
}

impl HighPass {
    /// `initial` is the input level the filter is assumed to have settled on.
    pub fn from_cutoff(cutoff_hz: f64, initial: f64) -> Self {
        Self {
            lp: LowPass::from_cutoff(cutoff_hz, initial),
            y: 0.0,
        }
    }

    pub fn step(&mut self, u: f64, dt: f64) -> f64 {
        self.y = u - self.lp.step(u, dt);
        self.y
    }

    pub fn output(&self) -> f64 {
        self.y
    }

    pub fn tracked_level(&self) -> f64 {
        self.lp.output()
    }
}
