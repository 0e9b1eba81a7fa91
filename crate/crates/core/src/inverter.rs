//! Smart-inverter dynamics with Volt-VAR / Volt-Watt control.
//!
//! Grid voltage passes through a measurement low-pass, the Volt-Watt curve
//! fixes the active power setpoint first, the remaining apparent-power
//! headroom bounds the Volt-VAR setpoint, and both setpoints pass through an
//! output low-pass before being injected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::LowPass;

/// Default breakpoints in per-unit voltage.
pub const DEFAULT_ETA: [f64; 5] = [0.95, 0.98, 1.02, 1.05, 1.08];
/// Largest magnitude allowed for a defender's curve offset.
pub const MAX_OFFSET: f64 = 0.1;
/// Compromised inverters are not held to the defender's action range.
pub const MAX_ATTACK_OFFSET: f64 = 0.3;

/// Five-breakpoint Volt-VAR / Volt-Watt curve plus a uniform offset.
///
/// Volt-VAR uses `eta[0..4]`, Volt-Watt uses `eta[3..5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VvwCurve {
    eta: [f64; 5],
    offset: f64,
}

impl Default for VvwCurve {
    fn default() -> Self {
        Self {
            eta: DEFAULT_ETA,
            offset: 0.0,
        }
    }
}

impl VvwCurve {
    pub fn new(eta: [f64; 5], offset: f64) -> Result<Self> {
        Self::build(eta, offset, MAX_OFFSET)
    }

    /// Curve written by an attacker: the offset may reach [`MAX_ATTACK_OFFSET`].
    pub fn attacked(eta: [f64; 5], offset: f64) -> Result<Self> {
        Self::build(eta, offset, MAX_ATTACK_OFFSET)
    }

    fn build(eta: [f64; 5], offset: f64, bound: f64) -> Result<Self> {
        if eta.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidCurve(format!("non-finite breakpoint in {eta:?}")));
        }
        if !(eta[0] < eta[1] && eta[1] <= eta[2] && eta[2] < eta[3] && eta[3] < eta[4]) {
            return Err(Error::InvalidCurve(format!(
                "breakpoints {eta:?} must satisfy e1 < e2 <= e3 < e4 < e5"
            )));
        }
        if !(offset.abs() <= bound) {
            return Err(Error::InvalidCurve(format!("offset {offset} outside [-{bound}, {bound}]")));
        }
        Ok(Self { eta, offset })
    }

    pub fn eta(&self) -> [f64; 5] {
        self.eta
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Same breakpoints, different offset.
    pub fn with_offset(&self, offset: f64) -> Result<Self> {
        Self::new(self.eta, offset)
    }

    /// Fraction of available VARs, +1 (inject) to -1 (absorb).
    pub fn var_fraction(&self, v: f64) -> f64 {
        let x = v - self.offset;
        let [e1, e2, e3, e4, _] = self.eta;
        if x <= e1 {
            1.0
        } else if x < e2 {
            (e2 - x) / (e2 - e1)
        } else if x <= e3 {
            0.0
        } else if x < e4 {
            -(x - e3) / (e4 - e3)
        } else {
            -1.0
        }
    }

    /// Fraction of available active power allowed, 1 down to 0.
    pub fn watt_fraction(&self, v: f64) -> f64 {
        let x = v - self.offset;
        let [_, _, _, e4, e5] = self.eta;
        if x <= e4 {
            1.0
        } else if x < e5 {
            (e5 - x) / (e5 - e4)
        } else {
            0.0
        }
    }
}

/// Reactive power setpoint (kVAR) for a measured voltage.
pub fn vv_setpoint(curve: &VvwCurve, v_meas: f64, q_capacity: f64) -> f64 {
    curve.var_fraction(v_meas) * q_capacity
}

/// Active power setpoint (kW) for a measured voltage.
pub fn vw_setpoint(curve: &VvwCurve, v_meas: f64, p_avail: f64) -> f64 {
    curve.watt_fraction(v_meas) * p_avail
}

/// Ratings and filter time constants of one inverter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverterParams {
    /// Apparent power rating, kVA.
    pub s_rating: f64,
    /// Measurement filter time constant, s.
    pub tau_meas: f64,
    /// Output filter time constant, s.
    pub tau_out: f64,
}

/// Observable state of one inverter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverterState {
    pub v_meas: f64,
    pub p_out: f64,
    pub q_out: f64,
    pub s_rating: f64,
    pub p_avail: f64,
}

#[derive(Debug, Clone)]
pub struct Inverter {
    params: InverterParams,
    meas: LowPass,
    p_filter: LowPass,
    q_filter: LowPass,
    p_avail: f64,
    q_avail: f64,
    setpoints: (f64, f64),
}

impl Inverter {
    /// Starts settled at `v_init`, producing all available active power and no VARs.
    pub fn new(params: InverterParams, p_avail: f64, v_init: f64) -> Self {
        let p0 = p_avail.clamp(0.0, params.s_rating);
        Self {
            params,
            meas: LowPass::new(params.tau_meas, v_init),
            p_filter: LowPass::new(params.tau_out, p0),
            q_filter: LowPass::new(params.tau_out, 0.0),
            p_avail: p0,
            q_avail: (params.s_rating.powi(2) - p0 * p0).max(0.0).sqrt(),
            setpoints: (p0, 0.0),
        }
    }

    pub fn params(&self) -> &InverterParams {
        &self.params
    }

    pub fn set_p_avail(&mut self, p_avail: f64) {
        self.p_avail = p_avail.clamp(0.0, self.params.s_rating);
    }

    pub fn state(&self) -> InverterState {
        InverterState {
            v_meas: self.meas.output(),
            p_out: self.p_filter.output(),
            q_out: self.q_filter.output(),
            s_rating: self.params.s_rating,
            p_avail: self.p_avail,
        }
    }

    pub fn p_out(&self) -> f64 {
        self.p_filter.output()
    }

    pub fn q_out(&self) -> f64 {
        self.q_filter.output()
    }

    /// VAR headroom left after the last active power setpoint.
    pub fn q_avail(&self) -> f64 {
        self.q_avail
    }

    /// Last `(u_p, u_q)` setpoints handed to the output filter.
    pub fn setpoints(&self) -> (f64, f64) {
        self.setpoints
    }

    /// Advances one tick of length `dt` against grid voltage `v_grid`; returns `(p, q)`.
    pub fn step(&mut self, curve: &VvwCurve, v_grid: f64, dt: f64) -> (f64, f64) {
        let v_meas = self.meas.step(v_grid, dt);
        let u_p = vw_setpoint(curve, v_meas, self.p_avail);
        let s = self.params.s_rating;
        self.q_avail = (s * s - u_p * u_p).max(0.0).sqrt();
        let u_q = vv_setpoint(curve, v_meas, self.q_avail);
        self.setpoints = (u_p, u_q);
        // Both outputs share one smoothing coefficient, so (p, q) moves along a
        // chord of the capacity disk and stays inside it.
        let p = self.p_filter.step(u_p, dt).min(self.p_avail);
        let q = self.q_filter.step(u_q, dt);
        (p, q)
    }
}
