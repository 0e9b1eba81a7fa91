//! Linear voltage-sensitivity model of a radial multi-phase feeder.
//!
//! Per phase, `v = v_source + R p + X q` with `p`, `q` the net nodal
//! injections in kW / kVAR. For a radial network the sensitivity between two
//! nodes is the impedance of the path they share back to the substation, so
//! both matrices are symmetric, entrywise non-negative and positive
//! semidefinite.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feeder layout and electrical parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeederConfig {
    /// Parent of each node; `-1` marks a node fed directly from the substation.
    pub parents: Vec<i64>,
    /// Relative length of the line feeding each node.
    pub line_lengths: Vec<f64>,
    /// Resistive sensitivity per unit line length, pu voltage per kW.
    pub r_per_kw: f64,
    /// Reactive sensitivity per unit line length, pu voltage per kVAR.
    pub x_per_kw: f64,
    /// Nominal load per node and phase, kW.
    pub nominal_load_kw: f64,
    /// Per-node load multipliers (fixed layout heterogeneity).
    pub node_load_weights: Vec<f64>,
    /// Sensitivity multiplier per phase, starting at the regulator phase.
    pub phase_scale: [f64; 3],
    /// Substation voltage per phase, starting at the regulator phase.
    pub v_source: [f64; 3],
}

impl Default for FeederConfig {
    fn default() -> Self {
        Self {
            parents: vec![-1, 0, 1, 2, 3, 1, 5, 3, 4, 8],
            line_lengths: vec![1.0; 10],
            r_per_kw: 1.0e-4,
            x_per_kw: 2.0e-4,
            nominal_load_kw: 30.0,
            node_load_weights: vec![1.0, 0.8, 1.2, 1.0, 0.9, 1.1, 1.0, 0.8, 1.2, 1.0],
            phase_scale: [1.0, 1.05, 0.95],
            v_source: [1.0, 1.0, 1.0],
        }
    }
}

impl FeederConfig {
    pub fn n_nodes(&self) -> usize {
        self.parents.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.parents.len();
        if n == 0 {
            return Err(Error::InvalidConfig("feeder.parents must name at least one node".into()));
        }
        if self.line_lengths.len() != n || self.node_load_weights.len() != n {
            return Err(Error::InvalidConfig(format!(
                "feeder.line_lengths and feeder.node_load_weights need {n} entries"
            )));
        }
        for (i, &p) in self.parents.iter().enumerate() {
            if p < -1 || p >= i as i64 {
                return Err(Error::InvalidConfig(format!(
                    "feeder.parents[{i}] = {p}: parents must precede their children (or be -1)"
                )));
            }
        }
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("feeder.{name} = {x} must be positive")))
            }
        };
        positive("r_per_kw", self.r_per_kw)?;
        positive("x_per_kw", self.x_per_kw)?;
        positive("nominal_load_kw", self.nominal_load_kw)?;
        for &x in self.line_lengths.iter().chain(&self.node_load_weights).chain(&self.phase_scale) {
            positive("line_lengths/node_load_weights/phase_scale entry", x)?;
        }
        for &v in &self.v_source {
            if !(0.9..=1.1).contains(&v) {
                return Err(Error::InvalidConfig(format!("feeder.v_source entry {v} outside [0.9, 1.1]")));
            }
        }
        Ok(())
    }
}

/// Per-phase sensitivity matrices, phases indexed relative to the regulator phase.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederModel {
    n_nodes: usize,
    /// Row-major `n x n` matrices, one per relative phase.
    sens_r: [Vec<f64>; 3],
    sens_x: [Vec<f64>; 3],
    v_source: [f64; 3],
}

impl FeederModel {
    pub fn from_config(cfg: &FeederConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_nodes();
        // Ancestors (including self) of each node as a membership table.
        let mut on_path = vec![vec![false; n]; n];
        for i in 0..n {
            let mut k = i as i64;
            while k >= 0 {
                on_path[i][k as usize] = true;
                k = cfg.parents[k as usize];
            }
        }
        let mut shared = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                shared[i * n + j] = (0..n)
                    .filter(|&l| on_path[i][l] && on_path[j][l])
                    .map(|l| cfg.line_lengths[l])
                    .sum();
            }
        }
        let scaled = |unit: f64, s: f64| shared.iter().map(|z| z * unit * s).collect::<Vec<_>>();
        Ok(Self {
            n_nodes: n,
            sens_r: cfg.phase_scale.map(|s| scaled(cfg.r_per_kw, s)),
            sens_x: cfg.phase_scale.map(|s| scaled(cfg.x_per_kw, s)),
            v_source: cfg.v_source,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn sens_r(&self, phase: usize) -> &[f64] {
        &self.sens_r[phase]
    }

    pub fn sens_x(&self, phase: usize) -> &[f64] {
        &self.sens_x[phase]
    }

    pub fn v_source(&self, phase: usize) -> f64 {
        self.v_source[phase]
    }

    /// Voltage deviation from the source for net injections `p`, `q` (one value per node).
    pub fn deviation(&self, phase: usize, p: &[f64], q: &[f64], out: &mut [f64]) {
        let n = self.n_nodes;
        let (r, x) = (&self.sens_r[phase], &self.sens_x[phase]);
        for i in 0..n {
            let row = i * n..(i + 1) * n;
            let dv: f64 = r[row.clone()].iter().zip(p).map(|(a, b)| a * b).sum::<f64>()
                + x[row].iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
            out[i] = dv;
        }
    }

    /// Nodal voltages for net injections on one phase.
    pub fn voltages(&self, phase: usize, p: &[f64], q: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes];
        self.deviation(phase, p, q, &mut out);
        out.iter_mut().for_each(|v| *v += self.v_source[phase]);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cholesky_ok(a: &[f64], n: usize) -> bool {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
                if i == j {
                    let d = a[i * n + i] - s;
                    if d <= 0.0 {
                        return false;
                    }
                    l[i * n + i] = d.sqrt();
                } else {
                    l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
                }
            }
        }
        true
    }

    #[test]
    fn sensitivities_are_symmetric_nonnegative_psd() {
        let cfg = FeederConfig::default();
        let m = FeederModel::from_config(&cfg).unwrap();
        let n = m.n_nodes();
        for ph in 0..3 {
            for mat in [m.sens_r(ph), m.sens_x(ph)] {
                for i in 0..n {
                    for j in 0..n {
                        assert!(mat[i * n + j] >= 0.0);
                        assert_eq!(mat[i * n + j], mat[j * n + i]);
                    }
                }
                assert!(cholesky_ok(mat, n));
            }
        }
    }

    #[test]
    fn shared_path_sensitivity() {
        // Chain 0 <- 1 <- 2, unit lengths.
        let cfg = FeederConfig {
            parents: vec![-1, 0, 1],
            line_lengths: vec![1.0; 3],
            node_load_weights: vec![1.0; 3],
            r_per_kw: 1.0,
            x_per_kw: 2.0,
            phase_scale: [1.0; 3],
            ..FeederConfig::default()
        };
        let m = FeederModel::from_config(&cfg).unwrap();
        assert_eq!(m.sens_r(0), &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 1.0, 2.0, 3.0]);
        assert_eq!(m.sens_x(0)[8], 6.0);
    }

    #[test]
    fn voltage_model_is_linear() {
        let m = FeederModel::from_config(&FeederConfig::default()).unwrap();
        let p: Vec<f64> = (0..10).map(|i| (i as f64 - 4.0) * 3.0).collect();
        let q: Vec<f64> = (0..10).map(|i| (i as f64).sin() * 5.0).collect();
        let p2: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
        let q2: Vec<f64> = q.iter().map(|x| 2.0 * x).collect();
        let (mut d1, mut d2) = (vec![0.0; 10], vec![0.0; 10]);
        m.deviation(1, &p, &q, &mut d1);
        m.deviation(1, &p2, &q2, &mut d2);
        for i in 0..10 {
            assert_eq!(d2[i], 2.0 * d1[i]);
        }
        let v = m.voltages(1, &p, &q);
        assert!((v[9] - m.v_source(1) - d1[9]).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_topology() {
        let cfg = FeederConfig {
            parents: vec![-1, 2, 0],
            line_lengths: vec![1.0; 3],
            node_load_weights: vec![1.0; 3],
            ..FeederConfig::default()
        };
        assert!(FeederModel::from_config(&cfg).is_err());
    }
}
