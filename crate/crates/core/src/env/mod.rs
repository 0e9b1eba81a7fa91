//! Episodic feeder environment with defended and compromised smart inverters.

pub mod config;
pub mod feeder;
pub mod objective;
pub mod scenario;
pub mod trace;

use std::sync::Arc;

use rand::Rng;

pub use config::{AttackConfig, AttackKind, EnvConfig, InverterConfig, RewardWeights, ScenarioBands};
pub use feeder::{FeederConfig, FeederModel};
pub use objective::{run_episode, EnvObjective, EpisodeSummary};
pub use scenario::{randomize_scenario, Phase, Scenario};
pub use trace::{EpisodeTrace, TraceRow, TRACE_HEADER};

use crate::error::{Error, Result};
use crate::inverter::{Inverter, InverterParams, VvwCurve};
use crate::observer::{vi_metric, VoFilter};
use crate::policy::ACTION_BOUND;
use crate::rng::{stream, Purpose};

pub const OBS_DIM: usize = 9;
pub const ACT_DIM: usize = 3;

/// Guard band for the linear voltage model.
const V_GUARD: (f64, f64) = (0.8, 1.2);

/// What the agent sees at each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Worst imbalance over nodes.
    pub vi: f64,
    /// Worst oscillation signal over node-phases.
    pub vo: f64,
    /// Mean uncurtailed VAR headroom of defended inverters, as a fraction of rating.
    pub q_avail_nom: f64,
    pub a_prev: [f64; 3],
    /// Phase voltages at the node with the largest imbalance.
    pub v_phase: [f64; 3],
}

impl Observation {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(OBS_DIM);
        out.extend([self.vi, self.vo, self.q_avail_nom]);
        out.extend(self.a_prev);
        out.extend(self.v_phase);
        out
    }
}

/// Penalty terms of one step, each non-negative. The reward is minus their sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RewardTerms {
    pub imbalance: f64,
    pub oscillation: f64,
    pub action_change: f64,
    pub action_magnitude: f64,
    pub curtailment: f64,
}

impl RewardTerms {
    pub fn reward(&self) -> f64 {
        -(self.imbalance + self.oscillation + self.action_change + self.action_magnitude + self.curtailment)
    }
}

/// Per-step penalty terms.
///
/// `curtailment` yields `(p, p_max)` for each defended inverter; inverters with
/// `p_max` below `w.p_max_eps` are skipped but still count towards `|U|`.
pub fn reward_terms(
    w: &RewardWeights,
    vi_max: f64,
    vo_max: f64,
    action: &[f64; 3],
    prev: &[f64; 3],
    curtailment: impl IntoIterator<Item = (f64, f64)>,
) -> RewardTerms {
    let mut n = 0usize;
    let mut sq = 0.0;
    for (p, p_max) in curtailment {
        n += 1;
        if p_max >= w.p_max_eps {
            let c = 1.0 - p / p_max;
            sq += c * c;
        }
    }
    RewardTerms {
        imbalance: w.sigma_u * vi_max,
        oscillation: w.sigma_y * vo_max,
        action_change: w.sigma_a * action.iter().zip(prev).filter(|(a, b)| a != b).count() as f64,
        action_magnitude: w.sigma_0 * action.iter().map(|a| a.abs()).sum::<f64>(),
        curtailment: if n > 0 { w.sigma_p * sq / n as f64 } else { 0.0 },
    }
}

/// Result of one [`FeederEnv::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub obs: Observation,
    pub reward: f64,
    pub terms: RewardTerms,
    pub done: bool,
}

/// One inverter slot: a node and an absolute phase.
#[derive(Debug, Clone)]
struct Slot {
    node: usize,
    phase: usize,
    inv: Inverter,
}

#[derive(Debug, Clone)]
pub struct FeederEnv {
    cfg: Arc<EnvConfig>,
    model: Arc<FeederModel>,
    scenario: Scenario,
    default_curve: VvwCurve,
    oscillation_curve: VvwCurve,
    imbalance_curves: [VvwCurve; 3],
    defended: Vec<Slot>,
    compromised: Vec<Slot>,
    /// Load per node, indexed `[phase][node]`, kW.
    load: [Vec<f64>; 3],
    /// Voltage per node, indexed `[phase][node]`.
    v: [Vec<f64>; 3],
    vo: Vec<VoFilter>,
    compromised_curves: [VvwCurve; 3],
    defended_curves: [VvwCurve; 3],
    attack_on: bool,
    action: [f64; 3],
    prev_action: [f64; 3],
    q_avail_nom: f64,
    t: usize,
    clamped: u64,
    trace: Option<EpisodeTrace>,
    obs: Observation,
    // scratch
    p_buf: Vec<f64>,
    q_buf: Vec<f64>,
    dv_buf: Vec<f64>,
}

impl FeederEnv {
    pub fn new(cfg: Arc<EnvConfig>, model: Arc<FeederModel>, scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let n = model.n_nodes();
        if cfg.feeder.n_nodes() != n {
            return Err(Error::DimensionMismatch {
                what: "feeder model nodes",
                expected: cfg.feeder.n_nodes(),
                got: n,
            });
        }
        let default_curve = VvwCurve::new(cfg.inverter.default_eta, 0.0)?;
        let oscillation_curve = VvwCurve::new(cfg.attack.oscillation_eta, 0.0)?;
        let o = cfg.attack.imbalance_offsets;
        let imbalance_curves = [
            VvwCurve::attacked(cfg.inverter.default_eta, o[0])?,
            VvwCurve::attacked(cfg.inverter.default_eta, o[1])?,
            VvwCurve::attacked(cfg.inverter.default_eta, o[2])?,
        ];
        let mut rng = stream(scenario.seed, Purpose::Scenario, &[0]);
        let jitter = cfg.scenario.node_load_jitter;
        let fc = &cfg.feeder;
        let mut load: [Vec<f64>; 3] = Default::default();
        for row in load.iter_mut() {
            *row = (0..n)
                .map(|i| {
                    let j = if jitter > 0.0 { rng.random_range(-jitter..jitter) } else { 0.0 };
                    fc.nominal_load_kw * fc.node_load_weights[i] * scenario.load_scale * (1.0 + j)
                })
                .collect();
        }

        // Start from the voltages the network has with no VARs flowing.
        let f = scenario.compromised_fraction;
        let mut p = vec![0.0; n];
        let q = vec![0.0; n];
        let mut v: [Vec<f64>; 3] = Default::default();
        let solar = |i: usize| cfg.inverter.peak_fraction * fc.nominal_load_kw * fc.node_load_weights[i];
        for ph in 0..3 {
            for i in 0..n {
                p[i] = solar(i) * scenario.solar_scale - load[ph][i];
            }
            let rel = (ph + 3 - scenario.regulator_phase.index()) % 3;
            v[ph] = model.voltages(rel, &p, &q);
        }

        let params = |share: f64, i: usize| InverterParams {
            s_rating: share * cfg.inverter.oversize * solar(i),
            tau_meas: cfg.inverter.tau_meas,
            tau_out: cfg.inverter.tau_out,
        };
        let mut defended = Vec::with_capacity(3 * n);
        let mut compromised = Vec::with_capacity(3 * n);
        let mut vo = Vec::with_capacity(3 * n);
        let mut q_nom = 0.0;
        for i in 0..n {
            for ph in 0..3 {
                let p_avail = solar(i) * scenario.solar_scale;
                let d = params(1.0 - f, i);
                if d.s_rating > 0.0 {
                    let pn = (1.0 - f) * p_avail;
                    q_nom += (d.s_rating.powi(2) - pn * pn).max(0.0).sqrt() / d.s_rating;
                }
                defended.push(Slot { node: i, phase: ph, inv: Inverter::new(d, (1.0 - f) * p_avail, v[ph][i]) });
                compromised.push(Slot {
                    node: i,
                    phase: ph,
                    inv: Inverter::new(params(f, i), f * p_avail, v[ph][i]),
                });
                vo.push(VoFilter::new(&cfg.observer, v[ph][i]));
            }
        }
        let q_avail_nom = if defended.is_empty() { 0.0 } else { q_nom / defended.len() as f64 };
        let mut env = Self {
            default_curve,
            oscillation_curve,
            imbalance_curves,
            compromised_curves: [default_curve; 3],
            defended_curves: [default_curve; 3],
            attack_on: false,
            action: [0.0; 3],
            prev_action: [0.0; 3],
            q_avail_nom,
            t: 0,
            clamped: 0,
            trace: None,
            obs: Observation {
                vi: 0.0,
                vo: 0.0,
                q_avail_nom,
                a_prev: [0.0; 3],
                v_phase: [1.0; 3],
            },
            p_buf: vec![0.0; n],
            q_buf: vec![0.0; n],
            dv_buf: vec![0.0; n],
            cfg,
            model,
            scenario,
            defended,
            compromised,
            load,
            v,
            vo,
        };
        env.check_voltages()?;
        for _ in 0..env.cfg.warmup_steps {
            env.tick()?;
        }
        for (k, f) in env.vo.iter_mut().enumerate() {
            *f = VoFilter::new(&env.cfg.observer, env.v[k % 3][k / 3]);
        }
        let (vi, worst) = env.worst_imbalance()?;
        env.obs.vi = vi;
        env.obs.v_phase = [env.v[0][worst], env.v[1][worst], env.v[2][worst]];
        Ok(env)
    }

    /// Builds the feeder model from `cfg` and an environment for `scenario`.
    pub fn from_config(cfg: EnvConfig, scenario: Scenario) -> Result<Self> {
        cfg.validate()?;
        let model = Arc::new(FeederModel::from_config(&cfg.feeder)?);
        Self::new(Arc::new(cfg), model, scenario)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Steps taken so far.
    pub fn time_step(&self) -> usize {
        self.t
    }

    pub fn horizon(&self) -> usize {
        self.scenario.horizon
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.scenario.horizon
    }

    pub fn observation(&self) -> Observation {
        self.obs
    }

    /// Action currently applied to defended inverters.
    pub fn action(&self) -> [f64; 3] {
        self.action
    }

    /// Number of action components that had to be clamped into range.
    pub fn clamp_count(&self) -> u64 {
        self.clamped
    }

    /// True when the next call to [`FeederEnv::step`] latches a new action.
    pub fn at_decision(&self) -> bool {
        self.t % self.cfg.action_period == 0
    }

    pub fn voltages(&self, phase: Phase) -> &[f64] {
        &self.v[phase.index()]
    }

    pub fn attack_active(&self) -> bool {
        self.attack_on
    }

    pub fn record_trace(&mut self, on: bool) {
        self.trace = on.then(EpisodeTrace::default);
    }

    pub fn take_trace(&mut self) -> Option<EpisodeTrace> {
        self.trace.take()
    }

    /// Points compromised inverters at the attack curve inside the scenario's
    /// window and back at the defaults outside it.
    pub fn apply_attack(&mut self, scenario: &Scenario, step: usize) -> Result<()> {
        self.attack_on = scenario.attack_active(step);
        self.compromised_curves = if !self.attack_on {
            [self.default_curve; 3]
        } else {
            match scenario.attack_kind {
                AttackKind::None => [self.default_curve; 3],
                AttackKind::Oscillation => [self.oscillation_curve; 3],
                AttackKind::Imbalance => self.imbalance_curves,
            }
        };
        Ok(())
    }

    /// Advances one tick. `action` only takes effect at decision instants and
    /// is held until the next one.
    pub fn step(&mut self, action: [f64; 3]) -> Result<Step> {
        if self.is_done() {
            return Err(Error::Environment(format!("step called after the horizon ({})", self.horizon())));
        }
        self.prev_action = self.action;
        if self.at_decision() {
            for (k, a) in action.iter().enumerate() {
                if !a.is_finite() {
                    return Err(Error::NonFinite { what: "action", index: k });
                }
                let c = a.clamp(-ACTION_BOUND, ACTION_BOUND);
                if c != *a {
                    self.clamped += 1;
                }
                self.action[k] = c;
            }
            for ph in 0..3 {
                self.defended_curves[ph] = self.default_curve.with_offset(self.action[ph])?;
            }
        }
        let scenario = self.scenario.clone();
        self.apply_attack(&scenario, self.t)?;
        self.tick()?;
        self.t += 1;
        let dt = self.cfg.dt;

        let mut vo_max: f64 = 0.0;
        for (k, f) in self.vo.iter_mut().enumerate() {
            let (node, ph) = (k / 3, k % 3);
            vo_max = vo_max.max(f.step(self.v[ph][node], dt));
        }
        let (vi_max, worst) = self.worst_imbalance()?;
        let terms = reward_terms(
            &self.cfg.reward,
            vi_max,
            vo_max,
            &self.action,
            &self.prev_action,
            self.defended.iter().map(|s| (s.inv.p_out(), s.inv.state().p_avail)),
        );
        self.obs = Observation {
            vi: vi_max,
            vo: vo_max,
            q_avail_nom: self.q_avail_nom,
            a_prev: self.action,
            v_phase: [self.v[0][worst], self.v[1][worst], self.v[2][worst]],
        };
        if let Some(trace) = self.trace.as_mut() {
            let mut q_total = [0.0; 3];
            for s in self.defended.iter().chain(&self.compromised) {
                q_total[s.phase] += s.inv.q_out();
            }
            trace.rows.push(TraceRow {
                t: self.t as f64 * dt,
                v: self.obs.v_phase,
                u_worst: vi_max,
                y_worst: vo_max,
                action: self.action,
                q_total,
            });
        }
        Ok(Step {
            obs: self.obs,
            reward: terms.reward(),
            terms,
            done: self.is_done(),
        })
    }

    /// Inverters react to the last solved voltages, then the network is re-solved.
    fn tick(&mut self) -> Result<()> {
        let dt = self.cfg.dt;
        for s in self.defended.iter_mut() {
            s.inv.step(&self.defended_curves[s.phase], self.v[s.phase][s.node], dt);
        }
        for s in self.compromised.iter_mut() {
            s.inv.step(&self.compromised_curves[s.phase], self.v[s.phase][s.node], dt);
        }
        self.solve();
        self.check_voltages()
    }

    fn solve(&mut self) {
        let n = self.model.n_nodes();
        for ph in 0..3 {
            for i in 0..n {
                self.p_buf[i] = -self.load[ph][i];
                self.q_buf[i] = 0.0;
            }
            for s in self.defended.iter().chain(&self.compromised).filter(|s| s.phase == ph) {
                self.p_buf[s.node] += s.inv.p_out();
                self.q_buf[s.node] += s.inv.q_out();
            }
            let rel = (ph + 3 - self.scenario.regulator_phase.index()) % 3;
            self.model.deviation(rel, &self.p_buf, &self.q_buf, &mut self.dv_buf);
            let v0 = self.model.v_source(rel);
            for i in 0..n {
                self.v[ph][i] = v0 + self.dv_buf[i];
            }
        }
    }

    fn check_voltages(&self) -> Result<()> {
        for (ph, row) in self.v.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                if !(v > V_GUARD.0 && v < V_GUARD.1) {
                    return Err(Error::Environment(format!(
                        "voltage {v:.4} pu at node {i} phase {} left the model's valid band at step {}",
                        Phase::from_index(ph).name(),
                        self.t
                    )));
                }
            }
        }
        Ok(())
    }

    /// Largest imbalance over nodes and the node where it occurs.
    fn worst_imbalance(&self) -> Result<(f64, usize)> {
        let mut best = (0.0, 0);
        for i in 0..self.model.n_nodes() {
            let vi = vi_metric(self.v[0][i], self.v[1][i], self.v[2][i])?;
            if vi > best.0 {
                best = (vi, i);
            }
        }
        Ok(best)
    }
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::A => "a",
            Phase::B => "b",
            Phase::C => "c",
        }
    }
}
