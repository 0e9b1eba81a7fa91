//! Sweeps compromised fraction and reports undefended attack severity.
//!
//! `cargo run --release -p ars-core --example calibrate [x_per_kw] [r_per_kw] [offset_a offset_b offset_c] [oversize]`

use ars_core::env::{randomize_scenario, AttackKind, EnvConfig, FeederEnv, Scenario};
use ars_core::rng::{stream, Purpose};

fn run(cfg: &EnvConfig, sc: Scenario) -> (f64, f64, f64, f64, f64) {
    let mut env = FeederEnv::from_config(cfg.clone(), sc.clone()).expect("env");
    let (mut vi_pre, mut vo_pre, mut vi_att, mut vo_att) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut vmin = f64::MAX;
    for t in 0..cfg.horizon {
        let s = env.step([0.0; 3]).expect("step");
        for ph in ars_core::env::Phase::ALL {
            vmin = vmin.min(env.voltages(ph).iter().cloned().fold(f64::MAX, f64::min));
        }
        if t < sc.attack_start {
            vi_pre = vi_pre.max(s.obs.vi);
            vo_pre = vo_pre.max(s.obs.vo);
        } else if t <= sc.attack_end {
            vi_att = vi_att.max(s.obs.vi);
            vo_att = vo_att.max(s.obs.vo);
        }
    }
    (vi_pre, vi_att, vo_pre, vo_att, vmin)
}

fn main() {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("number")).collect();
    let mut cfg = EnvConfig::default();
    if let Some(x) = args.first() {
        cfg.feeder.x_per_kw = *x;
    }
    if let Some(r) = args.get(1) {
        cfg.feeder.r_per_kw = *r;
    }
    if args.len() >= 5 {
        cfg.attack.imbalance_offsets = [args[2], args[3], args[4]];
    }
    if let Some(o) = args.get(5) {
        cfg.inverter.oversize = *o;
    }
    for kind in [AttackKind::Imbalance, AttackKind::Oscillation] {
        cfg.attack.kind = kind;
        println!("== {kind} (x={}, r={})", cfg.feeder.x_per_kw, cfg.feeder.r_per_kw);
        for f in [0.1, 0.2, 0.3, 0.4] {
            let (a, b, c, d, vmin) = run(&cfg, Scenario::nominal(&cfg, f, 1));
            println!("f={f:.1} vi pre {a:.4} att {b:.4} | vo pre {c:.2e} att {d:.2e} | vmin {vmin:.3}");
        }
        let mut ok = 0;
        let mut rng = stream(0, Purpose::Evaluation, &[]);
        let trials = 200;
        for _ in 0..trials {
            let sc = randomize_scenario(&mut rng, &cfg);
            let (_, b, c, d, _) = run(&cfg, sc.clone());
            let hit = match kind {
                AttackKind::Imbalance => b >= 0.02,
                _ => d > 10.0 * c && d > 5e-4,
            };
            ok += hit as usize;
            if !hit {
                println!("  miss: f={:.2} load {:.2} solar {:.2} reg {:?}: vi {b:.4} vo {d:.2e}", sc.compromised_fraction, sc.load_scale, sc.solar_scale, sc.regulator_phase);
            }
        }
        println!("  efficacy {ok}/{trials} random scenarios");
    }
}
