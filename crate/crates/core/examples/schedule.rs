//! Plays a fixed action schedule against one attack scenario and reports the
//! attack-window peaks and the penalty breakdown.
//!
//! usage: schedule <oscillation|imbalance> <fraction> "t:a,b,c;t:a,b,c" [action_period]
//!
//! Each `t:a,b,c` entry holds per-phase offsets from step `t` on.

use ars_core::env::{EnvConfig, FeederEnv, Scenario};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 3 {
        eprintln!("usage: schedule <oscillation|imbalance> <fraction> \"t:a,b,c;...\" [action_period]");
        std::process::exit(2);
    }
    let mut cfg = EnvConfig::default();
    cfg.attack.kind = args[0].parse().expect("attack kind");
    if let Some(p) = args.get(3) {
        cfg.action_period = p.parse().expect("action period");
    }
    let fraction: f64 = args[1].parse().expect("fraction");
    let schedule: Vec<(usize, [f64; 3])> = args[2]
        .split(';')
        .map(|entry| {
            let (t, v) = entry.split_once(':').expect("t:a,b,c");
            let v: Vec<f64> = v.split(',').map(|x| x.parse().expect("offset")).collect();
            (t.parse().expect("step"), [v[0], v[1], v[2]])
        })
        .collect();

    let scenario = Scenario::nominal(&cfg, fraction, 1);
    let mut env = FeederEnv::from_config(cfg.clone(), scenario).expect("valid config");
    let (mut vi, mut vo, mut total) = (0.0f64, 0.0f64, 0.0);
    let mut terms = [0.0; 5];
    for t in 0..cfg.horizon {
        let action = schedule.iter().rev().find(|(s, _)| *s <= t).map_or([0.0; 3], |x| x.1);
        let s = env.step(action).expect("step");
        total += s.reward;
        let k = s.terms;
        for (acc, x) in terms.iter_mut().zip([k.imbalance, k.oscillation, k.action_change, k.action_magnitude, k.curtailment]) {
            *acc += x;
        }
        if (cfg.attack.start..=cfg.attack.end).contains(&t) {
            vi = vi.max(s.obs.vi);
            vo = vo.max(s.obs.vo);
        }
    }
    println!("attack-window max vi {vi:.4}, max vo {vo:.2e}, episode reward {total:.1}");
    println!(
        "penalties: imbalance {:.1}, oscillation {:.1}, action change {:.1}, action size {:.1}, curtailment {:.1}",
        terms[0], terms[1], terms[2], terms[3], terms[4]
    );
}
