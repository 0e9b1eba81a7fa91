//! `ars`: train, evaluate and compare attack-mitigation policies on the feeder model.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ars_core::checkpoint::Checkpoint;
use ars_core::config::{RunConfig, Task};
use ars_core::env::{AttackKind, EnvObjective, EpisodeSummary, Phase, Scenario, ACT_DIM, OBS_DIM};
use ars_core::experiment::{compare, convergence_epoch, evaluate, median};
use ars_core::policy::{NormalizerStats, PolicyParams};
use ars_core::trainer::{train_from, Algorithm, TrainState, TRAIN_LOG_HEADER};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "ars", version, about = "Random-search training of DER inverter policies against voltage attacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one policy and write its log, checkpoints and manifest.
    Train(TrainArgs),
    /// Run one deterministic episode from a checkpoint, next to an undefended baseline.
    Eval(EvalArgs),
    /// Train several algorithms over several seeds and summarize the curves.
    Compare(CompareArgs),
    /// Print the fully-resolved default configuration as TOML.
    ExportDefaultConfig(ExportArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file; missing keys take the task preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Task preset to start from when no file is given.
    #[arg(long, conflicts_with = "config")]
    task: Option<Task>,
    /// Override one key, e.g. `--set train.alpha=0.02`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    algo: Option<Algorithm>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `runs/<run id>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue from a checkpoint. Its embedded configuration is used unless
    /// `--config` is given.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Environment configuration to use instead of the one in the checkpoint.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Attack kind: none, oscillation or imbalance (default: configured kind).
    #[arg(long)]
    attack: Option<AttackKind>,
    /// Compromised share of inverter capacity.
    #[arg(long, default_value_t = 0.3)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    scenario_seed: u64,
    #[arg(long)]
    regulator_phase: Option<Phase>,
    #[arg(long)]
    load_scale: Option<f64>,
    #[arg(long)]
    solar_scale: Option<f64>,
    /// Skip the paired zero-action run.
    #[arg(long)]
    no_baseline: bool,
    #[arg(long, default_value = "eval")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated algorithms.
    #[arg(long, value_delimiter = ',', default_value = "ars,adam-ars")]
    algos: Vec<Algorithm>,
    /// Seeds as a list (`1,2,3`) or an inclusive range (`1..10`).
    #[arg(long, default_value = "1..10")]
    seeds: String,
    #[arg(long, default_value = "compare")]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long, default_value = "imbalance")]
    task: Task,
    /// Write to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ars_core::Error> for Failure {
    fn from(e: ars_core::Error) -> Self {
        use ars_core::Error as E;
        match e {
            E::InvalidConfig(_) | E::TomlDe(_) | E::TomlSer(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Compare(a) => cmd_compare(a),
        Command::ExportDefaultConfig(a) => cmd_export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn read_config_file(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::from_toml_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn apply_overrides(cfg: &mut RunConfig, set: &[String]) -> CliResult<()> {
    for kv in set {
        cfg.apply_override(kv)?;
    }
    Ok(())
}

fn resolve(args: &ConfigArgs) -> CliResult<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => read_config_file(p)?,
        None => RunConfig::preset(args.task.unwrap_or(Task::Imbalance)),
    };
    apply_overrides(&mut cfg, &args.set)?;
    Ok(cfg)
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn rel(path: &Path, base: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).display().to_string()
}

#[derive(Debug, Serialize)]
struct Artifacts {
    checkpoint: Option<String>,
    periodic_checkpoints: Vec<String>,
    log: String,
    traces: Vec<String>,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    run_id: String,
    status: &'static str,
    error: Option<String>,
    config_hash: String,
    seed: u64,
    algorithm: Algorithm,
    task: Task,
    started: String,
    finished: Option<String>,
    epochs_completed: u64,
    resumed_from: Option<String>,
    artifacts: Artifacts,
    config: RunConfig,
}

impl RunManifest {
    fn write(&self, dir: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Failure::Runtime(e.to_string()))?;
        fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let resume = match &args.resume {
        Some(p) => Some(Checkpoint::load(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let mut cfg = match (&resume, &args.config.config) {
        (Some(ck), None) => {
            let mut c = ck.config.clone();
            apply_overrides(&mut c, &args.config.set)?;
            c
        }
        _ => resolve(&args.config)?,
    };
    if let Some(a) = args.algo {
        cfg.algorithm = a;
    }
    if let Some(s) = args.seed {
        cfg.train.seed = s;
    }
    cfg.validate()?;
    let train_cfg = cfg.train_config(cfg.algorithm);
    let mut state = match &resume {
        Some(ck) => {
            let fresh = PolicyParams::zeros(cfg.policy, OBS_DIM, ACT_DIM);
            if ck.policy.kind != fresh.kind || ck.policy.shape != fresh.shape {
                return Err(Failure::Config(format!(
                    "checkpoint holds a {} policy with shape {:?}, configuration wants {} {:?}",
                    ck.policy.kind, ck.policy.shape, fresh.kind, fresh.shape
                )));
            }
            ck.train_state()
        }
        None => TrainState::new(&train_cfg, PolicyParams::zeros(cfg.policy, OBS_DIM, ACT_DIM)),
    };
    let objective = EnvObjective::new(cfg.env.clone())?;

    let hash = cfg.config_hash();
    let run_id = format!("{}-{}-s{}-{}", task_name(cfg.task), cfg.algorithm, cfg.train.seed, &hash[..8]);
    let dir = args.out.clone().unwrap_or_else(|| Path::new("runs").join(&run_id));
    let ck_dir = dir.join("checkpoints");
    fs::create_dir_all(&ck_dir)?;
    let log_path = dir.join("train_log.csv");
    let mut manifest = RunManifest {
        run_id,
        status: "running",
        error: None,
        config_hash: hash,
        seed: cfg.train.seed,
        algorithm: cfg.algorithm,
        task: cfg.task,
        started: now(),
        finished: None,
        epochs_completed: state.epoch,
        resumed_from: args.resume.as_ref().map(|p| p.display().to_string()),
        artifacts: Artifacts {
            checkpoint: None,
            periodic_checkpoints: Vec::new(),
            log: rel(&log_path, &dir),
            traces: Vec::new(),
        },
        config: cfg.clone(),
    };
    manifest.write(&dir)?;

    let mut log = BufWriter::new(File::create(&log_path)?);
    writeln!(log, "{TRAIN_LOG_HEADER}")?;
    let every = cfg.output.checkpoint_every as u64;
    let wall = cfg.output.record_wall_time;
    let mut periodic = Vec::new();
    let outcome = train_from(&train_cfg, &objective, &mut state, |report, st| {
        writeln!(log, "{}", report.csv_row(wall))?;
        log.flush()?;
        if every > 0 && st.epoch % every == 0 && (st.epoch as usize) < train_cfg.epochs {
            let p = ck_dir.join(format!("epoch_{:05}.json", st.epoch));
            Checkpoint::new(st, &cfg).save(&p)?;
            periodic.push(rel(&p, &dir));
        }
        log::info!("epoch {} reward {:.3}", report.epoch, report.mean_reward);
        Ok(())
    });
    drop(log);
    manifest.epochs_completed = state.epoch;
    manifest.artifacts.periodic_checkpoints = periodic;
    manifest.finished = Some(now());
    match outcome {
        Ok(_) => {
            let p = dir.join("policy.json");
            Checkpoint::new(&state, &cfg).save(&p)?;
            manifest.artifacts.checkpoint = Some(rel(&p, &dir));
            manifest.status = "completed";
            manifest.write(&dir)?;
            println!("{}", dir.display());
            Ok(())
        }
        Err(e) => {
            manifest.status = "failed";
            manifest.error = Some(e.to_string());
            manifest.write(&dir)?;
            Err(Failure::Runtime(format!("training stopped after {} epochs: {e}", state.epoch)))
        }
    }
}

fn task_name(t: Task) -> &'static str {
    match t {
        Task::Imbalance => "imbalance",
        Task::Oscillation => "oscillation",
    }
}

const SUMMARY_HEADER: &str = "run,max_vi,max_vo,attack_max_vi,attack_max_vo,mean_reward,total_curtailment";

fn summary_row(name: &str, s: &EpisodeSummary) -> String {
    format!(
        "{name},{},{},{},{},{},{}",
        s.max_vi,
        s.max_vo,
        s.attack_max_vi,
        s.attack_max_vo,
        s.mean_reward(),
        s.curtailment
    )
}

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    // Read-only: the checkpoint file is opened once for reading and never written.
    let ck = Checkpoint::load(&args.checkpoint).map_err(|e| Failure::Runtime(format!("{}: {e}", args.checkpoint.display())))?;
    let mut cfg = match &args.config {
        Some(p) => read_config_file(p)?,
        None => ck.config.clone(),
    };
    apply_overrides(&mut cfg, &args.set)?;
    cfg.env.validate()?;
    if ck.policy.obs_dim() != OBS_DIM || ck.policy.act_dim() != ACT_DIM || ck.stats.dim() != OBS_DIM {
        return Err(Failure::Runtime(format!(
            "checkpoint maps {} observations to {} actions (normalizer {}), the environment needs {OBS_DIM} -> {ACT_DIM}",
            ck.policy.obs_dim(),
            ck.policy.act_dim(),
            ck.stats.dim()
        )));
    }
    let mut sc = Scenario::nominal(&cfg.env, args.fraction, args.scenario_seed);
    if let Some(k) = args.attack {
        sc.attack_kind = k;
    }
    if let Some(p) = args.regulator_phase {
        sc.regulator_phase = p;
    }
    if let Some(x) = args.load_scale {
        sc.load_scale = x;
    }
    if let Some(x) = args.solar_scale {
        sc.solar_scale = x;
    }
    sc.validate()?;

    fs::create_dir_all(&args.out)?;
    let mut runs = vec![("policy", ck.policy.clone(), ck.stats.clone())];
    if !args.no_baseline {
        let zero = PolicyParams::zeros(ck.policy.kind, OBS_DIM, ACT_DIM);
        runs.push(("baseline", zero, NormalizerStats::new(OBS_DIM)));
    }
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    for (name, policy, stats) in runs {
        let s = evaluate(&cfg.env, &policy, &stats, sc.clone(), true)?;
        let trace = s.trace.as_ref().expect("trace was requested");
        let file = if name == "policy" { "trace.csv".to_string() } else { format!("{name}_trace.csv") };
        trace.write_csv(BufWriter::new(File::create(args.out.join(file))?))?;
        println!(
            "{name:<8} max_vi={:.6} max_vo={:.6} mean_reward={:.4} total_curtailment={:.4}",
            s.max_vi,
            s.max_vo,
            s.mean_reward(),
            s.curtailment
        );
        summary.push_str(&summary_row(name, &s));
        summary.push('\n');
    }
    fs::write(args.out.join("summary.csv"), summary)?;
    Ok(())
}

fn parse_seeds(s: &str) -> CliResult<Vec<u64>> {
    let bad = || Failure::Config(format!("bad seed list `{s}` (use `1,2,3` or `1..10`)"));
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        (a..=b).collect()
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<CliResult<_>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn cmd_compare(args: CompareArgs) -> CliResult<()> {
    let cfg = resolve(&args.config)?;
    let seeds = parse_seeds(&args.seeds)?;
    if args.algos.is_empty() {
        return Err(Failure::Config("--algos needs at least one algorithm".into()));
    }
    cfg.validate()?;
    let c = compare(&cfg, &args.algos, &seeds)?;
    fs::create_dir_all(args.out.join("logs"))?;
    c.write_csv(BufWriter::new(File::create(args.out.join("compare.csv"))?))?;
    for run in &c.runs {
        if let Ok((_, _, reports)) = &run.result {
            let mut text = format!("{TRAIN_LOG_HEADER}\n");
            for r in reports {
                text.push_str(&r.csv_row(cfg.output.record_wall_time));
                text.push('\n');
            }
            fs::write(args.out.join("logs").join(format!("{}_seed{}.csv", run.algo, run.seed)), text)?;
        }
    }
    let epochs = cfg.train.epochs;
    let tail = 20.min(epochs);
    for &algo in &args.algos {
        let rows: Vec<_> = c.rows_for(algo).collect();
        if rows.is_empty() {
            println!("{algo}: every run failed");
            continue;
        }
        let last = &rows[rows.len() - tail.min(rows.len())..];
        let tail_std = last.iter().map(|r| r.std).sum::<f64>() / last.len() as f64;
        let mut conv: Vec<f64> = c
            .curves(algo)
            .iter()
            .map(|(_, r)| convergence_epoch(r, 0.95, 10, 5).map_or(f64::INFINITY, |e| e as f64))
            .collect();
        println!(
            "{algo}: final reward {:.2}, mean across-seed std over the last {tail} epochs {tail_std:.2}, median convergence epoch {}",
            rows.last().map_or(f64::NAN, |r| r.mean),
            median(&mut conv)
        );
    }
    let failed = c.runs.iter().filter(|r| r.result.is_err()).count();
    if failed > 0 {
        eprintln!("warning: {failed} run(s) failed and were excluded");
    }
    Ok(())
}

fn cmd_export(args: ExportArgs) -> CliResult<()> {
    let text = RunConfig::preset(args.task).to_toml_string()?;
    match args.out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}
