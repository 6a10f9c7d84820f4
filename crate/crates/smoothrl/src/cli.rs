//! Command-line front end: demonstrate, train (bc | grpo), eval, analyze,
//! and ablate.
//!
//! Flags override keys of the loaded configuration file before anything runs,
//! so the hash stamped into emitted files always describes the effective
//! configuration. Output paths default to the directory named by the
//! `SMOOTHRL_OUT` environment variable (falling back to the working
//! directory).
//!
//! Exit codes: 0 on success, 2 for usage, configuration, or file errors,
//! 3 when optimization hits a numerical failure (the last finite checkpoint
//! is still written).

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::Rng;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::io::{
    params_from_checkpoint, read_checkpoint, read_rollouts_jsonl, read_steps_csv,
    render_ablation_csv, write_ablation_csv, write_bc_log, write_checkpoint, write_eval_csv,
    write_report_csv, write_rollouts_jsonl, write_steps_csv, write_train_log, AblationRow,
    ExperimentManifest, ABLATION_FORMAT, BC_LOG_FORMAT, CHECKPOINT_FORMAT, ROLLOUTS_FORMAT,
    STEPS_FORMAT, TRAIN_LOG_FORMAT,
};
use crate::kinematics::JointTrajectory;
use crate::policy::PolicyParams;
use crate::rng::stream;
use crate::scripted::{demo_corpus, scripted_episode};
use crate::sim_env::{Env, EnvConfig, Rollout};
use crate::smoothness::ee_smoothness_with;
use crate::trainer::{
    bc_train, demo_chunk_pairs, evaluate, grpo_train, EvalReport, RewardMode,
};

#[derive(Parser)]
#[command(
    name = "smoothrl",
    version,
    about = "Planar-arm reinforcement learning with jerk-aware rewards"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scripted minimum-jerk demonstrations and report their quality.
    Demonstrate {
        /// Experiment configuration file (TOML); defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of episodes (overrides n_demos).
        #[arg(long, short = 'n')]
        episodes: Option<usize>,
        /// Demonstration seed (overrides demo_seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Output JSON-lines file [default: <out root>/demos.jsonl].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the same episodes as a per-step CSV.
        #[arg(long)]
        steps_out: Option<PathBuf>,
    },
    /// Run one training stage and write its checkpoint, log, and manifest.
    Train {
        /// Experiment configuration file (TOML); defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Which stage to run: bc (cloning) or grpo (policy optimization).
        #[arg(long)]
        stage: String,
        /// Reward mode for the grpo stage: binary, random, or smooth
        /// (overrides reward_mode).
        #[arg(long)]
        reward_mode: Option<String>,
        /// Stage seed (overrides bc_seed or grpo_seed, per --stage).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory [default: the out root].
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Demonstration JSON-lines file for the bc stage; generated from the
        /// configuration when omitted.
        #[arg(long)]
        demos: Option<PathBuf>,
        /// Starting checkpoint for the grpo stage
        /// [default: <out (or init) dir>/bc_checkpoint.json].
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Evaluate a checkpoint (or the scripted controller) with mean actions.
    Eval {
        /// Experiment configuration file (TOML); defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Policy checkpoint to evaluate.
        #[arg(long, conflicts_with = "scripted", required_unless_present = "scripted")]
        checkpoint: Option<PathBuf>,
        /// Evaluate the scripted minimum-jerk controller instead of a checkpoint.
        #[arg(long)]
        scripted: bool,
        /// Number of episodes (overrides eval_episodes).
        #[arg(long, short = 'n')]
        episodes: Option<usize>,
        /// Evaluation seed (overrides eval_seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Metrics CSV path [default: <out root>/eval.csv].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute smoothness reports from a trajectory file.
    Analyze {
        /// Trajectory file: per-step CSV or JSON-lines rollouts.
        #[arg(long)]
        input: PathBuf,
        /// Configuration supplying the arm model (and dt for CSV inputs).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report CSV path [default: <out root>/analysis.csv].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every reward mode over a list of seeds and summarize.
    Ablate {
        /// Experiment configuration file (TOML); defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated seeds, one pretraining + three runs each.
        #[arg(long, default_value = "0,1,2,3,4")]
        seeds: String,
        /// Output directory [default: the out root].
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

/// Parse arguments from the process environment, run the selected command,
/// and return the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Demonstrate { config, episodes, seed, out, steps_out } => {
            cmd_demonstrate(config.as_deref(), episodes, seed, out, steps_out)
        }
        Command::Train { config, stage, reward_mode, seed, out_dir, demos, init } => {
            cmd_train(config.as_deref(), &stage, reward_mode.as_deref(), seed, out_dir, demos, init)
        }
        Command::Eval { config, checkpoint, scripted, episodes, seed, out } => {
            cmd_eval(config.as_deref(), checkpoint, scripted, episodes, seed, out)
        }
        Command::Analyze { input, config, out } => cmd_analyze(&input, config.as_deref(), out),
        Command::Ablate { config, seeds, out_dir } => {
            cmd_ablate(config.as_deref(), &seeds, out_dir)
        }
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing

fn out_root() -> PathBuf {
    std::env::var_os("SMOOTHRL_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

/// Load the configuration and remember where it came from for the manifest.
fn load_config(path: Option<&Path>) -> Result<(ExperimentConfig, String)> {
    match path {
        Some(p) => Ok((ExperimentConfig::load(p)?, p.display().to_string())),
        None => Ok((ExperimentConfig::default(), "defaults".into())),
    }
}

fn parse_reward_mode(s: &str) -> Result<RewardMode> {
    match s {
        "binary" => Ok(RewardMode::Binary),
        "random" => Ok(RewardMode::Random),
        "smooth" => Ok(RewardMode::Smooth),
        other => Err(Error::InvalidConfig(format!(
            "unknown reward mode '{other}', expected binary, random, or smooth"
        ))),
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|part| {
            part.trim().parse::<u64>().map_err(|_| {
                Error::InvalidConfig(format!(
                    "seed list entry '{}' is not an unsigned integer",
                    part.trim()
                ))
            })
        })
        .collect()
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

/// A checkpoint can only drive an environment whose observation and action
/// chunk layout it was built for.
fn check_env_shape(params: &PolicyParams, cfg: &ExperimentConfig) -> Result<()> {
    let want = cfg.arch()?;
    let got = &params.arch;
    if got.input_dim != want.input_dim
        || got.output_dim != want.output_dim
        || got.action_scale != want.action_scale
    {
        return Err(Error::Checkpoint(format!(
            "checkpoint takes {}-dim observations to {}-dim chunks (scale {}), \
             but this configuration needs {} -> {} (scale {})",
            got.input_dim,
            got.output_dim,
            got.action_scale,
            want.input_dim,
            want.output_dim,
            want.action_scale
        )));
    }
    Ok(())
}

fn mean_stats(rollouts: &[Rollout]) -> (f64, f64) {
    let n = rollouts.len() as f64;
    let success = rollouts.iter().filter(|r| r.success).count() as f64 / n;
    let jerk = rollouts.iter().map(|r| r.smoothness.mean_jerk_norm).sum::<f64>() / n;
    (success, jerk)
}

fn eval_line(report: &EvalReport) -> String {
    format!(
        "episodes={} success_rate={} mean_jerk={} peak_jerk={}",
        report.episodes, report.success_rate, report.mean_jerk, report.peak_jerk
    )
}

// ---------------------------------------------------------------------------
// demonstrate

fn cmd_demonstrate(
    config: Option<&Path>,
    episodes: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    steps_out: Option<PathBuf>,
) -> Result<()> {
    let (mut cfg, _) = load_config(config)?;
    if let Some(n) = episodes {
        cfg.n_demos = n;
    }
    if let Some(s) = seed {
        cfg.demo_seed = s;
    }
    cfg.validate()?;
    let hash = cfg.hash()?;
    let env_cfg = cfg.env_config()?;
    let rollouts = demo_corpus(&env_cfg, &cfg.scripted_config(), cfg.n_demos, cfg.demo_seed)?;

    let out_path = out.unwrap_or_else(|| out_root().join("demos.jsonl"));
    ensure_parent(&out_path)?;
    write_rollouts_jsonl(&out_path, &rollouts, &hash)?;
    println!("wrote {} demonstrations to {}", rollouts.len(), out_path.display());
    if let Some(steps_path) = steps_out {
        ensure_parent(&steps_path)?;
        write_steps_csv(&steps_path, &env_cfg.model, &rollouts, &hash)?;
        println!("wrote per-step csv to {}", steps_path.display());
    }

    if rollouts.is_empty() {
        eprintln!("warning: no episodes requested, the demonstration file is empty");
        return Ok(());
    }
    let (success_rate, mean_jerk) = mean_stats(&rollouts);
    println!(
        "episodes={} success_rate={success_rate} mean_jerk={mean_jerk}",
        rollouts.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train

fn cmd_train(
    config: Option<&Path>,
    stage: &str,
    reward_mode: Option<&str>,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    demos: Option<PathBuf>,
    init: Option<PathBuf>,
) -> Result<()> {
    let (mut cfg, origin) = load_config(config)?;
    if let Some(mode) = reward_mode {
        cfg.reward_mode = parse_reward_mode(mode)?;
    }
    let dir = out_dir.unwrap_or_else(out_root);
    std::fs::create_dir_all(&dir)?;
    match stage {
        "bc" => {
            if let Some(s) = seed {
                cfg.bc_seed = s;
            }
            cfg.validate()?;
            train_bc_stage(&cfg, &origin, &dir, demos.as_deref())
        }
        "grpo" => {
            if let Some(s) = seed {
                cfg.grpo_seed = s;
            }
            cfg.validate()?;
            let init_path = init.unwrap_or_else(|| dir.join("bc_checkpoint.json"));
            train_grpo_stage(&cfg, &origin, &dir, &init_path)
        }
        other => Err(Error::InvalidConfig(format!(
            "unknown stage '{other}', expected bc or grpo"
        ))),
    }
}

fn train_bc_stage(
    cfg: &ExperimentConfig,
    origin: &str,
    dir: &Path,
    demos: Option<&Path>,
) -> Result<()> {
    let hash = cfg.hash()?;
    let env_cfg = cfg.env_config()?;
    let rollouts = match demos {
        Some(path) => {
            let (header, rollouts) = read_rollouts_jsonl(path)?;
            if header.config_hash != hash {
                eprintln!(
                    "warning: demonstrations were generated under config {} but this run is {}",
                    header.config_hash, hash
                );
            }
            rollouts
        }
        None => demo_corpus(&env_cfg, &cfg.scripted_config(), cfg.n_demos, cfg.demo_seed)?,
    };
    let pairs = demo_chunk_pairs(&rollouts, cfg.chunk_size)?;
    let (params, losses) = bc_train(&pairs, cfg.arch()?, &cfg.bc_config())?;

    let ck_path = dir.join("bc_checkpoint.json");
    write_checkpoint(&ck_path, &params, "bc", &hash)?;
    let log_path = dir.join("bc_log.csv");
    write_bc_log(&log_path, &losses, &hash)?;
    let mut manifest = ExperimentManifest::new(origin, &hash, vec![cfg.bc_seed])?;
    manifest.record("bc_checkpoint.json", CHECKPOINT_FORMAT);
    manifest.record("bc_log.csv", BC_LOG_FORMAT);
    manifest.write(&dir.join("bc_manifest.json"))?;

    println!(
        "stage=bc demos={} pairs={} loss_initial={} loss_final={}",
        rollouts.len(),
        pairs.len(),
        losses[0],
        losses[losses.len() - 1]
    );
    let (report, _) = evaluate(&params, &env_cfg, cfg.eval_episodes, cfg.eval_seed)?;
    println!("{}", eval_line(&report));
    println!("checkpoint={} log={}", ck_path.display(), log_path.display());
    Ok(())
}

fn train_grpo_stage(
    cfg: &ExperimentConfig,
    origin: &str,
    dir: &Path,
    init_path: &Path,
) -> Result<()> {
    let hash = cfg.hash()?;
    if !init_path.exists() {
        return Err(Error::Checkpoint(format!(
            "no cloning checkpoint at {}; run `smoothrl train --stage bc` first or pass --init",
            init_path.display()
        )));
    }
    let init = params_from_checkpoint(&read_checkpoint(init_path)?)?;
    check_env_shape(&init, cfg)?;
    let env_cfg = cfg.env_config()?;
    let mode = cfg.reward_mode.name();

    let outcome = grpo_train(init, &env_cfg, &cfg.grpo_config(), &cfg.reward_config())?;

    let ck_name = format!("grpo_{mode}_checkpoint.json");
    let log_name = format!("grpo_{mode}_log.csv");
    let ck_path = dir.join(&ck_name);
    write_checkpoint(&ck_path, &outcome.params, &format!("grpo-{mode}"), &hash)?;
    write_train_log(&dir.join(&log_name), &outcome.log, &hash)?;
    let mut manifest = ExperimentManifest::new(origin, &hash, vec![cfg.grpo_seed])?;
    manifest.record(&ck_name, CHECKPOINT_FORMAT);
    manifest.record(&log_name, TRAIN_LOG_FORMAT);
    manifest.write(&dir.join(format!("grpo_{mode}_manifest.json")))?;

    if let Some(msg) = outcome.aborted {
        eprintln!(
            "optimization aborted; the last finite parameters are in {}",
            ck_path.display()
        );
        return Err(Error::NumericalFailure(msg));
    }

    if let (Some(first), Some(last)) = (outcome.log.first(), outcome.log.last()) {
        println!(
            "stage=grpo reward_mode={mode} batches={} \
             first_batch: reward={} jerk={} last_batch: reward={} jerk={}",
            outcome.log.len(),
            first.mean_reward,
            first.mean_jerk,
            last.mean_reward,
            last.mean_jerk
        );
    }
    let (report, _) = evaluate(&outcome.params, &env_cfg, cfg.eval_episodes, cfg.eval_seed)?;
    println!("{}", eval_line(&report));
    println!("checkpoint={} log={}", ck_path.display(), dir.join(&log_name).display());
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

fn cmd_eval(
    config: Option<&Path>,
    checkpoint: Option<PathBuf>,
    scripted: bool,
    episodes: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let (mut cfg, _) = load_config(config)?;
    if let Some(n) = episodes {
        cfg.eval_episodes = n;
    }
    if let Some(s) = seed {
        cfg.eval_seed = s;
    }
    cfg.validate()?;
    let hash = cfg.hash()?;
    let env_cfg = cfg.env_config()?;

    let report = if scripted {
        println!("controller=scripted");
        scripted_eval(&cfg, &env_cfg)?
    } else {
        let path = checkpoint.expect("argument parser enforces checkpoint xor scripted");
        let ck = read_checkpoint(&path)?;
        let params = params_from_checkpoint(&ck)?;
        check_env_shape(&params, &cfg)?;
        println!("checkpoint={} stage={}", path.display(), ck.stage);
        evaluate(&params, &env_cfg, cfg.eval_episodes, cfg.eval_seed)?.0
    };
    println!("{}", eval_line(&report));

    let out_path = out.unwrap_or_else(|| out_root().join("eval.csv"));
    ensure_parent(&out_path)?;
    write_eval_csv(&out_path, &report, &hash)?;
    println!("wrote {}", out_path.display());
    Ok(())
}

/// Evaluate the scripted controller over the same episode-seed stream the
/// policy evaluator uses, so the two are directly comparable.
fn scripted_eval(cfg: &ExperimentConfig, env_cfg: &EnvConfig) -> Result<EvalReport> {
    let mut env = Env::new(env_cfg.clone())?;
    let scripted_cfg = cfg.scripted_config();
    let mut rollouts = Vec::with_capacity(cfg.eval_episodes);
    for ep in 0..cfg.eval_episodes {
        let episode_seed: u64 = stream("eval-episode", &[cfg.eval_seed, ep as u64]).gen();
        rollouts.push(scripted_episode(&mut env, episode_seed, &scripted_cfg)?);
    }
    let n = rollouts.len() as f64;
    let (success_rate, mean_jerk) = mean_stats(&rollouts);
    Ok(EvalReport {
        episodes: rollouts.len(),
        success_rate,
        mean_jerk,
        peak_jerk: rollouts.iter().map(|r| r.smoothness.peak_jerk_norm).sum::<f64>() / n,
    })
}

// ---------------------------------------------------------------------------
// analyze

fn cmd_analyze(input: &Path, config: Option<&Path>, out: Option<PathBuf>) -> Result<()> {
    let (cfg, _) = load_config(config)?;
    // Offline analysis only needs the arm and the sample period, so a config
    // that describes no runnable task (say a 1-link arm with the default goal
    // annulus) is still fine here.
    let model = cfg.model()?;
    if !(cfg.dt > 0.0) {
        return Err(Error::InvalidConfig("dt must be positive".into()));
    }
    let hash = cfg.hash()?;

    let first_byte = {
        use std::io::Read as _;
        let mut file = std::fs::File::open(input)?;
        let mut byte = [0u8; 1];
        if file.read(&mut byte)? == 0 {
            return Err(Error::MalformedRow { line: 1, message: "empty file".into() });
        }
        byte[0]
    };
    let (format_name, trajectories): (&str, Vec<JointTrajectory>) = if first_byte == b'{' {
        let (_, rollouts) = read_rollouts_jsonl(input)?;
        (ROLLOUTS_FORMAT, rollouts.into_iter().map(|r| r.joint_traj).collect())
    } else {
        let (_, episodes) = read_steps_csv(input)?;
        let mut trajectories = Vec::with_capacity(episodes.len());
        for episode in episodes {
            trajectories.push(JointTrajectory::new(cfg.dt, episode.samples)?);
        }
        (STEPS_FORMAT, trajectories)
    };
    if trajectories.is_empty() {
        return Err(Error::EmptyTrajectory);
    }

    let mut reports = Vec::with_capacity(trajectories.len());
    for traj in &trajectories {
        if traj.dof() != model.dof() {
            return Err(Error::DimensionMismatch {
                context: "trajectory joint count vs arm model",
                expected: model.dof(),
                got: traj.dof(),
            });
        }
        reports.push(ee_smoothness_with(&model, traj, cfg.jacobian_mode)?);
    }
    let n = reports.len() as f64;
    let mean_jerk = reports.iter().map(|r| r.mean_jerk_norm).sum::<f64>() / n;
    let peak_jerk = reports.iter().map(|r| r.peak_jerk_norm).sum::<f64>() / n;
    println!("input={} format={format_name} episodes={}", input.display(), reports.len());
    println!("mean_jerk={mean_jerk} peak_jerk={peak_jerk}");

    let out_path = out.unwrap_or_else(|| out_root().join("analysis.csv"));
    ensure_parent(&out_path)?;
    write_report_csv(&out_path, &reports, &hash)?;
    println!("wrote {}", out_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// ablate

fn cmd_ablate(config: Option<&Path>, seeds: &str, out_dir: Option<PathBuf>) -> Result<()> {
    let (base, origin) = load_config(config)?;
    base.validate()?;
    let seeds = parse_seeds(seeds)?;
    let dir = out_dir.unwrap_or_else(out_root);
    std::fs::create_dir_all(&dir)?;
    let hash = base.hash()?;
    let env_cfg = base.env_config()?;

    let modes = [RewardMode::Binary, RewardMode::Random, RewardMode::Smooth];
    let mut results: Vec<Vec<(u64, f64, f64)>> = vec![Vec::new(); modes.len()];
    for &seed in &seeds {
        let mut cfg = base.clone();
        cfg.bc_seed = seed;
        cfg.grpo_seed = seed;
        // One cloning run per seed, shared by all three reward modes, so the
        // modes are compared from identical starting points.
        let demos = demo_corpus(&env_cfg, &cfg.scripted_config(), cfg.n_demos, cfg.demo_seed)?;
        let pairs = demo_chunk_pairs(&demos, cfg.chunk_size)?;
        let (bc_params, _) = bc_train(&pairs, cfg.arch()?, &cfg.bc_config())?;
        for (i, &mode) in modes.iter().enumerate() {
            let mut mode_cfg = cfg.clone();
            mode_cfg.reward_mode = mode;
            let outcome = grpo_train(
                bc_params.clone(),
                &env_cfg,
                &mode_cfg.grpo_config(),
                &mode_cfg.reward_config(),
            )?;
            if let Some(msg) = outcome.aborted {
                return Err(Error::NumericalFailure(format!(
                    "seed {seed}, mode {}: {msg}",
                    mode.name()
                )));
            }
            let (report, _) =
                evaluate(&outcome.params, &env_cfg, cfg.eval_episodes, cfg.eval_seed)?;
            println!(
                "mode={} seed={seed} success_rate={} mean_jerk={}",
                mode.name(),
                report.success_rate,
                report.mean_jerk
            );
            results[i].push((seed, report.success_rate, report.mean_jerk));
        }
    }

    let mut rows = Vec::new();
    for (i, mode) in modes.iter().enumerate() {
        for &(seed, success_rate, mean_jerk) in &results[i] {
            rows.push(AblationRow {
                mode: mode.name().into(),
                seed: seed.to_string(),
                success_rate,
                mean_jerk,
            });
        }
    }
    for (i, mode) in modes.iter().enumerate() {
        let n = results[i].len() as f64;
        rows.push(AblationRow {
            mode: mode.name().into(),
            seed: "mean".into(),
            success_rate: results[i].iter().map(|r| r.1).sum::<f64>() / n,
            mean_jerk: results[i].iter().map(|r| r.2).sum::<f64>() / n,
        });
    }

    let path = dir.join("ablation.csv");
    write_ablation_csv(&path, &rows, &hash)?;
    let mut manifest = ExperimentManifest::new(&origin, &hash, seeds)?;
    manifest.record("ablation.csv", ABLATION_FORMAT);
    manifest.write(&dir.join("ablation_manifest.json"))?;
    print!("{}", render_ablation_csv(&rows, &hash));
    println!("wrote {}", path.display());
    Ok(())
}
