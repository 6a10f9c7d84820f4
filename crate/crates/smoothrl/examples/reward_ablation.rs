//! One-seed taste of the reward-mode comparison behind `smoothrl ablate`:
//! the same cloning checkpoint fine-tuned under each reward, one table out.

use smoothrl::config::ExperimentConfig;
use smoothrl::scripted::demo_corpus;
use smoothrl::trainer::{bc_train, demo_chunk_pairs, evaluate, grpo_train, RewardMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ExperimentConfig::default();
    cfg.batches = 300;
    cfg.eval_episodes = 100;

    let env_cfg = cfg.env_config()?;
    let demos = demo_corpus(&env_cfg, &cfg.scripted_config(), cfg.n_demos, cfg.demo_seed)?;
    let pairs = demo_chunk_pairs(&demos, cfg.chunk_size)?;
    let (bc_params, _) = bc_train(&pairs, cfg.arch()?, &cfg.bc_config())?;
    let (bc_report, _) = evaluate(&bc_params, &env_cfg, cfg.eval_episodes, cfg.eval_seed)?;

    println!("{:<10} {:>12} {:>12}", "mode", "success", "mean |jerk|");
    println!("{:<10} {:>12} {:>12.4}", "cloned", bc_report.success_rate, bc_report.mean_jerk);
    for mode in [RewardMode::Binary, RewardMode::Random, RewardMode::Smooth] {
        let mut run_cfg = cfg.clone();
        run_cfg.reward_mode = mode;
        let outcome = grpo_train(
            bc_params.clone(),
            &env_cfg,
            &run_cfg.grpo_config(),
            &run_cfg.reward_config(),
        )?;
        if let Some(msg) = outcome.aborted {
            return Err(format!("optimization aborted under {}: {msg}", mode.name()).into());
        }
        let (report, _) = evaluate(&outcome.params, &env_cfg, cfg.eval_episodes, cfg.eval_seed)?;
        println!("{:<10} {:>12} {:>12.4}", mode.name(), report.success_rate, report.mean_jerk);
    }
    Ok(())
}
