//! Fine-tunes a cloned policy against the jerk-discounted success reward and
//! prints the collection statistics as they move. Cloning runs at its full
//! budget (a shortchanged clone explores too wildly to ever see the reward);
//! only the fine-tuning run is trimmed, so expect the trend, not the full
//! effect.

use smoothrl::config::ExperimentConfig;
use smoothrl::scripted::demo_corpus;
use smoothrl::trainer::{bc_train, demo_chunk_pairs, evaluate, grpo_train, RewardMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ExperimentConfig::default();
    cfg.reward_mode = RewardMode::Smooth;
    cfg.batches = 250;
    cfg.eval_episodes = 100;

    let env_cfg = cfg.env_config()?;
    let demos = demo_corpus(&env_cfg, &cfg.scripted_config(), cfg.n_demos, cfg.demo_seed)?;
    let pairs = demo_chunk_pairs(&demos, cfg.chunk_size)?;
    let (params, _) = bc_train(&pairs, cfg.arch()?, &cfg.bc_config())?;
    let (before, _) = evaluate(&params, &env_cfg, cfg.eval_episodes, cfg.eval_seed)?;
    println!("after cloning:     success_rate={} mean |jerk|={:.4}", before.success_rate, before.mean_jerk);

    let outcome = grpo_train(params, &env_cfg, &cfg.grpo_config(), &cfg.reward_config())?;
    if let Some(msg) = outcome.aborted {
        return Err(format!("optimization aborted: {msg}").into());
    }
    println!("{:>6} {:>8} {:>8} {:>8}", "batch", "reward", "success", "jerk");
    for row in outcome.log.iter().step_by(50) {
        println!(
            "{:>6} {:>8.3} {:>8.3} {:>8.4}",
            row.batch, row.mean_reward, row.success_rate, row.mean_jerk
        );
    }

    let (after, _) = evaluate(&outcome.params, &env_cfg, cfg.eval_episodes, cfg.eval_seed)?;
    println!("after fine-tuning: success_rate={} mean |jerk|={:.4}", after.success_rate, after.mean_jerk);
    Ok(())
}
