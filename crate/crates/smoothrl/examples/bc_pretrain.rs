//! Clones the scripted controller into the policy network and reports how
//! the clone evaluates. The same thing `smoothrl train --stage bc` does,
//! minus the artifacts.

use smoothrl::config::ExperimentConfig;
use smoothrl::scripted::demo_corpus;
use smoothrl::trainer::{bc_train, demo_chunk_pairs, evaluate};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ExperimentConfig::default();
    cfg.eval_episodes = 100;

    let env_cfg = cfg.env_config()?;
    let demos = demo_corpus(&env_cfg, &cfg.scripted_config(), cfg.n_demos, cfg.demo_seed)?;
    let pairs = demo_chunk_pairs(&demos, cfg.chunk_size)?;
    println!("{} demonstrations, {} observation/chunk pairs", demos.len(), pairs.len());

    let (params, losses) = bc_train(&pairs, cfg.arch()?, &cfg.bc_config())?;
    for (i, loss) in losses.iter().enumerate().step_by(1000) {
        println!("iter {i:>5}  loss {loss:.5}");
    }

    let (report, _) = evaluate(&params, &env_cfg, cfg.eval_episodes, cfg.eval_seed)?;
    println!(
        "clone: success_rate={} mean |jerk|={:.4} (demos sit near {:.4})",
        report.success_rate,
        report.mean_jerk,
        demos.iter().map(|r| r.smoothness.mean_jerk_norm).sum::<f64>() / demos.len() as f64
    );
    Ok(())
}
