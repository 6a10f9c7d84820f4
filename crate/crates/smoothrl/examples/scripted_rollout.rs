//! Runs one scripted minimum-jerk episode in the reaching environment and
//! prints the step trace.

use smoothrl::config::ExperimentConfig;
use smoothrl::kinematics::forward_kinematics;
use smoothrl::scripted::scripted_episode;
use smoothrl::sim_env::Env;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::default();
    let env_cfg = cfg.env_config()?;
    let model = env_cfg.model.clone();
    let mut env = Env::new(env_cfg)?;
    let rollout = scripted_episode(&mut env, 42, &cfg.scripted_config())?;

    let goal = rollout.observations[0].goal;
    println!("goal = ({:.3}, {:.3})", goal[0], goal[1]);
    println!("{:>4} {:>8} {:>8} {:>8} {:>8}  latched", "t", "q1", "q2", "ee_x", "ee_y");
    for (t, q) in rollout.joint_traj.samples.iter().enumerate() {
        let ee = forward_kinematics(&model, q)?;
        let latched = t > 0 && rollout.success_by_step[t - 1];
        println!(
            "{t:>4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}  {}",
            q[0],
            q[1],
            ee[0],
            ee[1],
            if latched { "yes" } else { "no" }
        );
    }
    println!(
        "success={} mean |jerk|={:.4} peak |jerk|={:.4}",
        rollout.success, rollout.smoothness.mean_jerk_norm, rollout.smoothness.peak_jerk_norm
    );
    Ok(())
}
