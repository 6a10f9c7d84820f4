//! Computes hand jerk for a joint-space sweep two ways: through the Jacobian
//! chain on estimated joint derivatives, and as a bare third difference of
//! hand positions. The two must agree, and this prints how closely they do.

use smoothrl::kinematics::{
    ee_kinematics, estimate_joint_derivatives, forward_kinematics, ManipulatorModel,
};
use smoothrl::smoothness::sample_min_jerk_joint_traj;
use smoothrl::vec2::{norm, sub, Vec2};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = ManipulatorModel::new(vec![1.0, 0.8], vec![(-3.0, 3.0), (-3.0, 3.0)])?;
    let dt = 0.005;
    let traj = sample_min_jerk_joint_traj(&model, &[0.2, -0.4], &[1.1, 0.9], 1.0, dt)?;

    let states = estimate_joint_derivatives(&traj)?;
    let chain = ee_kinematics(&model, &states)?;
    let pos: Vec<Vec2> = traj
        .samples
        .iter()
        .map(|q| forward_kinematics(&model, q))
        .collect::<Result<_, _>>()?;

    let mut worst = 0.0f64;
    let mut peak = 0.0f64;
    for i in 2..pos.len() - 2 {
        let fd = [
            (pos[i + 2][0] - 2.0 * pos[i + 1][0] + 2.0 * pos[i - 1][0] - pos[i - 2][0])
                / (2.0 * dt * dt * dt),
            (pos[i + 2][1] - 2.0 * pos[i + 1][1] + 2.0 * pos[i - 1][1] - pos[i - 2][1])
                / (2.0 * dt * dt * dt),
        ];
        worst = worst.max(norm(sub(chain[i].jerk, fd)));
        peak = peak.max(norm(chain[i].jerk));
    }

    println!("sweep: {} samples at dt={dt}", traj.len());
    println!("{:>6} {:>10} {:>10}", "t", "|vel|", "|jerk|");
    for i in (0..traj.len()).step_by(25) {
        println!(
            "{:>6.3} {:>10.4} {:>10.4}",
            i as f64 * dt,
            norm(chain[i].velocity),
            norm(chain[i].jerk)
        );
    }
    println!("peak |jerk| {peak:.4}");
    println!("worst chain vs finite-difference gap {worst:.3e} ({:.2e} relative)", worst / peak);
    Ok(())
}
