//! Prints the rest-to-rest quintic timing law and its jerk over one
//! normalized segment.

use smoothrl::smoothness::{quintic_jerk_profile, quintic_profile};

fn main() {
    println!("{:>5} {:>8} {:>9}", "tau", "s", "s'''");
    for k in 0..=10 {
        let tau = k as f64 / 10.0;
        println!("{tau:>5.1} {:>8.4} {:>9.2}", quintic_profile(tau), quintic_jerk_profile(tau));
    }

    // Trapezoid quadrature of |s'''| over [0, 1]. Fine-tuning compares policy
    // jerk against this per-segment constant, scaled by amplitude/duration^3.
    let n = 200_000;
    let mut acc = 0.0;
    for i in 0..n {
        let a = quintic_jerk_profile(i as f64 / n as f64).abs();
        let b = quintic_jerk_profile((i + 1) as f64 / n as f64).abs();
        acc += 0.5 * (a + b) / n as f64;
    }
    println!("time-averaged |s'''| = {acc:.4}");
}
