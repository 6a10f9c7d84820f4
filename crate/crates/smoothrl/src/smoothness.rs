//! Trajectory smoothness metrics and the minimum-jerk quintic reference
//! profile used for scripted demonstrations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{self, JointTrajectory, ManipulatorModel};
use crate::vec2::{self, Vec2};

/// Jerk summary statistics over one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    /// (1/T) Σₜ ‖jerk(t)‖₂ with T = number of samples.
    pub mean_jerk_norm: f64,
    pub peak_jerk_norm: f64,
    pub mean_sq_jerk: f64,
    pub horizon: usize,
}

impl SmoothnessReport {
    pub const CSV_HEADER: &'static str = "mean_jerk,peak_jerk,mean_sq_jerk,horizon";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.mean_jerk_norm, self.peak_jerk_norm, self.mean_sq_jerk, self.horizon
        )
    }
}

/// Point-to-point Cartesian segment traversed with the rest-to-rest quintic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinJerkSegment {
    pub start: Vec2,
    pub end: Vec2,
    pub duration: f64,
}

impl MinJerkSegment {
    pub fn new(start: Vec2, end: Vec2, duration: f64) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::InvalidConfig("segment duration must be positive".into()));
        }
        Ok(Self { start, end, duration })
    }
}

/// Mean, peak, and mean-square Euclidean jerk over a list of jerk vectors.
pub fn average_jerk(jerks: &[Vec2]) -> Result<SmoothnessReport> {
    if jerks.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if jerks.iter().any(|j| !j[0].is_finite() || !j[1].is_finite()) {
        return Err(Error::NumericalFailure("non-finite jerk sample".into()));
    }
    let t = jerks.len() as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut peak: f64 = 0.0;
    for j in jerks {
        let n = vec2::norm(*j);
        sum += n;
        sum_sq += n * n;
        peak = peak.max(n);
    }
    Ok(SmoothnessReport {
        mean_jerk_norm: sum / t,
        peak_jerk_norm: peak,
        mean_sq_jerk: sum_sq / t,
        horizon: jerks.len(),
    })
}

/// Joint derivatives, end-effector kinematics, and jerk statistics of a joint
/// trajectory in one call.
pub fn ee_smoothness(model: &ManipulatorModel, traj: &JointTrajectory) -> Result<SmoothnessReport> {
    ee_smoothness_with(model, traj, kinematics::JacobianDerivativeMode::Analytic)
}

/// Same as [`ee_smoothness`] with an explicit choice of J̇/J̈ evaluation.
pub fn ee_smoothness_with(
    model: &ManipulatorModel,
    traj: &JointTrajectory,
    mode: kinematics::JacobianDerivativeMode,
) -> Result<SmoothnessReport> {
    let states = kinematics::estimate_joint_derivatives(traj)?;
    let ee = kinematics::ee_kinematics_with(model, &states, mode)?;
    let jerks: Vec<Vec2> = ee.iter().map(|s| s.jerk).collect();
    average_jerk(&jerks)
}

/// Rest-to-rest quintic s(τ) = 10τ³ − 15τ⁴ + 6τ⁵ on τ ∈ [0, 1].
///
/// The unique degree-5 polynomial with s(0)=0, s(1)=1 and zero velocity and
/// acceleration at both ends; it minimizes ∫ s‴² under those constraints.
pub fn quintic_profile(tau: f64) -> f64 {
    let t3 = tau * tau * tau;
    t3 * (10.0 - 15.0 * tau + 6.0 * tau * tau)
}

/// Third derivative of the quintic profile: s‴(τ) = 360τ² − 360τ + 60.
pub fn quintic_jerk_profile(tau: f64) -> f64 {
    360.0 * tau * tau - 360.0 * tau + 60.0
}

/// Position along a segment at time t under the quintic profile.
pub fn min_jerk_position(seg: &MinJerkSegment, t: f64) -> Result<Vec2> {
    if !(0.0..=seg.duration).contains(&t) {
        return Err(Error::ContractViolation(format!(
            "time {t} outside segment [0, {}]",
            seg.duration
        )));
    }
    let s = quintic_profile(t / seg.duration);
    Ok(vec2::add(seg.start, vec2::scale(vec2::sub(seg.end, seg.start), s)))
}

/// Joint trajectory applying the quintic profile per joint from q_start to
/// q_goal over `duration`, sampled at period `dt`.
///
/// `duration` is rounded to the nearest multiple of dt (at least 2·dt) so the
/// first and last samples hit the endpoints exactly. Stays within joint limits
/// by convexity of the interpolation.
pub fn sample_min_jerk_joint_traj(
    model: &ManipulatorModel,
    q_start: &[f64],
    q_goal: &[f64],
    duration: f64,
    dt: f64,
) -> Result<JointTrajectory> {
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig("dt must be positive".into()));
    }
    if duration < 2.0 * dt {
        return Err(Error::InvalidConfig(format!(
            "duration {duration} shorter than two control periods ({})",
            2.0 * dt
        )));
    }
    if !model.within_limits(q_start) {
        return Err(Error::InfeasibleDemonstration("start outside joint limits".into()));
    }
    if !model.within_limits(q_goal) {
        return Err(Error::InfeasibleDemonstration("goal outside joint limits".into()));
    }
    let n_steps = (duration / dt).round().max(2.0) as usize;
    let samples = (0..=n_steps)
        .map(|i| {
            let s = quintic_profile(i as f64 / n_steps as f64);
            q_start
                .iter()
                .zip(q_goal)
                .map(|(a, b)| a + (b - a) * s)
                .collect()
        })
        .collect();
    JointTrajectory::new(dt, samples)
}
