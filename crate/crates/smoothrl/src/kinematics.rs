//! Differential kinematics for planar serial arms.
//!
//! Maps joint-space trajectories to end-effector velocity, acceleration, and
//! jerk through the Jacobian chain
//!
//! ```text
//! v    = J q̇
//! a    = J̇ q̇ + J q̈
//! jerk = J̈ q̇ + 2 J̇ q̈ + J q⃛
//! ```
//!
//! with joint derivatives estimated by central finite differences (one-sided
//! stencils of the same order at the boundaries). All functions here are pure;
//! joint limits are not enforced at this level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec2::{self, Vec2};

/// Planar n-link arm geometry. Owner of all kinematic maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManipulatorModel {
    link_lengths: Vec<f64>,
    joint_limits: Vec<(f64, f64)>,
}

impl ManipulatorModel {
    pub fn new(link_lengths: Vec<f64>, joint_limits: Vec<(f64, f64)>) -> Result<Self> {
        if link_lengths.is_empty() {
            return Err(Error::InvalidConfig("arm needs at least one link".into()));
        }
        if link_lengths.len() != joint_limits.len() {
            return Err(Error::DimensionMismatch {
                context: "manipulator model",
                expected: link_lengths.len(),
                got: joint_limits.len(),
            });
        }
        if link_lengths.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::InvalidConfig("link lengths must be positive".into()));
        }
        if joint_limits.iter().any(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::InvalidConfig("joint limits must be nonempty intervals".into()));
        }
        Ok(Self { link_lengths, joint_limits })
    }

    pub fn dof(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn link_lengths(&self) -> &[f64] {
        &self.link_lengths
    }

    pub fn joint_limits(&self) -> &[(f64, f64)] {
        &self.joint_limits
    }

    /// Total reach of the arm (sum of link lengths).
    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    /// Mid-range of every joint interval; the simulator's home configuration.
    pub fn home_configuration(&self) -> Vec<f64> {
        self.joint_limits.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.len() == self.dof()
            && q.iter()
                .zip(&self.joint_limits)
                .all(|(qi, (lo, hi))| *qi >= *lo && *qi <= *hi)
    }

    pub fn clamp_to_limits(&self, q: &mut [f64]) {
        for (qi, (lo, hi)) in q.iter_mut().zip(&self.joint_limits) {
            *qi = qi.clamp(*lo, *hi);
        }
    }

    fn check_dim(&self, v: &[f64], context: &'static str) -> Result<()> {
        if v.len() != self.dof() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.dof(),
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// Joint position, velocity, acceleration, and jerk at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub q: Vec<f64>,
    pub q_dot: Vec<f64>,
    pub q_ddot: Vec<f64>,
    pub q_dddot: Vec<f64>,
}

impl JointState {
    pub fn at_rest(q: Vec<f64>) -> Self {
        let zeros = vec![0.0; q.len()];
        Self {
            q,
            q_dot: zeros.clone(),
            q_ddot: zeros.clone(),
            q_dddot: zeros,
        }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }
}

/// Uniformly sampled joint-position time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTrajectory {
    pub dt: f64,
    pub samples: Vec<Vec<f64>>,
}

impl JointTrajectory {
    pub fn new(dt: f64, samples: Vec<Vec<f64>>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidConfig("trajectory dt must be positive".into()));
        }
        if samples.len() < 2 {
            return Err(Error::TrajectoryTooShort { min: 2, got: samples.len() });
        }
        let dof = samples[0].len();
        if samples.iter().any(|s| s.len() != dof) {
            return Err(Error::ContractViolation(
                "trajectory samples have inconsistent dimensions".into(),
            ));
        }
        Ok(Self { dt, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }
}

/// End-effector kinematic state: position plus its first three time derivatives
/// (linear parts only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EeKinematicState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub acceleration: Vec2,
    pub jerk: Vec2,
}

/// A 2 x dof matrix stored by columns; column i holds the partial of the
/// end-effector position with respect to joint i.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarMatrix {
    cols: Vec<Vec2>,
}

impl PlanarMatrix {
    pub fn zeros(ncols: usize) -> Self {
        Self { cols: vec![[0.0, 0.0]; ncols] }
    }

    pub fn from_cols(cols: Vec<Vec2>) -> Self {
        Self { cols }
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn col(&self, i: usize) -> Vec2 {
        self.cols[i]
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.cols[col][row]
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[f64]) -> Vec2 {
        debug_assert_eq!(v.len(), self.cols.len());
        let mut out = [0.0, 0.0];
        for (c, vi) in self.cols.iter().zip(v) {
            out[0] += c[0] * vi;
            out[1] += c[1] * vi;
        }
        out
    }

    /// Largest absolute entrywise difference to another matrix.
    pub fn max_abs_diff(&self, other: &PlanarMatrix) -> f64 {
        self.cols
            .iter()
            .zip(&other.cols)
            .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
            .fold(0.0, f64::max)
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.cols
            .iter()
            .map(|c| c[0].abs().max(c[1].abs()))
            .fold(0.0, f64::max)
    }
}

/// Cumulative joint angles Θ_i = Σ_{j<=i} q_j and their sin/cos.
fn cumulative_angles(q: &[f64]) -> Vec<(f64, f64)> {
    let mut theta = 0.0;
    q.iter()
        .map(|qi| {
            theta += qi;
            theta.sin_cos()
        })
        .collect()
}

/// End-effector position of a planar serial arm.
pub fn forward_kinematics(model: &ManipulatorModel, q: &[f64]) -> Result<Vec2> {
    model.check_dim(q, "forward_kinematics")?;
    let mut p = [0.0, 0.0];
    for (li, (s, c)) in model.link_lengths.iter().zip(cumulative_angles(q)) {
        p[0] += li * c;
        p[1] += li * s;
    }
    Ok(p)
}

/// Analytic planar Jacobian. Column i = Σ_{k>=i} L_k (-sin Θ_k, cos Θ_k).
pub fn jacobian(model: &ManipulatorModel, q: &[f64]) -> Result<PlanarMatrix> {
    model.check_dim(q, "jacobian")?;
    let n = model.dof();
    let sc = cumulative_angles(q);
    // Suffix sums: column i accumulates contributions of links i..n.
    let mut cols = vec![[0.0, 0.0]; n];
    let mut acc = [0.0, 0.0];
    for i in (0..n).rev() {
        let (s, c) = sc[i];
        let l = model.link_lengths[i];
        acc[0] += -l * s;
        acc[1] += l * c;
        cols[i] = acc;
    }
    Ok(PlanarMatrix::from_cols(cols))
}

/// Time derivative of the Jacobian along q(t) with velocity q̇.
///
/// Column i = Σ_{k>=i} L_k Θ̇_k (-cos Θ_k, -sin Θ_k) where Θ̇_k = Σ_{j<=k} q̇_j.
pub fn jacobian_dot(model: &ManipulatorModel, q: &[f64], q_dot: &[f64]) -> Result<PlanarMatrix> {
    model.check_dim(q, "jacobian_dot")?;
    model.check_dim(q_dot, "jacobian_dot")?;
    let n = model.dof();
    let sc = cumulative_angles(q);
    let mut theta_dot = 0.0;
    let rates: Vec<f64> = q_dot
        .iter()
        .map(|v| {
            theta_dot += v;
            theta_dot
        })
        .collect();
    let mut cols = vec![[0.0, 0.0]; n];
    let mut acc = [0.0, 0.0];
    for i in (0..n).rev() {
        let (s, c) = sc[i];
        let l = model.link_lengths[i];
        let w = rates[i];
        acc[0] += -l * c * w;
        acc[1] += -l * s * w;
        cols[i] = acc;
    }
    Ok(PlanarMatrix::from_cols(cols))
}

/// Second time derivative of the Jacobian along a joint path with velocity
/// q̇ and acceleration q̈ (full chain-rule expansion).
///
/// Column i = Σ_{k>=i} L_k [ Θ̇_k² (sin Θ_k, -cos Θ_k) + Θ̈_k (-cos Θ_k, -sin Θ_k) ].
pub fn jacobian_ddot(
    model: &ManipulatorModel,
    q: &[f64],
    q_dot: &[f64],
    q_ddot: &[f64],
) -> Result<PlanarMatrix> {
    model.check_dim(q, "jacobian_ddot")?;
    model.check_dim(q_dot, "jacobian_ddot")?;
    model.check_dim(q_ddot, "jacobian_ddot")?;
    let n = model.dof();
    let sc = cumulative_angles(q);
    let mut td = 0.0;
    let mut tdd = 0.0;
    let rates: Vec<(f64, f64)> = q_dot
        .iter()
        .zip(q_ddot)
        .map(|(v, a)| {
            td += v;
            tdd += a;
            (td, tdd)
        })
        .collect();
    let mut cols = vec![[0.0, 0.0]; n];
    let mut acc = [0.0, 0.0];
    for i in (0..n).rev() {
        let (s, c) = sc[i];
        let l = model.link_lengths[i];
        let (w, a) = rates[i];
        acc[0] += l * (s * w * w - c * a);
        acc[1] += l * (-c * w * w - s * a);
        cols[i] = acc;
    }
    Ok(PlanarMatrix::from_cols(cols))
}

// ---------------------------------------------------------------------------
// Finite-difference stencils
//
// All stencils below are second-order accurate. The interior uses central
// differences; the first and last points (and, for the third derivative, the
// second and second-to-last) use one-sided stencils of the same order.
//
// One-sided stencils are written in differences from the boundary sample
// (their coefficients sum to zero, so this is an identity); it cancels the
// common offset so that bitwise-constant input yields exactly zero.
// ---------------------------------------------------------------------------

fn first_derivative(f: &[f64], dt: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    out[0] = (4.0 * (f[1] - f[0]) - (f[2] - f[0])) / (2.0 * dt);
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - f[i - 1]) / (2.0 * dt);
    }
    out[n - 1] = -(4.0 * (f[n - 2] - f[n - 1]) - (f[n - 3] - f[n - 1])) / (2.0 * dt);
    out
}

fn second_derivative(f: &[f64], dt: f64) -> Vec<f64> {
    let n = f.len();
    let dt2 = dt * dt;
    let mut out = vec![0.0; n];
    out[0] = (-5.0 * (f[1] - f[0]) + 4.0 * (f[2] - f[0]) - (f[3] - f[0])) / dt2;
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / dt2;
    }
    out[n - 1] =
        (-5.0 * (f[n - 2] - f[n - 1]) + 4.0 * (f[n - 3] - f[n - 1]) - (f[n - 4] - f[n - 1])) / dt2;
    out
}

fn third_derivative(f: &[f64], dt: f64) -> Vec<f64> {
    let n = f.len();
    let d = 2.0 * dt * dt * dt;
    let mut out = vec![0.0; n];
    out[0] = (18.0 * (f[1] - f[0]) - 24.0 * (f[2] - f[0]) + 14.0 * (f[3] - f[0])
        - 3.0 * (f[4] - f[0]))
        / d;
    out[1] = (10.0 * (f[1] - f[0]) - 12.0 * (f[2] - f[0]) + 6.0 * (f[3] - f[0]) - (f[4] - f[0]))
        / d;
    for i in 2..n - 2 {
        out[i] = (f[i + 2] - 2.0 * f[i + 1] + 2.0 * f[i - 1] - f[i - 2]) / d;
    }
    out[n - 2] = -(10.0 * (f[n - 2] - f[n - 1]) - 12.0 * (f[n - 3] - f[n - 1])
        + 6.0 * (f[n - 4] - f[n - 1])
        - (f[n - 5] - f[n - 1]))
        / d;
    out[n - 1] = -(18.0 * (f[n - 2] - f[n - 1]) - 24.0 * (f[n - 3] - f[n - 1])
        + 14.0 * (f[n - 4] - f[n - 1])
        - 3.0 * (f[n - 5] - f[n - 1]))
        / d;
    out
}

/// Estimate q̇, q̈, q⃛ at every sample of a uniformly spaced joint trajectory.
///
/// Needs at least 5 samples (the third-difference stencil is 5 points wide).
/// Output has the same length as the input.
pub fn estimate_joint_derivatives(traj: &JointTrajectory) -> Result<Vec<JointState>> {
    let n = traj.len();
    if n < 5 {
        return Err(Error::TrajectoryTooShort { min: 5, got: n });
    }
    let dof = traj.dof();
    let mut states: Vec<JointState> = traj
        .samples
        .iter()
        .map(|q| JointState {
            q: q.clone(),
            q_dot: vec![0.0; dof],
            q_ddot: vec![0.0; dof],
            q_dddot: vec![0.0; dof],
        })
        .collect();
    let mut series = vec![0.0; n];
    for j in 0..dof {
        for (t, s) in traj.samples.iter().enumerate() {
            series[t] = s[j];
        }
        let d1 = first_derivative(&series, traj.dt);
        let d2 = second_derivative(&series, traj.dt);
        let d3 = third_derivative(&series, traj.dt);
        for t in 0..n {
            states[t].q_dot[j] = d1[t];
            states[t].q_ddot[j] = d2[t];
            states[t].q_dddot[j] = d3[t];
        }
    }
    Ok(states)
}

/// How J̇ and J̈ are obtained inside [`ee_kinematics_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianDerivativeMode {
    /// Closed-form planar expressions (default).
    #[default]
    Analytic,
    /// Finite differences of the analytic Jacobian along the joint path.
    /// Slower, but generalizes to manipulators without closed-form J̇/J̈.
    FiniteDifference,
}

fn fd_jacobian_derivatives(
    model: &ManipulatorModel,
    state: &JointState,
) -> Result<(PlanarMatrix, PlanarMatrix)> {
    let h = 1e-5;
    let dof = state.dof();
    // Quadratic path q(t) = q + t q̇ + t²/2 q̈ matches position, velocity, and
    // acceleration at t = 0, so J(q(±h)) brackets both derivatives.
    let at = |t: f64| -> Vec<f64> {
        (0..dof)
            .map(|j| state.q[j] + t * state.q_dot[j] + 0.5 * t * t * state.q_ddot[j])
            .collect()
    };
    let j_plus = jacobian(model, &at(h))?;
    let j_zero = jacobian(model, &state.q)?;
    let j_minus = jacobian(model, &at(-h))?;
    let n = j_zero.ncols();
    let mut dot = PlanarMatrix::zeros(n);
    let mut ddot = PlanarMatrix::zeros(n);
    for i in 0..n {
        for r in 0..2 {
            dot.cols[i][r] = (j_plus.cols[i][r] - j_minus.cols[i][r]) / (2.0 * h);
            ddot.cols[i][r] =
                (j_plus.cols[i][r] - 2.0 * j_zero.cols[i][r] + j_minus.cols[i][r]) / (h * h);
        }
    }
    Ok((dot, ddot))
}

/// End-effector position, velocity, acceleration, and jerk for each joint
/// state, using the analytic Jacobian chain.
pub fn ee_kinematics(model: &ManipulatorModel, states: &[JointState]) -> Result<Vec<EeKinematicState>> {
    ee_kinematics_with(model, states, JacobianDerivativeMode::Analytic)
}

/// Same as [`ee_kinematics`] with an explicit choice of J̇/J̈ evaluation.
pub fn ee_kinematics_with(
    model: &ManipulatorModel,
    states: &[JointState],
    mode: JacobianDerivativeMode,
) -> Result<Vec<EeKinematicState>> {
    if states.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    states
        .iter()
        .map(|s| {
            model.check_dim(&s.q, "ee_kinematics")?;
            model.check_dim(&s.q_dot, "ee_kinematics")?;
            model.check_dim(&s.q_ddot, "ee_kinematics")?;
            model.check_dim(&s.q_dddot, "ee_kinematics")?;
            let j = jacobian(model, &s.q)?;
            let (j_dot, j_ddot) = match mode {
                JacobianDerivativeMode::Analytic => (
                    jacobian_dot(model, &s.q, &s.q_dot)?,
                    jacobian_ddot(model, &s.q, &s.q_dot, &s.q_ddot)?,
                ),
                JacobianDerivativeMode::FiniteDifference => fd_jacobian_derivatives(model, s)?,
            };
            let velocity = j.apply(&s.q_dot);
            let acceleration = vec2::add(j_dot.apply(&s.q_dot), j.apply(&s.q_ddot));
            let jerk = vec2::add(
                vec2::add(j_ddot.apply(&s.q_dot), vec2::scale(j_dot.apply(&s.q_ddot), 2.0)),
                j.apply(&s.q_dddot),
            );
            let position = forward_kinematics(model, &s.q)?;
            for v in [position, velocity, acceleration, jerk] {
                if !v[0].is_finite() || !v[1].is_finite() {
                    return Err(Error::NumericalFailure(
                        "non-finite end-effector kinematics".into(),
                    ));
                }
            }
            Ok(EeKinematicState { position, velocity, acceleration, jerk })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn two_link() -> ManipulatorModel {
        ManipulatorModel::new(vec![1.0, 1.0], vec![(-PI, PI), (-PI, PI)]).unwrap()
    }

    fn assert_vec2_close(a: Vec2, b: Vec2, tol: f64) {
        assert!(
            (a[0] - b[0]).abs() < tol && (a[1] - b[1]).abs() < tol,
            "{a:?} vs {b:?}"
        );
    }

    #[test]
    fn fk_reference_poses() {
        let m = two_link();
        assert_vec2_close(forward_kinematics(&m, &[0.0, 0.0]).unwrap(), [2.0, 0.0], 1e-12);
        assert_vec2_close(forward_kinematics(&m, &[FRAC_PI_2, 0.0]).unwrap(), [0.0, 2.0], 1e-12);
        assert_vec2_close(
            forward_kinematics(&m, &[FRAC_PI_2, -FRAC_PI_2]).unwrap(),
            [1.0, 1.0],
            1e-12,
        );
    }

    #[test]
    fn fk_dimension_mismatch() {
        let m = two_link();
        assert!(matches!(
            forward_kinematics(&m, &[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn model_rejects_bad_geometry() {
        assert!(ManipulatorModel::new(vec![], vec![]).is_err());
        assert!(ManipulatorModel::new(vec![1.0, -1.0], vec![(0.0, 1.0), (0.0, 1.0)]).is_err());
        assert!(ManipulatorModel::new(vec![1.0], vec![(1.0, 0.0)]).is_err());
        assert!(ManipulatorModel::new(vec![1.0], vec![(0.0, 1.0), (0.0, 1.0)]).is_err());
    }

    #[test]
    fn jacobian_reference_configurations() {
        let m = two_link();
        let j = jacobian(&m, &[0.0, 0.0]).unwrap();
        assert_eq!(j.at(0, 0), 0.0);
        assert_eq!(j.at(0, 1), 0.0);
        assert!((j.at(1, 0) - 2.0).abs() < 1e-12);
        assert!((j.at(1, 1) - 1.0).abs() < 1e-12);

        let j = jacobian(&m, &[FRAC_PI_2, 0.0]).unwrap();
        assert!((j.at(0, 0) + 2.0).abs() < 1e-12);
        assert!((j.at(0, 1) + 1.0).abs() < 1e-12);
        assert!(j.at(1, 0).abs() < 1e-12);
        assert!(j.at(1, 1).abs() < 1e-12);
    }

    /// Central finite differences of forward kinematics, the independent
    /// oracle for the analytic Jacobian.
    fn fd_jacobian(m: &ManipulatorModel, q: &[f64], h: f64) -> PlanarMatrix {
        let mut cols = Vec::with_capacity(q.len());
        for i in 0..q.len() {
            let mut qp = q.to_vec();
            let mut qm = q.to_vec();
            qp[i] += h;
            qm[i] -= h;
            let pp = forward_kinematics(m, &qp).unwrap();
            let pm = forward_kinematics(m, &qm).unwrap();
            cols.push([(pp[0] - pm[0]) / (2.0 * h), (pp[1] - pm[1]) / (2.0 * h)]);
        }
        PlanarMatrix::from_cols(cols)
    }

    #[test]
    fn jacobian_matches_fd_of_fk() {
        let m = two_link();
        let mut rng = stream("kin-jac", &[0]);
        for _ in 0..50 {
            let q: Vec<f64> = (0..2).map(|_| rng.gen_range(-PI..PI)).collect();
            let analytic = jacobian(&m, &q).unwrap();
            let fd = fd_jacobian(&m, &q, 1e-5);
            let scale = fd.max_abs_entry().max(1e-9);
            assert!(analytic.max_abs_diff(&fd) / scale < 1e-6);
        }
    }

    #[test]
    fn jacobian_dot_reference_and_fd() {
        let m = two_link();
        let jd = jacobian_dot(&m, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((jd.at(0, 0) + 2.0).abs() < 1e-12);
        assert!((jd.at(0, 1) + 1.0).abs() < 1e-12);
        assert!(jd.at(1, 0).abs() < 1e-12);
        assert!(jd.at(1, 1).abs() < 1e-12);

        let zero = jacobian_dot(&m, &[0.3, -0.7], &[0.0, 0.0]).unwrap();
        assert_eq!(zero.max_abs_entry(), 0.0);

        // FD of the analytic Jacobian along q(t) = q + t q̇.
        let mut rng = stream("kin-jdot", &[0]);
        let h = 1e-5;
        for _ in 0..50 {
            let q: Vec<f64> = (0..2).map(|_| rng.gen_range(-PI..PI)).collect();
            let qd: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let qp: Vec<f64> = q.iter().zip(&qd).map(|(a, b)| a + h * b).collect();
            let qm: Vec<f64> = q.iter().zip(&qd).map(|(a, b)| a - h * b).collect();
            let jp = jacobian(&m, &qp).unwrap();
            let jm = jacobian(&m, &qm).unwrap();
            let analytic = jacobian_dot(&m, &q, &qd).unwrap();
            let mut diff: f64 = 0.0;
            let mut scale: f64 = 1e-9;
            for i in 0..2 {
                for r in 0..2 {
                    let fd = (jp.at(r, i) - jm.at(r, i)) / (2.0 * h);
                    diff = diff.max((fd - analytic.at(r, i)).abs());
                    scale = scale.max(fd.abs());
                }
            }
            assert!(diff / scale < 1e-5, "diff {diff} scale {scale}");
        }
    }

    #[test]
    fn jacobian_ddot_reference_and_fd() {
        let m = two_link();
        // Stationary path.
        let z = jacobian_ddot(&m, &[0.4, 0.9], &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(z.max_abs_entry(), 0.0);

        let jdd = jacobian_ddot(&m, &[0.0, 0.0], &[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!(jdd.at(0, 0).abs() < 1e-12);
        assert!(jdd.at(0, 1).abs() < 1e-12);
        assert!((jdd.at(1, 0) + 2.0).abs() < 1e-12);
        assert!((jdd.at(1, 1) + 1.0).abs() < 1e-12);

        // Second-order central FD of the Jacobian along the quadratic path
        // q(t) = q + t q̇ + t²/2 q̈.
        let mut rng = stream("kin-jddot", &[0]);
        let h = 1e-4;
        for _ in 0..50 {
            let q: Vec<f64> = (0..2).map(|_| rng.gen_range(-PI..PI)).collect();
            let qd: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let qdd: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let at = |t: f64| -> Vec<f64> {
                (0..2).map(|j| q[j] + t * qd[j] + 0.5 * t * t * qdd[j]).collect()
            };
            let jp = jacobian(&m, &at(h)).unwrap();
            let j0 = jacobian(&m, &q).unwrap();
            let jm = jacobian(&m, &at(-h)).unwrap();
            let analytic = jacobian_ddot(&m, &q, &qd, &qdd).unwrap();
            let mut diff: f64 = 0.0;
            let mut scale: f64 = 1e-9;
            for i in 0..2 {
                for r in 0..2 {
                    let fd = (jp.at(r, i) - 2.0 * j0.at(r, i) + jm.at(r, i)) / (h * h);
                    diff = diff.max((fd - analytic.at(r, i)).abs());
                    scale = scale.max(fd.abs());
                }
            }
            assert!(diff / scale < 1e-4, "diff {diff} scale {scale}");
        }
    }

    #[test]
    fn derivative_estimates_need_five_samples() {
        let traj = JointTrajectory::new(0.1, vec![vec![0.0]; 4]).unwrap();
        assert!(matches!(
            estimate_joint_derivatives(&traj),
            Err(Error::TrajectoryTooShort { min: 5, .. })
        ));
    }

    #[test]
    fn constant_trajectory_has_zero_derivatives() {
        let traj = JointTrajectory::new(0.02, vec![vec![0.7, -0.3]; 12]).unwrap();
        for s in estimate_joint_derivatives(&traj).unwrap() {
            assert!(s.q_dot.iter().all(|v| v.abs() < 1e-12));
            assert!(s.q_ddot.iter().all(|v| v.abs() < 1e-12));
            assert!(s.q_dddot.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn stencils_are_exact_on_low_order_polynomials() {
        // q(t) = t² has exact second differences everywhere, q(t) = t³ exact
        // third differences, including the one-sided boundary stencils.
        let dt = 0.01;
        let n = 40;
        let quad: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 * dt).powi(2)]).collect();
        let cubic: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 * dt).powi(3)]).collect();

        let states = estimate_joint_derivatives(&JointTrajectory::new(dt, quad).unwrap()).unwrap();
        for s in &states {
            assert!((s.q_ddot[0] - 2.0).abs() < 1e-8, "q_ddot {}", s.q_ddot[0]);
        }
        let states = estimate_joint_derivatives(&JointTrajectory::new(dt, cubic).unwrap()).unwrap();
        for s in &states {
            assert!((s.q_dddot[0] - 6.0).abs() < 1e-6, "q_dddot {}", s.q_dddot[0]);
        }
    }

    #[test]
    fn boundary_stencils_match_interior_order() {
        // Each boundary stencil is exact on the same polynomial class as its
        // interior counterpart: quadratics for q̇, cubics for q̈, quartics
        // for q⃛. Sample one polynomial per class and check every point,
        // boundaries included.
        let dt = 0.05;
        let n = 30;
        let sample = |f: &dyn Fn(f64) -> f64| -> Vec<Vec<f64>> {
            (0..n).map(|i| vec![f(i as f64 * dt)]).collect()
        };

        let quad = sample(&|t| 1.5 * t * t - 0.4 * t + 2.0);
        let states = estimate_joint_derivatives(&JointTrajectory::new(dt, quad).unwrap()).unwrap();
        for (i, s) in states.iter().enumerate() {
            let t = i as f64 * dt;
            assert!((s.q_dot[0] - (3.0 * t - 0.4)).abs() < 1e-10, "i={i}");
        }

        let cubic = sample(&|t| 0.8 * t.powi(3) - 0.2 * t * t + t);
        let states = estimate_joint_derivatives(&JointTrajectory::new(dt, cubic).unwrap()).unwrap();
        for (i, s) in states.iter().enumerate() {
            let t = i as f64 * dt;
            assert!((s.q_ddot[0] - (4.8 * t - 0.4)).abs() < 1e-9, "i={i}");
        }

        let quartic = sample(&|t| 0.5 * t.powi(4) - 1.3 * t.powi(3) + 0.7 * t * t - t + 2.0);
        let states =
            estimate_joint_derivatives(&JointTrajectory::new(dt, quartic).unwrap()).unwrap();
        for (i, s) in states.iter().enumerate() {
            let t = i as f64 * dt;
            assert!((s.q_dddot[0] - (12.0 * t - 7.8)).abs() < 1e-7, "i={i}");
        }
    }

    #[test]
    fn ee_kinematics_zero_motion() {
        let m = two_link();
        let states = vec![JointState::at_rest(vec![0.3, 0.8]); 3];
        for s in ee_kinematics(&m, &states).unwrap() {
            assert_eq!(s.velocity, [0.0, 0.0]);
            assert_eq!(s.acceleration, [0.0, 0.0]);
            assert_eq!(s.jerk, [0.0, 0.0]);
        }
    }

    #[test]
    fn ee_kinematics_circular_motion() {
        // One link rotating at constant ω = 1 rad/s: |v| = |a| = |jerk| = 1.
        let m = ManipulatorModel::new(vec![1.0], vec![(-10.0, 10.0)]).unwrap();
        for i in 0..8 {
            let t = i as f64 * 0.7;
            let state = JointState {
                q: vec![t],
                q_dot: vec![1.0],
                q_ddot: vec![0.0],
                q_dddot: vec![0.0],
            };
            let ee = &ee_kinematics(&m, &[state]).unwrap()[0];
            assert!((vec2::norm(ee.velocity) - 1.0).abs() < 1e-12);
            assert!((vec2::norm(ee.acceleration) - 1.0).abs() < 1e-12);
            assert!((vec2::norm(ee.jerk) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_and_fd_modes_agree() {
        let m = two_link();
        let mut rng = stream("kin-mode", &[1]);
        let states: Vec<JointState> = (0..20)
            .map(|_| JointState {
                q: (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                q_dot: (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                q_ddot: (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                q_dddot: (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            })
            .collect();
        let a = ee_kinematics_with(&m, &states, JacobianDerivativeMode::Analytic).unwrap();
        let b = ee_kinematics_with(&m, &states, JacobianDerivativeMode::FiniteDifference).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(vec2::dist(x.jerk, y.jerk) < 1e-4 * (1.0 + vec2::norm(x.jerk)));
            assert!(vec2::dist(x.acceleration, y.acceleration) < 1e-6);
        }
    }

    /// Eq.-4-style jerk versus a direct third difference of the sampled
    /// end-effector path. The two routes share no code beyond FK itself.
    #[test]
    fn chain_rule_jerk_matches_direct_position_differences() {
        let m = two_link();
        let dt = 0.005;
        let n = 201;
        let mut rng = stream("kin-pipeline", &[3]);
        for _ in 0..5 {
            let a: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let samples: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let t = i as f64 * dt;
                    // Smooth synthetic joint path with bounded derivatives.
                    (0..2)
                        .map(|j| a[j] * (1.3 * t + j as f64).sin() + b[j] * (0.9 * t).cos())
                        .collect()
                })
                .collect();
            let traj = JointTrajectory::new(dt, samples.clone()).unwrap();
            let states = estimate_joint_derivatives(&traj).unwrap();
            let ee = ee_kinematics(&m, &states).unwrap();

            let xs: Vec<f64> = samples
                .iter()
                .map(|q| forward_kinematics(&m, q).unwrap()[0])
                .collect();
            let ys: Vec<f64> = samples
                .iter()
                .map(|q| forward_kinematics(&m, q).unwrap()[1])
                .collect();
            let jx = third_derivative(&xs, dt);
            let jy = third_derivative(&ys, dt);

            let peak = ee.iter().map(|s| vec2::norm(s.jerk)).fold(1e-12, f64::max);
            for (i, s) in ee.iter().enumerate() {
                let d = vec2::dist(s.jerk, [jx[i], jy[i]]);
                assert!(d / peak < 1e-3, "sample {i}: diff {d}, peak {peak}");
            }
        }
    }
}
