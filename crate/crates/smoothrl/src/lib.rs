//! Planar-arm reinforcement learning with jerk-aware rewards.
//!
//! The crate trains a small stochastic policy to reach goals with a planar
//! manipulator, first by behavior cloning on scripted minimum-jerk
//! demonstrations and then by group-relative policy optimization whose reward
//! scales task success by end-effector smoothness.
//!
//! Start from the runnable examples (`cargo run --example ...`) or from the
//! [`cli`] module, which the `smoothrl` binary wraps.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod kinematics;
pub mod policy;
pub mod rng;
pub mod scripted;
pub mod sim_env;
pub mod smoothness;
pub mod trainer;
pub mod vec2;

pub use error::{Error, Result};
