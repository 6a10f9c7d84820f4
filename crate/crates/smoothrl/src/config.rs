//! One flat experiment configuration file covering the arm, the task, the
//! demonstrations, both training stages, and evaluation.
//!
//! Every key lives at the top level of a TOML document so a whole experiment
//! is a single page of key = value lines. Command-line flags override
//! individual keys after loading; the hash of the effective configuration is
//! stamped into every emitted file.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kinematics::{JacobianDerivativeMode, ManipulatorModel};
use crate::policy::{PolicyArch, LOG_STD_MAX, LOG_STD_MIN};
use crate::scripted::{DemoPathMode, ScriptedConfig};
use crate::sim_env::EnvConfig;
use crate::trainer::{BcConfig, GrpoConfig, RewardConfig, RewardMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    // Arm geometry and episode mechanics.
    pub link_lengths: Vec<f64>,
    /// Per-joint (lo, hi) position limits.
    pub joint_limits: Vec<(f64, f64)>,
    pub dt: f64,
    pub horizon: usize,
    pub success_radius: f64,
    pub hold_steps: usize,
    pub chunk_size: usize,
    /// Goals are drawn uniformly by area from this annulus around the base.
    pub goal_inner: f64,
    pub goal_outer: f64,
    pub action_scale: f64,
    pub env_seed: u64,
    pub randomize_start: bool,
    /// Returns are undiscounted; recorded for transparency and must be 1.
    pub gamma: f64,

    // Scripted demonstrations.
    pub demo_move_steps: usize,
    pub demo_path_mode: DemoPathMode,
    pub n_demos: usize,
    pub demo_seed: u64,

    // Policy network.
    pub hidden: Vec<usize>,
    pub log_std_init: f64,

    // Cloning stage.
    pub bc_learning_rate: f64,
    pub bc_iterations: usize,
    pub bc_minibatch: usize,
    pub bc_min_log_std: f64,
    pub bc_seed: u64,

    // Reward shaping.
    pub reward_mode: RewardMode,
    pub lambda: f64,
    pub noise_halfwidth: f64,

    // Policy-optimization stage.
    pub group_size: usize,
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub grpo_learning_rate: f64,
    pub epochs_per_batch: usize,
    pub batches: usize,
    pub std_floor: f64,
    pub grpo_seed: u64,
    pub trajectory_ratio: bool,

    // Evaluation and offline analysis.
    pub eval_episodes: usize,
    pub eval_seed: u64,
    /// How offline analysis obtains Jacobian time derivatives.
    pub jacobian_mode: JacobianDerivativeMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            link_lengths: vec![1.0, 1.0],
            joint_limits: vec![(-3.0, 3.0), (-3.0, 3.0)],
            dt: 1.0,
            horizon: 24,
            success_radius: 0.15,
            hold_steps: 3,
            chunk_size: 4,
            goal_inner: 0.6,
            goal_outer: 1.6,
            action_scale: 0.6,
            env_seed: 7,
            randomize_start: false,
            gamma: 1.0,
            demo_move_steps: 12,
            demo_path_mode: DemoPathMode::Joint,
            n_demos: 200,
            demo_seed: 1,
            hidden: vec![64, 64],
            log_std_init: -0.5,
            bc_learning_rate: 1e-3,
            bc_iterations: 8000,
            bc_minibatch: 128,
            bc_min_log_std: -4.5,
            bc_seed: 0,
            reward_mode: RewardMode::Smooth,
            lambda: 0.2,
            noise_halfwidth: 2.5,
            group_size: 8,
            clip_eps: 0.2,
            kl_beta: 0.002,
            grpo_learning_rate: 5e-5,
            epochs_per_batch: 1,
            batches: 2000,
            std_floor: 1e-8,
            grpo_seed: 0,
            trajectory_ratio: false,
            eval_episodes: 200,
            eval_seed: 12345,
            jacobian_mode: JacobianDerivativeMode::Analytic,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical TOML serialization. Stamped into every
    /// emitted file so artifacts can be traced back to the exact settings.
    pub fn hash(&self) -> Result<String> {
        let canonical = self.to_toml_string()?;
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn model(&self) -> Result<ManipulatorModel> {
        ManipulatorModel::new(self.link_lengths.clone(), self.joint_limits.clone())
    }

    pub fn env_config(&self) -> Result<EnvConfig> {
        let cfg = EnvConfig {
            model: self.model()?,
            dt: self.dt,
            horizon: self.horizon,
            success_radius: self.success_radius,
            hold_steps: self.hold_steps,
            chunk_size: self.chunk_size,
            goal_region: (self.goal_inner, self.goal_outer),
            action_scale: self.action_scale,
            seed: self.env_seed,
            randomize_start: self.randomize_start,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn scripted_config(&self) -> ScriptedConfig {
        ScriptedConfig { move_steps: self.demo_move_steps, path_mode: self.demo_path_mode }
    }

    pub fn bc_config(&self) -> BcConfig {
        BcConfig {
            learning_rate: self.bc_learning_rate,
            iterations: self.bc_iterations,
            minibatch: self.bc_minibatch,
            min_log_std: self.bc_min_log_std,
            seed: self.bc_seed,
        }
    }

    pub fn grpo_config(&self) -> GrpoConfig {
        GrpoConfig {
            group_size: self.group_size,
            clip_eps: self.clip_eps,
            kl_beta: self.kl_beta,
            learning_rate: self.grpo_learning_rate,
            epochs_per_batch: self.epochs_per_batch,
            batches: self.batches,
            std_floor: self.std_floor,
            seed: self.grpo_seed,
            trajectory_ratio: self.trajectory_ratio,
        }
    }

    pub fn reward_config(&self) -> RewardConfig {
        RewardConfig {
            mode: self.reward_mode,
            lambda: self.lambda,
            noise_halfwidth: self.noise_halfwidth,
        }
    }

    pub fn arch(&self) -> Result<PolicyArch> {
        let env = self.env_config()?;
        PolicyArch::new(
            env.observation_dim(),
            self.hidden.clone(),
            env.chunk_dim(),
            self.action_scale,
        )
    }

    /// Validate the whole document by constructing every derived config.
    pub fn validate(&self) -> Result<()> {
        self.env_config()?;
        self.arch()?;
        self.bc_config().validate()?;
        self.grpo_config().validate()?;
        self.reward_config().validate()?;
        if self.gamma != 1.0 {
            return Err(Error::InvalidConfig(
                "returns are undiscounted; gamma must be exactly 1".into(),
            ));
        }
        if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&self.log_std_init) {
            return Err(Error::InvalidConfig(
                "log_std_init outside the representable range".into(),
            ));
        }
        if self.eval_episodes == 0 {
            return Err(Error::InvalidConfig("eval_episodes must be at least 1".into()));
        }
        Ok(())
    }
}
