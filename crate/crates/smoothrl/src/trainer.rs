//! Two-stage policy training: behavior cloning on scripted demonstrations,
//! then group-relative policy optimization against a task reward.
//!
//! The RL stage samples a group of rollouts per task, normalizes their
//! rewards into advantages within the group, and ascends a clipped
//! importance-ratio surrogate with a KL penalty that anchors the policy to
//! the cloned reference. The reward can be the raw success indicator, a
//! noisy version of it, or the indicator discounted by how jerky the
//! end-effector path was.

use rand::Rng;

use crate::error::{Error, Result};
use crate::policy::{
    kl_with_grad, PolicyArch, PolicyParams, ReferencePolicy, LOG_STD_MAX,
    LOG_STD_MIN,
};
use crate::rng::stream;
use crate::sim_env::{Env, EnvConfig, Rollout};

use serde::{Deserialize, Serialize};

/// How a finished rollout is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Success indicator only.
    Binary,
    /// Success indicator plus uniform noise, a control for reward variance.
    Random,
    /// Success indicator discounted by mean end-effector jerk.
    Smooth,
}

impl RewardMode {
    pub fn name(&self) -> &'static str {
        match self {
            RewardMode::Binary => "binary",
            RewardMode::Random => "random",
            RewardMode::Smooth => "smooth",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub mode: RewardMode,
    /// Weight on the jerk discount in smooth mode.
    pub lambda: f64,
    /// Half-width of the uniform noise added in random mode. Sized larger
    /// than the one-point success signal; a small perturbation would leave
    /// random mode indistinguishable from binary after normalization.
    pub noise_halfwidth: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { mode: RewardMode::Smooth, lambda: 0.2, noise_halfwidth: 2.5 }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig("reward lambda must be finite and >= 0".into()));
        }
        if !(self.noise_halfwidth >= 0.0 && self.noise_halfwidth.is_finite()) {
            return Err(Error::InvalidConfig("noise_halfwidth must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Score one rollout. The rng is consumed only in random mode, so binary and
/// smooth runs are unaffected by it.
pub fn hybrid_reward<R: Rng>(rollout: &Rollout, cfg: &RewardConfig, rng: &mut R) -> f64 {
    let indicator = if rollout.success { 1.0 } else { 0.0 };
    match cfg.mode {
        RewardMode::Binary => indicator,
        RewardMode::Random => {
            indicator + rng.gen_range(-cfg.noise_halfwidth..=cfg.noise_halfwidth)
        }
        RewardMode::Smooth => indicator * (1.0 - cfg.lambda * rollout.smoothness.mean_jerk_norm),
    }
}

/// Normalize rewards within a group: subtract the mean, divide by the
/// population standard deviation. If the spread is below `std_floor` the
/// group is degenerate (no ranking information) and all advantages are zero.
pub fn group_advantages(rewards: &[f64], std_floor: f64) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < std_floor {
        return vec![0.0; rewards.len()];
    }
    rewards.iter().map(|r| (r - mean) / std).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    /// Rollouts per task group.
    pub group_size: usize,
    /// Importance-ratio clip half-width.
    pub clip_eps: f64,
    /// Weight on the KL penalty toward the reference policy.
    pub kl_beta: f64,
    pub learning_rate: f64,
    /// Gradient steps taken on each collected group.
    pub epochs_per_batch: usize,
    /// Number of task groups to collect.
    pub batches: usize,
    /// Below this reward spread a group yields zero advantages.
    pub std_floor: f64,
    pub seed: u64,
    /// Use one importance ratio per trajectory (product over steps) instead
    /// of one per step.
    pub trajectory_ratio: bool,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            group_size: 8,
            clip_eps: 0.2,
            kl_beta: 0.002,
            learning_rate: 5e-5,
            epochs_per_batch: 1,
            batches: 2000,
            std_floor: 1e-8,
            seed: 0,
            trajectory_ratio: false,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.group_size < 2 {
            return bad("group_size must be at least 2");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        if !(self.kl_beta >= 0.0 && self.kl_beta.is_finite()) {
            return bad("kl_beta must be finite and >= 0");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.epochs_per_batch < 1 || self.batches < 1 {
            return bad("epochs_per_batch and batches must be at least 1");
        }
        if !(self.std_floor > 0.0) {
            return bad("std_floor must be positive");
        }
        Ok(())
    }
}

/// One collected task group: G rollouts of the same episode, scored and
/// normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBatch {
    pub task_seed: u64,
    pub chunk_size: usize,
    pub rollouts: Vec<Rollout>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

/// One row of the training log, in CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub batch: usize,
    pub mean_reward: f64,
    pub success_rate: f64,
    pub mean_jerk: f64,
    pub kl: f64,
    pub clip_frac: f64,
    /// Cumulative simulated control time in milliseconds. Derived from the
    /// step count and dt so logs are reproducible byte for byte.
    pub wall_ms: u64,
}

impl TrainLogRow {
    pub const CSV_HEADER: &'static str =
        "batch,mean_reward,success_rate,mean_jerk,kl,clip_frac,wall_ms";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.batch,
            self.mean_reward,
            self.success_rate,
            self.mean_jerk,
            self.kl,
            self.clip_frac,
            self.wall_ms
        )
    }
}

/// Loss value, diagnostics, and the gradient with respect to the current
/// policy parameters.
#[derive(Debug, Clone)]
pub struct GrpoLossReport {
    pub loss: f64,
    /// Mean clipped surrogate objective (the loss negates this).
    pub surrogate: f64,
    pub kl: f64,
    /// Fraction of ratio terms where the clipped branch was active.
    pub clip_fraction: f64,
    pub grad: Vec<f64>,
}

/// Pessimistic clipped term min(ρÂ, clip(ρ, 1±ε)Â) and its derivative with
/// respect to the log-probability under the current policy. The derivative
/// is zero exactly when the clipped branch is strictly active.
fn clipped_term(ratio: f64, adv: f64, eps: f64) -> (f64, f64, bool) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
    if unclipped <= clipped {
        (unclipped, ratio * adv, false)
    } else {
        (clipped, 0.0, true)
    }
}

fn check_finite(value: f64, grad: &[f64], context: &str) -> Result<()> {
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NumericalFailure(format!("non-finite {context}")));
    }
    Ok(())
}

/// Clipped-surrogate loss over one group, with gradient.
///
/// Per step t of rollout i the importance ratio is exp(logp_θ − logp_old),
/// both recomputed from the stored actions. The trajectory's normalized
/// advantage multiplies every step. Step terms are averaged within a rollout,
/// rollout objectives are averaged over the group, and the loss is the
/// negated objective plus kl_beta times the KL to the reference policy over
/// all step observations in the batch.
///
/// Steps whose action touches the squash boundary have no finite
/// log-density; they are dropped from the surrogate (their observations
/// still count toward the KL term). With `trajectory_ratio` set, one ratio
/// per rollout is formed from the summed log-probabilities instead.
pub fn grpo_loss(
    params: &PolicyParams,
    old: &PolicyParams,
    reference: &ReferencePolicy,
    batch: &GroupBatch,
    cfg: &GrpoConfig,
) -> Result<GrpoLossReport> {
    if params.arch != old.arch {
        return Err(Error::ContractViolation(
            "current and snapshot policies have different architectures".into(),
        ));
    }
    let g = batch.rollouts.len();
    if g == 0 {
        return Err(Error::ContractViolation("empty rollout group".into()));
    }
    if batch.advantages.len() != g || batch.rewards.len() != g {
        return Err(Error::ContractViolation(
            "group rewards/advantages do not match rollout count".into(),
        ));
    }
    let k = batch.chunk_size;
    if k == 0 {
        return Err(Error::ContractViolation("group chunk_size must be positive".into()));
    }
    let dof = params.arch.output_dim / k;
    if dof * k != params.arch.output_dim {
        return Err(Error::ContractViolation(
            "policy output dimension is not a whole number of steps".into(),
        ));
    }

    let mut surrogate = 0.0;
    let mut sur_grad = vec![0.0; params.flat.len()];
    let mut clipped_count = 0usize;
    let mut term_count = 0usize;
    let mut kl_features: Vec<Vec<f64>> = Vec::new();

    for (rollout, &adv) in batch.rollouts.iter().zip(&batch.advantages) {
        let steps = rollout.steps();
        if steps == 0 || steps % k != 0 {
            return Err(Error::ContractViolation(
                "rollout length is not a whole number of chunks".into(),
            ));
        }
        if rollout.observations.len() != steps {
            return Err(Error::ContractViolation(
                "rollout observations do not match its actions".into(),
            ));
        }
        for obs in &rollout.observations {
            kl_features.push(obs.features());
        }

        let n_chunks = steps / k;
        // Per chunk: the observation the policy saw, the flat action it
        // emitted, per-step log-probabilities under both parameter sets,
        // and a validity mask (false where the action sits on the squash
        // boundary).
        let mut chunk_feats = Vec::with_capacity(n_chunks);
        let mut chunk_actions = Vec::with_capacity(n_chunks);
        let mut step_logp_new = vec![0.0; steps];
        let mut step_logp_old = vec![0.0; steps];
        let mut step_valid = vec![true; steps];
        for c in 0..n_chunks {
            let feats = rollout.observations[c * k].features();
            let mut flat = Vec::with_capacity(k * dof);
            for t in 0..k {
                if rollout.actions[c * k + t].len() != dof {
                    return Err(Error::DimensionMismatch {
                        context: "rollout action dof",
                        expected: dof,
                        got: rollout.actions[c * k + t].len(),
                    });
                }
                flat.extend_from_slice(&rollout.actions[c * k + t]);
            }
            let new_terms = params.logp_terms(&feats, &flat)?;
            let old_terms = old.logp_terms(&feats, &flat)?;
            for t in 0..k {
                let step = c * k + t;
                for d in 0..dof {
                    match (new_terms[t * dof + d], old_terms[t * dof + d]) {
                        (Some(a), Some(b)) => {
                            step_logp_new[step] += a;
                            step_logp_old[step] += b;
                        }
                        _ => step_valid[step] = false,
                    }
                }
            }
            chunk_feats.push(feats);
            chunk_actions.push(flat);
        }

        let n_valid = step_valid.iter().filter(|v| **v).count();
        if n_valid == 0 {
            continue;
        }

        // Derivative of this rollout's objective with respect to each step's
        // log-probability under the current policy.
        let mut step_scale = vec![0.0; steps];
        if cfg.trajectory_ratio {
            let mut diff = 0.0;
            for step in 0..steps {
                if step_valid[step] {
                    diff += step_logp_new[step] - step_logp_old[step];
                }
            }
            let ratio = diff.exp();
            let (term, dterm, was_clipped) = clipped_term(ratio, adv, cfg.clip_eps);
            surrogate += term / g as f64;
            term_count += 1;
            if was_clipped {
                clipped_count += 1;
            }
            for step in 0..steps {
                if step_valid[step] {
                    step_scale[step] = dterm / g as f64;
                }
            }
        } else {
            for step in 0..steps {
                if !step_valid[step] {
                    continue;
                }
                let ratio = (step_logp_new[step] - step_logp_old[step]).exp();
                let (term, dterm, was_clipped) = clipped_term(ratio, adv, cfg.clip_eps);
                surrogate += term / (n_valid * g) as f64;
                step_scale[step] = dterm / (n_valid * g) as f64;
                term_count += 1;
                if was_clipped {
                    clipped_count += 1;
                }
            }
        }

        for c in 0..n_chunks {
            let mut weights = vec![0.0; k * dof];
            let mut any = false;
            for t in 0..k {
                let s = step_scale[c * k + t];
                if s != 0.0 {
                    any = true;
                    weights[t * dof..(t + 1) * dof].fill(s);
                }
            }
            if any {
                let gpart =
                    params.grad_logp_weighted(&chunk_feats[c], &chunk_actions[c], &weights)?;
                for (acc, x) in sur_grad.iter_mut().zip(&gpart) {
                    *acc += x;
                }
            }
        }
    }

    let (kl, kl_grad) = kl_with_grad(params, reference, &kl_features)?;
    let loss = -surrogate + cfg.kl_beta * kl;
    let grad: Vec<f64> = sur_grad
        .iter()
        .zip(&kl_grad)
        .map(|(s, kg)| -s + cfg.kl_beta * kg)
        .collect();
    check_finite(loss, &grad, "policy optimization loss or gradient")?;
    let clip_fraction =
        if term_count == 0 { 0.0 } else { clipped_count as f64 / term_count as f64 };
    Ok(GrpoLossReport { loss, surrogate, kl, clip_fraction, grad })
}

/// Roll out one task group: every member replays the same episode seed (same
/// goal and start) with its own action-sampling stream, then rewards and
/// advantages are attached.
pub fn collect_group(
    env: &mut Env,
    params: &PolicyParams,
    grpo: &GrpoConfig,
    reward: &RewardConfig,
    batch_index: usize,
) -> Result<GroupBatch> {
    let b = batch_index as u64;
    let task_seed: u64 = stream("grpo-task", &[grpo.seed, b]).gen();
    let dof = env.config().model.dof();
    let mut rollouts = Vec::with_capacity(grpo.group_size);
    let mut rewards = Vec::with_capacity(grpo.group_size);
    for member in 0..grpo.group_size {
        let mut act_rng = stream("grpo-act", &[grpo.seed, b, member as u64]);
        env.reset(task_seed);
        let mut step_logps = Vec::new();
        while !env.is_done() {
            let feats = env.observation().features();
            let sample = params.act(&feats, &mut act_rng)?;
            let chunk: Vec<Vec<f64>> = sample.action.chunks(dof).map(|s| s.to_vec()).collect();
            env.step_chunk(&chunk)?;
            for step_dims in sample.logp_per_dim.chunks(dof) {
                step_logps.push(step_dims.iter().sum());
            }
        }
        let rollout = env.finalize(step_logps)?;
        let mut reward_rng = stream("grpo-reward", &[grpo.seed, b, member as u64]);
        rewards.push(hybrid_reward(&rollout, reward, &mut reward_rng));
        rollouts.push(rollout);
    }
    let advantages = group_advantages(&rewards, grpo.std_floor);
    Ok(GroupBatch {
        task_seed,
        chunk_size: env.config().chunk_size,
        rollouts,
        rewards,
        advantages,
    })
}

/// Result of a policy-optimization run. When a numeric failure interrupts
/// training, `params` holds the last finite snapshot and `aborted` carries
/// the diagnostic; callers should checkpoint what they got.
#[derive(Debug, Clone)]
pub struct GrpoOutcome {
    pub params: PolicyParams,
    pub log: Vec<TrainLogRow>,
    pub aborted: Option<String>,
}

fn arch_matches_env(arch: &PolicyArch, env_cfg: &EnvConfig) -> Result<()> {
    if arch.input_dim != env_cfg.observation_dim()
        || arch.output_dim != env_cfg.chunk_dim()
        || arch.action_scale != env_cfg.action_scale
    {
        return Err(Error::InvalidConfig(
            "policy architecture does not match the environment's observation/action layout"
                .into(),
        ));
    }
    Ok(())
}

/// Group-relative policy optimization from an initial (typically cloned)
/// policy. The initial parameters double as the KL reference.
pub fn grpo_train(
    init: PolicyParams,
    env_cfg: &EnvConfig,
    grpo: &GrpoConfig,
    reward: &RewardConfig,
) -> Result<GrpoOutcome> {
    grpo.validate()?;
    reward.validate()?;
    arch_matches_env(&init.arch, env_cfg)?;
    let mut env = Env::new(env_cfg.clone())?;
    let reference = ReferencePolicy::new(init.clone());
    let mut params = init;
    let mut adam = Adam::new(grpo.learning_rate, params.flat.len());
    let mut log = Vec::with_capacity(grpo.batches);
    let mut sim_steps = 0u64;

    for b in 0..grpo.batches {
        let snapshot = params.clone();
        let batch = collect_group(&mut env, &snapshot, grpo, reward, b)?;
        sim_steps += (grpo.group_size * env_cfg.horizon) as u64;

        let mut kl = 0.0;
        let mut clip_frac = 0.0;
        let mut aborted = None;
        for _ in 0..grpo.epochs_per_batch {
            match grpo_loss(&params, &snapshot, &reference, &batch, grpo) {
                Ok(report) => {
                    adam.step(&mut params.flat, &report.grad);
                    params.clamp_log_std(LOG_STD_MIN, LOG_STD_MAX);
                    kl = report.kl;
                    clip_frac = report.clip_fraction;
                    if !params.all_finite() {
                        aborted = Some(format!(
                            "parameters became non-finite after the update in batch {b}"
                        ));
                        break;
                    }
                }
                Err(Error::NumericalFailure(msg)) => {
                    aborted = Some(format!("batch {b}: {msg}"));
                    break;
                }
                Err(e) => return Err(e),
            }
        }

        let gf = grpo.group_size as f64;
        let successes = batch.rollouts.iter().filter(|r| r.success).count();
        log.push(TrainLogRow {
            batch: b,
            mean_reward: batch.rewards.iter().sum::<f64>() / gf,
            success_rate: successes as f64 / gf,
            mean_jerk: batch.rollouts.iter().map(|r| r.smoothness.mean_jerk_norm).sum::<f64>()
                / gf,
            kl,
            clip_frac,
            wall_ms: (sim_steps as f64 * env_cfg.dt * 1000.0).round() as u64,
        });

        if aborted.is_some() {
            // Fall back to the pre-batch snapshot, which is known finite.
            return Ok(GrpoOutcome { params: snapshot, log, aborted });
        }
    }
    Ok(GrpoOutcome { params, log, aborted: None })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BcConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub minibatch: usize,
    /// Floor on per-dimension log standard deviation, kept above the global
    /// minimum so the cloned policy still explores when optimization starts.
    pub min_log_std: f64,
    pub seed: u64,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig {
            learning_rate: 1e-3,
            iterations: 8000,
            minibatch: 128,
            min_log_std: -4.5,
            seed: 0,
        }
    }
}

impl BcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.iterations < 1 || self.minibatch < 1 {
            return Err(Error::InvalidConfig("iterations and minibatch must be at least 1".into()));
        }
        if self.min_log_std < LOG_STD_MIN || self.min_log_std > LOG_STD_MAX {
            return Err(Error::InvalidConfig("min_log_std outside the representable range".into()));
        }
        Ok(())
    }
}

/// Split rollouts into (observation features, flat action chunk) supervision
/// pairs, one per chunk.
pub fn demo_chunk_pairs(
    rollouts: &[Rollout],
    chunk_size: usize,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let mut pairs = Vec::new();
    for rollout in rollouts {
        let steps = rollout.steps();
        if chunk_size == 0 || steps % chunk_size != 0 {
            return Err(Error::ContractViolation(
                "rollout length is not a whole number of chunks".into(),
            ));
        }
        for c in 0..steps / chunk_size {
            let feats = rollout.observations[c * chunk_size].features();
            let mut flat = Vec::new();
            for t in 0..chunk_size {
                flat.extend_from_slice(&rollout.actions[c * chunk_size + t]);
            }
            pairs.push((feats, flat));
        }
    }
    Ok(pairs)
}

/// Behavior cloning: minimize mean negative log-density of demonstrated
/// action chunks. Returns the trained parameters and the full-dataset loss
/// curve (entry 0 is the loss before any update).
///
/// The learning rate anneals linearly from `cfg.learning_rate` to zero over
/// the run; without the anneal, minibatch noise keeps the mean-action error
/// far above what the network can actually represent.
pub fn bc_train(
    pairs: &[(Vec<f64>, Vec<f64>)],
    arch: PolicyArch,
    cfg: &BcConfig,
) -> Result<(PolicyParams, Vec<f64>)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyDemos);
    }
    for (feats, action) in pairs {
        if feats.len() != arch.input_dim || action.len() != arch.output_dim {
            return Err(Error::DimensionMismatch {
                context: "demonstration pair",
                expected: arch.input_dim,
                got: feats.len(),
            });
        }
    }
    let mut init_rng = stream("bc-init", &[cfg.seed]);
    let mut params = PolicyParams::init(arch, -0.5, &mut init_rng);
    let mut adam = Adam::new(cfg.learning_rate, params.flat.len());
    let mut batch_rng = stream("bc-batch", &[cfg.seed]);

    let dataset_loss = |p: &PolicyParams| -> Result<f64> {
        let mut total = 0.0;
        for (feats, action) in pairs {
            total -= p.logp(feats, action)?;
        }
        Ok(total / pairs.len() as f64)
    };

    let mut losses = Vec::with_capacity(cfg.iterations + 1);
    losses.push(dataset_loss(&params)?);
    for iter in 0..cfg.iterations {
        adam.lr = cfg.learning_rate * (1.0 - iter as f64 / cfg.iterations as f64);
        let mut grad = vec![0.0; params.flat.len()];
        for _ in 0..cfg.minibatch {
            let idx = batch_rng.gen_range(0..pairs.len());
            let (feats, action) = &pairs[idx];
            let g = params.grad_logp(feats, action)?;
            for (acc, x) in grad.iter_mut().zip(&g) {
                *acc -= x / cfg.minibatch as f64;
            }
        }
        adam.step(&mut params.flat, &grad);
        params.clamp_log_std(cfg.min_log_std, LOG_STD_MAX);
        let loss = dataset_loss(&params)?;
        if !loss.is_finite() || !params.all_finite() {
            return Err(Error::NumericalFailure(format!(
                "cloning diverged at iteration {iter}: non-finite loss or parameters"
            )));
        }
        losses.push(loss);
    }
    Ok((params, losses))
}

/// Deterministic evaluation summary over a set of fresh episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub success_rate: f64,
    /// Mean over episodes of the mean end-effector jerk magnitude.
    pub mean_jerk: f64,
    /// Mean over episodes of the per-episode peak jerk magnitude.
    pub peak_jerk: f64,
}

/// Run the policy's mean action (no sampling) on `episodes` fresh episodes
/// and summarize success and smoothness. Also returns the rollouts for
/// callers that want to dump trajectories.
pub fn evaluate(
    params: &PolicyParams,
    env_cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<(EvalReport, Vec<Rollout>)> {
    if episodes == 0 {
        return Err(Error::InvalidConfig("need at least one evaluation episode".into()));
    }
    arch_matches_env(&params.arch, env_cfg)?;
    let mut env = Env::new(env_cfg.clone())?;
    let dof = env_cfg.model.dof();
    let mut rollouts = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let episode_seed: u64 = stream("eval-episode", &[seed, ep as u64]).gen();
        env.reset(episode_seed);
        let mut n_steps = 0;
        while !env.is_done() {
            let feats = env.observation().features();
            let action = params.mean_action(&feats)?;
            let chunk: Vec<Vec<f64>> = action.chunks(dof).map(|s| s.to_vec()).collect();
            n_steps += chunk.len();
            env.step_chunk(&chunk)?;
        }
        rollouts.push(env.finalize(vec![0.0; n_steps])?);
    }
    let n = episodes as f64;
    let successes = rollouts.iter().filter(|r| r.success).count();
    let report = EvalReport {
        episodes,
        success_rate: successes as f64 / n,
        mean_jerk: rollouts.iter().map(|r| r.smoothness.mean_jerk_norm).sum::<f64>() / n,
        peak_jerk: rollouts.iter().map(|r| r.smoothness.peak_jerk_norm).sum::<f64>() / n,
    };
    Ok((report, rollouts))
}

/// Policy architecture whose input/output layout matches an environment.
pub fn arch_for_env(env_cfg: &EnvConfig, hidden: Vec<usize>) -> Result<PolicyArch> {
    PolicyArch::new(
        env_cfg.observation_dim(),
        hidden,
        env_cfg.chunk_dim(),
        env_cfg.action_scale,
    )
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(lr: f64, n: usize) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + self.eps);
        }
    }
}
