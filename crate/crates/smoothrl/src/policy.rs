//! Squashed diagonal-Gaussian policy over action chunks.
//!
//! A small tanh MLP maps observation features to the mean of a diagonal
//! Gaussian over pre-squash values u; actions are action_scale · tanh(u).
//! Log-densities include the exact squash correction, and all gradients are
//! computed analytically by reverse-mode accumulation through the network.
//!
//! Parameters live in one flat buffer (weights, biases layer by layer, then
//! log_std), which keeps optimizers, checkpoints, and finite-difference
//! checks straightforward.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::standard_normal;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const LN_2PI: f64 = 1.8378770664093453;

/// Network shape plus the action squash scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyArch {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub action_scale: f64,
}

impl PolicyArch {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize, action_scale: f64) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden.iter().any(|h| *h == 0) {
            return Err(Error::InvalidConfig("network layer sizes must be positive".into()));
        }
        if !(action_scale > 0.0) {
            return Err(Error::InvalidConfig("action_scale must be positive".into()));
        }
        Ok(Self { input_dim, hidden, output_dim, action_scale })
    }

    /// (fan_in, fan_out) of every affine layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim;
        for h in &self.hidden {
            dims.push((prev, *h));
            prev = *h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum::<usize>() + self.output_dim
    }

    /// Offset of layer l's weight matrix (row-major out x in) in the flat
    /// buffer; biases follow immediately after each matrix.
    pub fn w_offset(&self, layer: usize) -> usize {
        self.layer_dims()[..layer].iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn log_std_offset(&self) -> usize {
        self.param_count() - self.output_dim
    }
}

/// All policy parameters. The reference snapshot for the KL penalty wraps an
/// immutable copy of this.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub arch: PolicyArch,
    pub flat: Vec<f64>,
}

/// Frozen parameter snapshot anchoring the KL penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePolicy {
    params: PolicyParams,
}

impl ReferencePolicy {
    pub fn new(params: PolicyParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }
}

/// One sampled action chunk with its log-density.
#[derive(Debug, Clone, PartialEq)]
pub struct ActSample {
    /// Flattened chunk, step-major: [step0 joints.., step1 joints.., ..].
    pub action: Vec<f64>,
    pub logp: f64,
    /// Per-dimension log-density terms (sum = logp).
    pub logp_per_dim: Vec<f64>,
}

/// ln(1 - tanh(u)^2), stable for large |u|.
fn ln_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl PolicyParams {
    /// Scaled-Gaussian initialization (std 1/sqrt(fan_in)) from the given
    /// stream; biases zero; log_std filled with `log_std_init`.
    pub fn init<R: Rng>(arch: PolicyArch, log_std_init: f64, rng: &mut R) -> Self {
        let mut flat = Vec::with_capacity(arch.param_count());
        for (fan_in, fan_out) in arch.layer_dims() {
            let scale = 1.0 / (fan_in as f64).sqrt();
            flat.extend((0..fan_in * fan_out).map(|_| scale * standard_normal(rng)));
            flat.extend(std::iter::repeat_n(0.0, fan_out));
        }
        flat.extend(std::iter::repeat_n(
            log_std_init.clamp(LOG_STD_MIN, LOG_STD_MAX),
            arch.output_dim,
        ));
        Self { arch, flat }
    }

    pub fn zeros(arch: PolicyArch) -> Self {
        let n = arch.param_count();
        Self { arch, flat: vec![0.0; n] }
    }

    pub fn log_std(&self) -> &[f64] {
        &self.flat[self.arch.log_std_offset()..]
    }

    pub fn log_std_mut(&mut self) -> &mut [f64] {
        let off = self.arch.log_std_offset();
        &mut self.flat[off..]
    }

    /// Clamp log_std into [lo, hi]; called after every optimizer step.
    pub fn clamp_log_std(&mut self, lo: f64, hi: f64) {
        for v in self.log_std_mut() {
            *v = v.clamp(lo, hi);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.flat.iter().all(|v| v.is_finite())
    }

    /// Network mean together with every layer's activation (index 0 is the
    /// input), as needed for backpropagation.
    fn forward_full(&self, features: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if features.len() != self.arch.input_dim {
            return Err(Error::DimensionMismatch {
                context: "policy input",
                expected: self.arch.input_dim,
                got: features.len(),
            });
        }
        let dims = self.arch.layer_dims();
        let n_layers = dims.len();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        acts.push(features.to_vec());
        let mut mu = Vec::new();
        for (l, (fan_in, fan_out)) in dims.iter().enumerate() {
            let w_off = self.arch.w_offset(l);
            let b_off = w_off + fan_in * fan_out;
            let x = acts.last().unwrap();
            let mut z = vec![0.0; *fan_out];
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &self.flat[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                let mut acc = self.flat[b_off + o];
                for (wi, xi) in row.iter().zip(x) {
                    acc += wi * xi;
                }
                *zo = acc;
            }
            if l + 1 < n_layers {
                for v in &mut z {
                    *v = v.tanh();
                }
                acts.push(z);
            } else {
                mu = z;
            }
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite policy network output".into()));
        }
        Ok((mu, acts))
    }

    /// Mean of the pre-squash Gaussian at an observation.
    pub fn mean(&self, features: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_full(features)?.0)
    }

    /// Deterministic action: the squashed, scaled mean. Used for evaluation.
    pub fn mean_action(&self, features: &[f64]) -> Result<Vec<f64>> {
        let mu = self.mean(features)?;
        Ok(mu.iter().map(|m| self.arch.action_scale * m.tanh()).collect())
    }

    /// Sample an action chunk and return it with its exact log-density.
    pub fn act<R: Rng>(&self, features: &[f64], rng: &mut R) -> Result<ActSample> {
        let mu = self.mean(features)?;
        let ls = self.log_std();
        let c = self.arch.action_scale;
        let n = self.arch.output_dim;
        let mut action = vec![0.0; n];
        let mut terms = vec![0.0; n];
        for i in 0..n {
            let z = standard_normal(rng);
            let u = mu[i] + ls[i].exp() * z;
            action[i] = c * u.tanh();
            terms[i] = -0.5 * LN_2PI - ls[i] - 0.5 * z * z - c.ln() - ln_one_minus_tanh_sq(u);
        }
        Ok(ActSample { logp: terms.iter().sum(), action, logp_per_dim: terms })
    }

    fn check_action(&self, action: &[f64]) -> Result<()> {
        if action.len() != self.arch.output_dim {
            return Err(Error::DimensionMismatch {
                context: "policy action",
                expected: self.arch.output_dim,
                got: action.len(),
            });
        }
        Ok(())
    }

    /// Per-dimension log-density terms of a given action chunk; None where
    /// the action sits at or beyond the squash boundary (density undefined).
    pub fn logp_terms(&self, features: &[f64], action: &[f64]) -> Result<Vec<Option<f64>>> {
        self.check_action(action)?;
        let mu = self.mean(features)?;
        let ls = self.log_std();
        let c = self.arch.action_scale;
        Ok(action
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let t = a / c;
                if !(t.abs() < 1.0) {
                    return None;
                }
                let u = t.atanh();
                let z = (u - mu[i]) / ls[i].exp();
                Some(-0.5 * LN_2PI - ls[i] - 0.5 * z * z - c.ln() - ln_one_minus_tanh_sq(u))
            })
            .collect())
    }

    /// Exact log-density of an action chunk under this policy.
    pub fn logp(&self, features: &[f64], action: &[f64]) -> Result<f64> {
        let terms = self.logp_terms(features, action)?;
        let mut total = 0.0;
        for (i, t) in terms.iter().enumerate() {
            match t {
                Some(v) => total += v,
                None => return Err(Error::BoundaryAction { index: i }),
            }
        }
        Ok(total)
    }

    /// Gradient (same flat layout as the parameters) of
    /// Σᵢ dim_weights[i] · logpᵢ(action | features).
    ///
    /// Dimensions with weight exactly 0 are skipped entirely, which is how
    /// boundary-action steps are excluded from losses. A nonzero weight on a
    /// boundary dimension is an error.
    pub fn grad_logp_weighted(
        &self,
        features: &[f64],
        action: &[f64],
        dim_weights: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_action(action)?;
        if dim_weights.len() != self.arch.output_dim {
            return Err(Error::DimensionMismatch {
                context: "grad_logp dim_weights",
                expected: self.arch.output_dim,
                got: dim_weights.len(),
            });
        }
        let (mu, acts) = self.forward_full(features)?;
        let ls = self.log_std();
        let c = self.arch.action_scale;
        let ls_off = self.arch.log_std_offset();
        let mut grad = vec![0.0; self.flat.len()];
        let mut dmu = vec![0.0; self.arch.output_dim];
        for (i, (a, w)) in action.iter().zip(dim_weights).enumerate() {
            if *w == 0.0 {
                continue;
            }
            let t = a / c;
            if !(t.abs() < 1.0) {
                return Err(Error::BoundaryAction { index: i });
            }
            let u = t.atanh();
            let sigma = ls[i].exp();
            let z = (u - mu[i]) / sigma;
            dmu[i] = w * z / sigma;
            grad[ls_off + i] = w * (z * z - 1.0);
        }
        self.backprop_mean(&acts, &dmu, &mut grad);
        Ok(grad)
    }

    /// Gradient of the full log-density (all dimension weights 1).
    pub fn grad_logp(&self, features: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        self.grad_logp_weighted(features, action, &vec![1.0; self.arch.output_dim])
    }

    /// Accumulate d(objective)/d(params) into `grad` given d(objective)/dμ,
    /// reusing the activations from forward_full.
    fn backprop_mean(&self, acts: &[Vec<f64>], dmu: &[f64], grad: &mut [f64]) {
        let dims = self.arch.layer_dims();
        let mut delta = dmu.to_vec();
        for l in (0..dims.len()).rev() {
            let (fan_in, fan_out) = dims[l];
            let w_off = self.arch.w_offset(l);
            let b_off = w_off + fan_in * fan_out;
            let x = &acts[l];
            for o in 0..fan_out {
                let d = delta[o];
                if d != 0.0 {
                    let row = &mut grad[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                    for (g, xi) in row.iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
                grad[b_off + o] += d;
            }
            if l > 0 {
                // d/dx through W, then through the tanh that produced x.
                let mut prev = vec![0.0; fan_in];
                for o in 0..fan_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &self.flat[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                    for (p, wi) in prev.iter_mut().zip(row) {
                        *p += wi * d;
                    }
                }
                for (p, xi) in prev.iter_mut().zip(x) {
                    *p *= 1.0 - xi * xi;
                }
                delta = prev;
            }
        }
    }
}

/// Mean over a batch of observations of the closed-form KL divergence
/// KL(N(μ_θ, σ_θ²) ‖ N(μ_ref, σ_ref²)) between the pre-squash Gaussians.
pub fn kl_divergence(
    params: &PolicyParams,
    reference: &ReferencePolicy,
    features_batch: &[Vec<f64>],
) -> Result<f64> {
    Ok(kl_with_grad_impl(params, reference, features_batch, false)?.0)
}

/// KL and its gradient with respect to `params`, same flat layout.
pub fn kl_with_grad(
    params: &PolicyParams,
    reference: &ReferencePolicy,
    features_batch: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    let (kl, grad) = kl_with_grad_impl(params, reference, features_batch, true)?;
    Ok((kl, grad.unwrap()))
}

fn kl_with_grad_impl(
    params: &PolicyParams,
    reference: &ReferencePolicy,
    features_batch: &[Vec<f64>],
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    if features_batch.is_empty() {
        return Err(Error::ContractViolation("empty observation batch for KL".into()));
    }
    let rp = reference.params();
    if rp.arch != params.arch {
        return Err(Error::ContractViolation(
            "reference policy architecture differs from current policy".into(),
        ));
    }
    let n = params.arch.output_dim;
    let ls_t = params.log_std();
    let ls_r = rp.log_std();
    let inv_batch = 1.0 / features_batch.len() as f64;
    let ls_off = params.arch.log_std_offset();
    let mut total = 0.0;
    let mut grad = if want_grad { Some(vec![0.0; params.flat.len()]) } else { None };
    for feats in features_batch {
        let (mu_t, acts) = params.forward_full(feats)?;
        let mu_r = rp.mean(feats)?;
        let mut dmu = vec![0.0; n];
        for i in 0..n {
            let var_ratio = (2.0 * (ls_t[i] - ls_r[i])).exp();
            let inv_var_r = (-2.0 * ls_r[i]).exp();
            let dm = mu_t[i] - mu_r[i];
            total += ls_r[i] - ls_t[i] + 0.5 * (var_ratio + dm * dm * inv_var_r) - 0.5;
            if let Some(g) = grad.as_mut() {
                dmu[i] = dm * inv_var_r * inv_batch;
                g[ls_off + i] += (var_ratio - 1.0) * inv_batch;
            }
        }
        if let Some(g) = grad.as_mut() {
            params.backprop_mean(&acts, &dmu, g);
        }
    }
    if !total.is_finite() {
        return Err(Error::NumericalFailure("non-finite KL divergence".into()));
    }
    Ok((total * inv_batch, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn tiny_arch() -> PolicyArch {
        PolicyArch::new(3, vec![4], 2, 0.6).unwrap()
    }

    fn tiny_params(seed: u64) -> PolicyParams {
        PolicyParams::init(tiny_arch(), -0.5, &mut stream("policy-test", &[seed]))
    }

    #[test]
    fn param_layout_and_count() {
        let arch = tiny_arch();
        // 3->4: 12 + 4; 4->2: 8 + 2; log_std: 2.
        assert_eq!(arch.param_count(), 28);
        let p = tiny_params(0);
        assert_eq!(p.flat.len(), 28);
        assert_eq!(p.log_std(), &[-0.5, -0.5]);
        // Biases of the first layer are zero after init.
        assert_eq!(&p.flat[12..16], &[0.0; 4]);
    }

    #[test]
    fn act_is_deterministic_under_fixed_stream() {
        let p = tiny_params(1);
        let feats = [0.3, -0.2, 0.9];
        let a = p.act(&feats, &mut stream("act", &[7])).unwrap();
        let b = p.act(&feats, &mut stream("act", &[7])).unwrap();
        assert_eq!(a, b);
        let c = p.act(&feats, &mut stream("act", &[8])).unwrap();
        assert_ne!(a.action, c.action);
    }

    #[test]
    fn act_logp_round_trips_through_logp() {
        let p = tiny_params(2);
        let mut rng = stream("roundtrip", &[0]);
        for i in 0..200 {
            let feats: Vec<f64> = (0..3).map(|_| 2.0 * standard_normal(&mut rng)).collect();
            let s = p.act(&feats, &mut rng).unwrap();
            let lp = p.logp(&feats, &s.action).unwrap();
            assert!((lp - s.logp).abs() < 1e-10, "i={i}: {lp} vs {}", s.logp);
        }
    }

    #[test]
    fn tiny_sigma_concentrates_samples() {
        let mut p = tiny_params(3);
        for v in p.log_std_mut() {
            *v = LOG_STD_MIN;
        }
        let feats = [0.1, 0.4, -0.3];
        let mu = p.mean(&feats).unwrap();
        let mut rng = stream("concentrate", &[0]);
        let n = 10_000;
        let sigma = LOG_STD_MIN.exp();
        let mut within_1e2 = 0usize;
        let mut within_5sigma = 0usize;
        for _ in 0..n {
            let s = p.act(&feats, &mut rng).unwrap();
            // Recover the pre-squash sample.
            let u = (s.action[0] / 0.6).atanh();
            if (u - mu[0]).abs() < 1e-2 {
                within_1e2 += 1;
            }
            if (u - mu[0]).abs() < 5.0 * sigma {
                within_5sigma += 1;
            }
        }
        // 1e-2 is about 1.48 sigma at log_std = -5, so expect ~86% there and
        // essentially everything within 5 sigma.
        assert!(within_1e2 as f64 / n as f64 > 0.80);
        assert!(within_5sigma as f64 / n as f64 > 0.9995);
    }

    #[test]
    fn logp_at_mean_matches_gaussian_mode_density() {
        let mut p = tiny_params(4);
        for v in p.log_std_mut() {
            *v = 0.0; // sigma = 1
        }
        let feats = [0.5, -0.1, 0.2];
        let mu = p.mean(&feats).unwrap();
        let c = 0.6;
        let action: Vec<f64> = mu.iter().map(|m| c * m.tanh()).collect();
        let lp = p.logp(&feats, &action).unwrap();
        let d = 2.0;
        let squash: f64 = mu.iter().map(|m| -(c.ln()) - ln_one_minus_tanh_sq(*m)).sum();
        let expected = -0.5 * d * LN_2PI + squash;
        assert!((lp - expected).abs() < 1e-9, "{lp} vs {expected}");
    }

    #[test]
    fn logp_monotone_from_zero_mean_with_small_sigma() {
        // With mu = 0 and sigma well under 1/sqrt(2), the squashed density is
        // unimodal, so logp must fall as the action leaves the squashed mean.
        let mut p = PolicyParams::zeros(tiny_arch());
        for v in p.log_std_mut() {
            *v = -1.0;
        }
        let feats = [0.0, 0.0, 0.0];
        let mut last = f64::INFINITY;
        for k in 0..20 {
            let a = 0.0297 * (k as f64 + 1.0);
            let lp = p.logp(&feats, &[a, 0.0]).unwrap();
            assert!(lp < last, "k={k}");
            last = lp;
        }
    }

    #[test]
    fn boundary_actions_are_rejected() {
        let p = tiny_params(5);
        let feats = [0.0, 0.0, 0.0];
        assert!(matches!(
            p.logp(&feats, &[0.6, 0.0]),
            Err(Error::BoundaryAction { index: 0 })
        ));
        assert!(matches!(
            p.logp(&feats, &[0.0, -0.7]),
            Err(Error::BoundaryAction { index: 1 })
        ));
        let terms = p.logp_terms(&feats, &[0.6, 0.1]).unwrap();
        assert!(terms[0].is_none());
        assert!(terms[1].is_some());
        // Zero-weight dims are skipped by the weighted gradient.
        assert!(p.grad_logp_weighted(&feats, &[0.6, 0.1], &[0.0, 1.0]).is_ok());
        assert!(p.grad_logp_weighted(&feats, &[0.6, 0.1], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn density_integrates_to_one_in_one_dimension() {
        // 1-dof, chunk of one: quadrature of exp(logp) over the open action
        // interval must give 1.
        let arch = PolicyArch::new(2, vec![4], 1, 0.6).unwrap();
        let p = PolicyParams::init(arch, -0.2, &mut stream("quad", &[3]));
        let feats = [0.4, -0.7];
        let c = 0.6;
        let n = 400_001usize;
        let eps = 1e-9;
        let lo = -c + eps;
        let hi = c - eps;
        let h = (hi - lo) / (n - 1) as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let a = lo + i as f64 * h;
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            acc += w * p.logp(&feats, &[a]).unwrap().exp();
        }
        let integral = acc * h;
        assert!((integral - 1.0).abs() < 1e-4, "integral = {integral}");
    }

    #[test]
    fn grad_matches_finite_differences() {
        let p = tiny_params(6);
        let feats = [0.3, -0.5, 0.8];
        let mut rng = stream("fd", &[1]);
        let s = p.act(&feats, &mut rng).unwrap();
        let grad = p.grad_logp(&feats, &s.action).unwrap();
        let h = 1e-5;
        for k in 0..p.flat.len() {
            let mut plus = p.clone();
            plus.flat[k] += h;
            let mut minus = p.clone();
            minus.flat[k] -= h;
            let fd = (plus.logp(&feats, &s.action).unwrap()
                - minus.logp(&feats, &s.action).unwrap())
                / (2.0 * h);
            let denom = fd.abs().max(1e-4);
            assert!(
                (grad[k] - fd).abs() / denom < 1e-4,
                "param {k}: analytic {} vs fd {fd}",
                grad[k]
            );
        }
    }

    #[test]
    fn weighted_grad_is_linear_in_weights() {
        let p = tiny_params(7);
        let feats = [0.2, 0.1, -0.4];
        let action = [0.3, -0.2];
        let g1 = p.grad_logp_weighted(&feats, &action, &[1.0, 0.0]).unwrap();
        let g2 = p.grad_logp_weighted(&feats, &action, &[0.0, 1.0]).unwrap();
        let gw = p.grad_logp_weighted(&feats, &action, &[2.0, -0.5]).unwrap();
        for k in 0..g1.len() {
            let expect = 2.0 * g1[k] - 0.5 * g2[k];
            assert!((gw[k] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn log_std_gradient_is_minus_one_at_the_mean() {
        let p = tiny_params(8);
        let feats = [0.6, -0.2, 0.05];
        let mu = p.mean(&feats).unwrap();
        let action: Vec<f64> = mu.iter().map(|m| 0.6 * m.tanh()).collect();
        let grad = p.grad_logp(&feats, &action).unwrap();
        let off = p.arch.log_std_offset();
        for i in 0..2 {
            assert!((grad[off + i] + 1.0).abs() < 1e-9, "dim {i}: {}", grad[off + i]);
        }
    }

    #[test]
    fn zero_params_zero_obs_gradient_is_symmetric_across_hidden_units() {
        let p = PolicyParams::zeros(tiny_arch());
        let feats = [0.0, 0.0, 0.0];
        let grad = p.grad_logp(&feats, &[0.2, -0.1]).unwrap();
        // First-layer bias gradients are identical across the 4 hidden units
        // (all zero here since the second-layer weights vanish), as are all
        // second-layer weight gradients fed by identical activations.
        let b0 = &grad[12..16];
        assert!(b0.windows(2).all(|w| w[0] == w[1]));
        let w1 = &grad[16..24];
        assert!(w1.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn score_function_has_zero_mean_under_the_policy() {
        let p = tiny_params(9);
        let feats = [0.25, -0.1, 0.6];
        let mut rng = stream("score", &[0]);
        let n = 10_000usize;
        let dim = p.flat.len();
        let mut sum = vec![0.0; dim];
        let mut sum_sq = vec![0.0; dim];
        for _ in 0..n {
            let s = p.act(&feats, &mut rng).unwrap();
            let g = p.grad_logp(&feats, &s.action).unwrap();
            for k in 0..dim {
                sum[k] += g[k];
                sum_sq[k] += g[k] * g[k];
            }
        }
        for k in 0..dim {
            let mean = sum[k] / n as f64;
            let var = (sum_sq[k] / n as f64 - mean * mean).max(0.0);
            let se = (var / n as f64).sqrt();
            assert!(
                mean.abs() <= 4.0 * se + 1e-12,
                "param {k}: mean {mean}, se {se}"
            );
        }
    }

    #[test]
    fn non_finite_parameters_error_out() {
        let mut p = tiny_params(10);
        p.flat[0] = f64::NAN;
        assert!(matches!(
            p.act(&[0.1, 0.2, 0.3], &mut stream("nan", &[0])),
            Err(Error::NumericalFailure(_))
        ));
    }

    #[test]
    fn kl_zero_for_identical_params_and_positive_otherwise() {
        let p = tiny_params(11);
        let reference = ReferencePolicy::new(p.clone());
        let batch: Vec<Vec<f64>> = vec![vec![0.1, 0.2, 0.3], vec![-0.5, 0.0, 0.9]];
        let kl = kl_divergence(&p, &reference, &batch).unwrap();
        assert_eq!(kl, 0.0);
        let mut rng = stream("kl-pos", &[0]);
        for s in 0..20 {
            let q = tiny_params(100 + s);
            let kl = kl_divergence(&q, &reference, &batch).unwrap();
            assert!(kl >= 0.0, "seed {s}: {kl}");
        }
        let _ = &mut rng;
    }

    #[test]
    fn kl_closed_form_matches_monte_carlo_for_scaled_sigma() {
        // Same means, sigma_theta = e * sigma_ref: per-dimension KL(theta||ref)
        // is log(sigma_r/sigma_t) + sigma_t^2/(2 sigma_r^2) - 1/2 = e^2/2 - 3/2.
        let base = tiny_params(12);
        let reference = ReferencePolicy::new(base.clone());
        let mut p = base.clone();
        for v in p.log_std_mut() {
            *v += 1.0;
        }
        let batch = vec![vec![0.3, -0.2, 0.1]];
        let kl = kl_divergence(&p, &reference, &batch).unwrap();
        let d = 2.0;
        let closed = d * (0.5 * 1.0f64.exp().powi(2) - 1.5);
        assert!((kl - closed).abs() < 1e-12, "{kl} vs {closed}");

        // Monte-Carlo oracle: E_theta[log p_theta - log p_ref] over pre-squash
        // Gaussians.
        let mu = p.mean(&batch[0]).unwrap();
        let ls_t = p.log_std().to_vec();
        let ls_r = reference.params().log_std().to_vec();
        let mut rng = stream("kl-mc", &[0]);
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            for i in 0..2 {
                let x = mu[i] + ls_t[i].exp() * standard_normal(&mut rng);
                let lt = -ls_t[i] - 0.5 * ((x - mu[i]) / ls_t[i].exp()).powi(2);
                let lr = -ls_r[i] - 0.5 * ((x - mu[i]) / ls_r[i].exp()).powi(2);
                acc += lt - lr;
            }
        }
        let mc = acc / n as f64;
        assert!((mc - kl).abs() / kl < 0.02, "mc {mc} vs closed form {kl}");
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        let p = tiny_params(13);
        let mut other = tiny_params(14);
        other.log_std_mut()[0] = -0.9;
        let reference = ReferencePolicy::new(other);
        let batch: Vec<Vec<f64>> = vec![vec![0.1, -0.3, 0.7], vec![0.9, 0.2, -0.5]];
        let (_, grad) = kl_with_grad(&p, &reference, &batch).unwrap();
        let h = 1e-6;
        for k in 0..p.flat.len() {
            let mut plus = p.clone();
            plus.flat[k] += h;
            let mut minus = p.clone();
            minus.flat[k] -= h;
            let fd = (kl_divergence(&plus, &reference, &batch).unwrap()
                - kl_divergence(&minus, &reference, &batch).unwrap())
                / (2.0 * h);
            let denom = fd.abs().max(1e-4);
            assert!(
                (grad[k] - fd).abs() / denom < 1e-4,
                "param {k}: analytic {} vs fd {fd}",
                grad[k]
            );
        }
    }

    #[test]
    fn mean_action_is_squashed_scaled_mean() {
        let p = tiny_params(15);
        let feats = [0.2, 0.6, -0.8];
        let mu = p.mean(&feats).unwrap();
        let a = p.mean_action(&feats).unwrap();
        for i in 0..2 {
            assert!((a[i] - 0.6 * mu[i].tanh()).abs() < 1e-15);
            assert!(a[i].abs() < 0.6);
        }
    }
}
