//! Gaussian-logit policy, value regression, and the clipped surrogate with its
//! analytic gradients.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::nn::Mlp;

/// Logits ~ N(μ(s), diag(exp(log_std)²)); weights are softmax(logits).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(
        obs_dim: usize,
        n_actions: usize,
        hidden: &[usize],
        init_log_std: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(n_actions);
        Self {
            mean: Mlp::new(&sizes, 0.01, rng),
            log_std: vec![init_log_std; n_actions],
        }
    }

    pub fn n_actions(&self) -> usize {
        self.log_std.len()
    }

    pub fn n_params(&self) -> usize {
        self.mean.n_params() + self.log_std.len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.mean.params().to_vec();
        p.extend_from_slice(&self.log_std);
        p
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let n = self.mean.n_params();
        self.mean.params_mut().copy_from_slice(&flat[..n]);
        self.log_std.copy_from_slice(&flat[n..]);
    }

    pub fn is_finite(&self) -> bool {
        self.mean
            .params()
            .iter()
            .chain(&self.log_std)
            .all(|v| v.is_finite())
    }

    pub fn mean_logits(&self, obs: &[f64]) -> Vec<f64> {
        self.mean.predict(obs)
    }

    pub fn sample(&self, obs: &[f64], rng: &mut impl Rng) -> (Vec<f64>, f64) {
        let mu = self.mean_logits(obs);
        let action: Vec<f64> = mu
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let z: f64 = StandardNormal.sample(rng);
                m + ls.exp() * z
            })
            .collect();
        let lp = gaussian_log_prob(&mu, &self.log_std, &action);
        (action, lp)
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> f64 {
        gaussian_log_prob(&self.mean_logits(obs), &self.log_std, action)
    }

    /// Adds `coeff · ∇ log π(action | obs)` into `grad` and returns log π.
    pub fn accumulate_log_prob_grad(
        &self,
        obs: &[f64],
        action: &[f64],
        coeff: f64,
        grad: &mut [f64],
    ) -> f64 {
        let fwd = self.mean.forward(obs);
        let mu = fwd.output();
        let n = self.mean.n_params();
        let mut d_mu = vec![0.0; mu.len()];
        for i in 0..mu.len() {
            let var = (2.0 * self.log_std[i]).exp();
            let diff = action[i] - mu[i];
            d_mu[i] = coeff * diff / var;
            grad[n + i] += coeff * (diff * diff / var - 1.0);
        }
        let lp = gaussian_log_prob(mu, &self.log_std, action);
        self.mean.backward(&fwd, &d_mu, &mut grad[..n]);
        lp
    }
}

pub fn gaussian_log_prob(mu: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mu.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

/// One-step advantage: `r + γ·v_next − v_curr`.
pub fn advantage(reward: f64, gamma: f64, v_next: f64, v_curr: f64) -> f64 {
    reward + gamma * v_next - v_curr
}

/// `min(ρ·A, clip(ρ, 1−ε, 1+ε)·A)`.
pub fn clipped_objective(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Derivative of the clipped objective with respect to log π: `ρ·A` where the
/// unclipped branch is active, zero where the clipped constant wins.
pub fn clipped_objective_dlogp(ratio: f64, adv: f64, eps: f64) -> f64 {
    let unclipped = ratio * adv;
    if unclipped <= ratio.clamp(1.0 - eps, 1.0 + eps) * adv {
        unclipped
    } else {
        0.0
    }
}

/// A policy-update sample: observation, taken action, behaviour log-prob, advantage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySample {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub old_log_prob: f64,
    pub advantage: f64,
}

/// Mean clipped surrogate over `batch`.
pub fn policy_objective(policy: &GaussianPolicy, batch: &[PolicySample], eps: f64) -> f64 {
    let total: f64 = batch
        .iter()
        .map(|s| {
            let ratio = (policy.log_prob(&s.obs, &s.action) - s.old_log_prob).exp();
            clipped_objective(ratio, s.advantage, eps)
        })
        .sum();
    total / batch.len() as f64
}

/// Gradient of [`policy_objective`] (ascent direction) and the objective value.
pub fn policy_objective_grad(
    policy: &GaussianPolicy,
    batch: &[PolicySample],
    eps: f64,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; policy.n_params()];
    let mut total = 0.0;
    let n = batch.len() as f64;
    for s in batch {
        let ratio = (policy.log_prob(&s.obs, &s.action) - s.old_log_prob).exp();
        total += clipped_objective(ratio, s.advantage, eps);
        let coeff = clipped_objective_dlogp(ratio, s.advantage, eps) / n;
        if coeff != 0.0 {
            policy.accumulate_log_prob_grad(&s.obs, &s.action, coeff, &mut grad);
        }
    }
    (total / n, grad)
}

/// Mean squared error of the value net against fixed targets.
pub fn value_loss(value: &Mlp, obs: &[Vec<f64>], targets: &[f64]) -> f64 {
    let total: f64 = obs
        .iter()
        .zip(targets)
        .map(|(o, t)| {
            let d = value.predict(o)[0] - t;
            d * d
        })
        .sum();
    total / obs.len() as f64
}

/// Gradient of [`value_loss`] (descent direction) and the loss value.
pub fn value_loss_grad(value: &Mlp, obs: &[Vec<f64>], targets: &[f64]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; value.n_params()];
    let mut total = 0.0;
    let n = obs.len() as f64;
    for (o, t) in obs.iter().zip(targets) {
        let fwd = value.forward(o);
        let d = fwd.output()[0] - t;
        total += d * d;
        value.backward(&fwd, &[2.0 * d / n], &mut grad);
    }
    (total / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;

    #[test]
    fn advantage_examples() {
        assert!((advantage(1.0, 0.99, 0.5, 0.2) - 1.295).abs() < 1e-12);
        assert_eq!(advantage(1.0, 0.0, 7.0, 0.25), 0.75);
        assert_eq!(advantage(-1.0, 1.0, 0.4, 0.4), -1.0);
    }

    #[test]
    fn clipped_objective_examples() {
        for a in [-3.0, -0.5, 0.0, 2.0] {
            assert_eq!(clipped_objective(1.0, a, 0.2), a);
        }
        assert!((clipped_objective(1.3, 2.0, 0.2) - 2.4).abs() < 1e-12);
        assert!((clipped_objective(0.5, -1.0, 0.2) + 0.8).abs() < 1e-12);
    }

    #[test]
    fn clipped_objective_upper_bound() {
        let mut r = rng(5);
        for _ in 0..10_000 {
            let ratio: f64 = r.random_range(0.01..5.0);
            let adv: f64 = r.random_range(-4.0..4.0);
            let eps: f64 = r.random_range(0.01..0.99);
            assert!(clipped_objective(ratio, adv, eps) <= adv.abs() * (1.0 + eps) + 1e-12);
        }
    }

    #[test]
    fn log_prob_grad_matches_finite_differences() {
        let mut r = rng(8);
        let mut policy = GaussianPolicy::new(4, 3, &[6, 5], -0.3, &mut r);
        let obs = [0.2, -0.4, 0.9, 0.1];
        let (action, _) = policy.sample(&obs, &mut r);
        let mut grad = vec![0.0; policy.n_params()];
        policy.accumulate_log_prob_grad(&obs, &action, 1.0, &mut grad);
        let base = policy.params();
        let h = 1e-6;
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += h;
            policy.set_params(&p);
            let up = policy.log_prob(&obs, &action);
            p[i] -= 2.0 * h;
            policy.set_params(&p);
            let down = policy.log_prob(&obs, &action);
            let fd = (up - down) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() < 1e-6,
                "param {i}: {fd} vs {}",
                grad[i]
            );
        }
    }
}
