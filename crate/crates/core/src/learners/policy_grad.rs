//! Score-function policy gradient for tabular softmax policies.

use serde::{Deserialize, Serialize};

use super::optim::Optimizer;
use super::rollout::Rollouts;
use crate::error::{Error, Result};
use crate::mdp::TabularPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyObjective {
    /// Plain REINFORCE with a per-state baseline.
    #[default]
    Reinforce,
    /// Clipped surrogate, optimized for `epochs` steps on each batch.
    Ppo { clip: f64, epochs: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyMetrics {
    pub n_steps: usize,
    pub mean_abs_advantage: f64,
    pub grad_norm: f64,
}

/// Discounted return-to-go of `rewards`. `bootstrap[e]` is the value after
/// the last step of episode `e`.
pub fn returns_to_go(
    rollouts: &Rollouts,
    rewards: &[Vec<f64>],
    bootstrap: &[f64],
    discount: f64,
) -> Result<Vec<Vec<f64>>> {
    if rewards.len() != rollouts.episodes.len() || bootstrap.len() != rollouts.episodes.len() {
        return Err(Error::Dimension("one reward row and bootstrap value per episode".into()));
    }
    rollouts
        .episodes
        .iter()
        .zip(rewards)
        .zip(bootstrap)
        .map(|((ep, r), &boot)| {
            if r.len() != ep.steps.len() {
                return Err(Error::Dimension("reward row length differs from episode length".into()));
            }
            let mut g = vec![0.0; r.len()];
            let mut acc = boot;
            for t in (0..r.len()).rev() {
                acc = r[t] + discount * acc;
                g[t] = acc;
            }
            Ok(g)
        })
        .collect()
}

/// Return-to-go minus the batch mean return-to-go in the same state.
pub fn advantages(
    rollouts: &Rollouts,
    rewards: &[Vec<f64>],
    bootstrap: &[f64],
    discount: f64,
    n_states: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut returns = returns_to_go(rollouts, rewards, bootstrap, discount)?;
    let mut sum = vec![0.0; n_states];
    let mut count = vec![0usize; n_states];
    for step_g in rollouts.steps_with(&returns) {
        sum[step_g.0] += step_g.1;
        count[step_g.0] += 1;
    }
    for (ep, g) in rollouts.episodes.iter().zip(returns.iter_mut()) {
        for (step, gt) in ep.steps.iter().zip(g.iter_mut()) {
            *gt -= sum[step.s] / count[step.s] as f64;
        }
    }
    Ok(returns)
}

/// `mean over steps of A * grad log pi(a|s)` with respect to the logits.
pub fn policy_gradient(policy: &TabularPolicy, rollouts: &Rollouts, adv: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = rollouts.n_steps();
    if n == 0 {
        return Err(Error::EmptyBatch("rollouts"));
    }
    let na = policy.n_actions();
    let mut grad = vec![0.0; policy.logits().len()];
    for (ep, a_row) in rollouts.episodes.iter().zip(adv) {
        for (step, &adv) in ep.steps.iter().zip(a_row) {
            if adv == 0.0 {
                continue;
            }
            let row = policy.row(step.s);
            let base = step.s * na;
            for b in 0..na {
                grad[base + b] -= adv * row[b];
            }
            grad[base + step.a] += adv;
        }
    }
    let w = 1.0 / n as f64;
    grad.iter_mut().for_each(|g| *g *= w);
    Ok(grad)
}

fn clipped_gradient(
    policy: &TabularPolicy,
    old: &TabularPolicy,
    rollouts: &Rollouts,
    adv: &[Vec<f64>],
    clip: f64,
) -> Vec<f64> {
    let na = policy.n_actions();
    let mut grad = vec![0.0; policy.logits().len()];
    for (ep, a_row) in rollouts.episodes.iter().zip(adv) {
        for (step, &adv) in ep.steps.iter().zip(a_row) {
            let ratio = (policy.log_prob(step.s, step.a) - old.log_prob(step.s, step.a)).exp();
            let clipped = (adv >= 0.0 && ratio > 1.0 + clip) || (adv < 0.0 && ratio < 1.0 - clip);
            if clipped || adv == 0.0 {
                continue;
            }
            let scale = adv * ratio;
            let row = policy.row(step.s);
            let base = step.s * na;
            for b in 0..na {
                grad[base + b] -= scale * row[b];
            }
            grad[base + step.a] += scale;
        }
    }
    let w = 1.0 / rollouts.n_steps() as f64;
    grad.iter_mut().for_each(|g| *g *= w);
    grad
}

/// One policy improvement step (or `epochs` clipped steps for PPO).
pub fn policy_update(
    policy: &mut TabularPolicy,
    optimizer: &mut Optimizer,
    rollouts: &Rollouts,
    adv: &[Vec<f64>],
    objective: PolicyObjective,
) -> Result<PolicyMetrics> {
    let n = rollouts.n_steps();
    if n == 0 {
        return Err(Error::EmptyBatch("rollouts"));
    }
    let mean_abs_advantage = adv.iter().flatten().map(|a| a.abs()).sum::<f64>() / n as f64;
    let grad_norm;
    match objective {
        PolicyObjective::Reinforce => {
            let grad = policy_gradient(policy, rollouts, adv)?;
            grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            let step = optimizer.step(&grad);
            policy.apply_update(&step, 1.0);
        }
        PolicyObjective::Ppo { clip, epochs } => {
            let old = policy.clone();
            let mut first = None;
            for _ in 0..epochs.max(1) {
                let grad = clipped_gradient(policy, &old, rollouts, adv, clip);
                first.get_or_insert_with(|| grad.iter().map(|g| g * g).sum::<f64>().sqrt());
                let step = optimizer.step(&grad);
                policy.apply_update(&step, 1.0);
            }
            grad_norm = first.unwrap_or(0.0);
        }
    }
    Ok(PolicyMetrics {
        n_steps: n,
        mean_abs_advantage,
        grad_norm,
    })
}
