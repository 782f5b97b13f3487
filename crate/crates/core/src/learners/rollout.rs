use rand::Rng;

use crate::gridworld::{sample_initial, sample_next};
use crate::mdp::{TabularMdp, TabularPolicy};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub s: usize,
    pub a: usize,
    pub sn: usize,
    /// Environment reward, used for reporting only.
    pub env_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Episode {
    pub steps: Vec<Step>,
    /// Ended by entering a terminal state (as opposed to truncation).
    pub terminated: bool,
}

impl Episode {
    pub fn env_return(&self) -> f64 {
        self.steps.iter().map(|s| s.env_reward).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Rollouts {
    pub episodes: Vec<Episode>,
}

impl Rollouts {
    pub fn n_steps(&self) -> usize {
        self.episodes.iter().map(|e| e.steps.len()).sum()
    }

    pub fn steps(&self) -> impl Iterator<Item = &Step> {
        self.episodes.iter().flat_map(|e| e.steps.iter())
    }

    /// `(state, value)` pairs aligning each step with a per-step table.
    pub fn steps_with<'a>(&'a self, values: &'a [Vec<f64>]) -> impl Iterator<Item = (usize, f64)> + 'a {
        self.episodes
            .iter()
            .zip(values)
            .flat_map(|(ep, v)| ep.steps.iter().zip(v).map(|(st, &x)| (st.s, x)))
    }

    pub fn mean_return(&self) -> f64 {
        if self.episodes.is_empty() {
            return f64::NAN;
        }
        self.episodes.iter().map(Episode::env_return).sum::<f64>() / self.episodes.len() as f64
    }
}

/// One episode of at most `max_steps` steps.
pub fn run_episode<R: Rng + ?Sized>(mdp: &TabularMdp, policy: &TabularPolicy, max_steps: usize, rng: &mut R) -> Episode {
    let mut s = sample_initial(mdp, rng);
    let mut episode = Episode::default();
    while !mdp.is_terminal(s) && episode.steps.len() < max_steps {
        let a = policy.sample_with(s, rng.random());
        let sn = sample_next(mdp, s, a, rng);
        episode.steps.push(Step {
            s,
            a,
            sn,
            env_reward: mdp.reward(s, a).unwrap_or(0.0),
        });
        s = sn;
    }
    episode.terminated = mdp.is_terminal(s);
    episode
}

/// Complete episodes until at least `min_steps` steps are collected.
pub fn collect_rollouts<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    max_steps: usize,
    min_steps: usize,
    rng: &mut R,
) -> Rollouts {
    let mut rollouts = Rollouts::default();
    let mut total = 0;
    while total < min_steps.max(1) {
        let ep = run_episode(mdp, policy, max_steps, rng);
        if ep.steps.is_empty() {
            break;
        }
        total += ep.steps.len();
        rollouts.episodes.push(ep);
    }
    rollouts
}

/// Undiscounted returns of `n` evaluation episodes.
pub fn evaluate<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    max_steps: usize,
    n: usize,
    rng: &mut R,
) -> Vec<f64> {
    (0..n).map(|_| run_episode(mdp, policy, max_steps, rng).env_return()).collect()
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
