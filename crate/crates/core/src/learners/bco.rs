//! Behaviour cloning from observation with a counted inverse dynamics model.

use log::warn;
use rand::Rng;

use super::optim::Optimizer;
use super::record::{RunRecord, RunRow};
use super::rollout::collect_rollouts;
use super::train::{check_demos, diagnostics};
use super::{stream_rng, streams, TrainConfig};
use crate::error::{Error, Result};
use crate::gridworld::Demonstration;
use crate::mdp::{TabularMdp, TabularPolicy};

/// Empirical `(s, s') -> a` counts from agent experience.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseModel {
    n_states: usize,
    n_actions: usize,
    counts: Vec<f64>,
}

impl InverseModel {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        InverseModel {
            n_states,
            n_actions,
            counts: vec![0.0; n_states * n_states * n_actions],
        }
    }

    fn offset(&self, s: usize, sn: usize) -> usize {
        (s * self.n_states + sn) * self.n_actions
    }

    pub fn observe(&mut self, s: usize, a: usize, sn: usize) {
        let o = self.offset(s, sn);
        self.counts[o + a] += 1.0;
    }

    pub fn visits(&self, s: usize, sn: usize) -> f64 {
        let o = self.offset(s, sn);
        self.counts[o..o + self.n_actions].iter().sum()
    }

    /// Smoothed `p(a | s, s')`, or `None` for a pair never observed.
    pub fn distribution(&self, s: usize, sn: usize, smoothing: f64) -> Option<Vec<f64>> {
        let total = self.visits(s, sn);
        if total == 0.0 {
            return None;
        }
        let o = self.offset(s, sn);
        let z = total + smoothing * self.n_actions as f64;
        Some(self.counts[o..o + self.n_actions].iter().map(|c| (c + smoothing) / z).collect())
    }

    /// Argmax action with uniform tie-breaking; uniform over all actions
    /// for an unseen pair. The flag reports the unseen case.
    pub fn label<R: Rng + ?Sized>(&self, s: usize, sn: usize, smoothing: f64, rng: &mut R) -> (usize, bool) {
        match self.distribution(s, sn, smoothing) {
            None => (rng.random_range(0..self.n_actions), true),
            Some(p) => {
                let best = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let ties: Vec<usize> = (0..p.len()).filter(|&a| p[a] == best).collect();
                let pick = if ties.len() == 1 { ties[0] } else { ties[rng.random_range(0..ties.len())] };
                (pick, false)
            }
        }
    }
}

/// Mean negative log-likelihood of the labels and its gradient (ascent
/// direction on the log-likelihood) with respect to the logits.
fn cloning_gradient(policy: &TabularPolicy, labeled: &[(usize, usize)]) -> (f64, Vec<f64>) {
    let na = policy.n_actions();
    let mut grad = vec![0.0; policy.logits().len()];
    let mut nll = 0.0;
    for &(s, a) in labeled {
        nll -= policy.log_prob(s, a);
        let row = policy.row(s);
        for b in 0..na {
            grad[s * na + b] -= row[b];
        }
        grad[s * na + a] += 1.0;
    }
    let w = 1.0 / labeled.len() as f64;
    grad.iter_mut().for_each(|g| *g *= w);
    (nll * w, grad)
}

/// Alternates inverse-model fitting on agent rollouts, labeling of expert
/// transitions and behaviour cloning on the labels.
pub fn bco_train(
    mdp: &TabularMdp,
    max_steps: usize,
    demos: &Demonstration,
    expert: Option<&TabularPolicy>,
    config: &TrainConfig,
) -> Result<(TabularPolicy, RunRecord)> {
    config.validate()?;
    check_demos(mdp, demos, config.algorithm)?;
    if max_steps == 0 {
        return Err(Error::Precondition("max_steps must be at least 1".into()));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut rollout_rng = stream_rng(config.seed, streams::ROLLOUT);
    let mut label_rng = stream_rng(config.seed, streams::BCO);
    let mut model = InverseModel::new(ns, na);
    let mut policy = TabularPolicy::uniform(ns, na);
    let mut opt = Optimizer::new(config.optimizer, config.policy_lr(), config.momentum, ns * na);
    let pairs: Vec<(usize, usize)> = demos.records().map(|r| (r.s, r.sn)).collect();

    let mut record = RunRecord::default();
    for iter in 0..config.iterations {
        let rollouts = collect_rollouts(mdp, &policy, max_steps, config.rollout_steps, &mut rollout_rng);
        if rollouts.n_steps() == 0 {
            return Err(Error::EmptyBatch("rollouts"));
        }
        for st in rollouts.steps() {
            model.observe(st.s, st.a, st.sn);
        }
        let mut unseen = 0;
        let labeled: Vec<(usize, usize)> = pairs
            .iter()
            .map(|&(s, sn)| {
                let (a, guessed) = model.label(s, sn, config.bco_smoothing, &mut label_rng);
                unseen += guessed as usize;
                (s, a)
            })
            .collect();
        if unseen > 0 {
            warn!("BCO iter {iter}: {unseen} expert transitions never seen in rollouts, labeled uniformly at random");
        }
        let mut nll = f64::NAN;
        for _ in 0..config.bco_epochs {
            let (loss, grad) = cloning_gradient(&policy, &labeled);
            nll = loss;
            let step = opt.step(&grad);
            policy.apply_update(&step, 1.0);
        }

        let (policy_entropy, diag_kl_ss, diag_kl_sa, diag_idd) = if iter % config.log_interval == 0 {
            diagnostics(mdp, &policy, expert, config)
        } else {
            (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
        };
        record.rows.push(RunRow {
            iter,
            mean_return: rollouts.mean_return(),
            disc_loss: nll,
            mi_estimate: f64::NAN,
            policy_entropy,
            diag_kl_ss,
            diag_kl_sa,
            diag_idd,
        });
    }
    Ok((policy, record))
}
