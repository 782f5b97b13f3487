//! Finite MDPs and tabular softmax policies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;

/// A finite discounted MDP `(S, A, r, T, mu, gamma)`.
///
/// Terminal states are absorbing: every action self-loops with probability 1.
/// The reward table is only ever read by evaluation code and the expert
/// solver; imitation learners never see it.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    init: Vec<f64>,
    terminal: Vec<bool>,
    /// Row-major `[s][a][s']`.
    transition: Vec<f64>,
    /// Row-major `[s][a]`.
    reward: Option<Vec<f64>>,
}

/// JSON document form of [`TabularMdp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MdpDocument {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    init: Vec<f64>,
    terminal: Vec<bool>,
    transition: Vec<Vec<Vec<f64>>>,
    reward: Option<Vec<Vec<f64>>>,
}

impl TabularMdp {
    /// Validates and builds an MDP from a nested transition tensor `T[s][a][s']`.
    pub fn new(
        gamma: f64,
        init: Vec<f64>,
        terminal: Vec<bool>,
        transition: Vec<Vec<Vec<f64>>>,
        reward: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n_states = transition.len();
        if n_states == 0 {
            return Err(Error::InvalidMdp("no states".into()));
        }
        let n_actions = transition[0].len();
        if n_actions == 0 {
            return Err(Error::InvalidMdp("no actions".into()));
        }
        let mut flat = Vec::with_capacity(n_states * n_actions * n_states);
        for (s, rows) in transition.iter().enumerate() {
            if rows.len() != n_actions {
                return Err(Error::Dimension(format!(
                    "transition[{s}] has {} actions, expected {n_actions}",
                    rows.len()
                )));
            }
            for (a, row) in rows.iter().enumerate() {
                if row.len() != n_states {
                    return Err(Error::Dimension(format!(
                        "transition[{s}][{a}] has length {}, expected {n_states}",
                        row.len()
                    )));
                }
                flat.extend_from_slice(row);
            }
        }
        let reward = match reward {
            None => None,
            Some(table) => {
                if table.len() != n_states || table.iter().any(|r| r.len() != n_actions) {
                    return Err(Error::Dimension(format!(
                        "reward table must be {n_states}x{n_actions}"
                    )));
                }
                Some(table.into_iter().flatten().collect())
            }
        };
        Self::from_flat(gamma, init, terminal, flat, reward, n_states, n_actions)
    }

    /// Builds an MDP from row-major flat buffers.
    pub fn from_flat(
        gamma: f64,
        init: Vec<f64>,
        terminal: Vec<bool>,
        transition: Vec<f64>,
        reward: Option<Vec<f64>>,
        n_states: usize,
        n_actions: usize,
    ) -> Result<Self> {
        let mdp = TabularMdp {
            n_states,
            n_actions,
            gamma,
            init,
            terminal,
            transition,
            reward,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    fn validate(&self) -> Result<()> {
        let (ns, na) = (self.n_states, self.n_actions);
        if ns == 0 || na == 0 {
            return Err(Error::InvalidMdp("empty state or action space".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidMdp(format!(
                "discount must lie in (0,1), got {}",
                self.gamma
            )));
        }
        if self.init.len() != ns {
            return Err(Error::Dimension(format!(
                "init has length {}, expected {ns}",
                self.init.len()
            )));
        }
        if self.terminal.len() != ns {
            return Err(Error::Dimension(format!(
                "terminal has length {}, expected {ns}",
                self.terminal.len()
            )));
        }
        if self.transition.len() != ns * na * ns {
            return Err(Error::Dimension("transition tensor size".into()));
        }
        if let Some(r) = &self.reward {
            if r.len() != ns * na {
                return Err(Error::Dimension("reward table size".into()));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidMdp("non-finite reward".into()));
            }
        }
        check_distribution(&self.init).map_err(|m| Error::InvalidMdp(format!("init {m}")))?;
        for s in 0..ns {
            for a in 0..na {
                check_distribution(self.next_dist(s, a))
                    .map_err(|m| Error::InvalidMdp(format!("T[{s}][{a}] {m}")))?;
                if self.terminal[s] && self.next_dist(s, a)[s] != 1.0 {
                    return Err(Error::InvalidMdp(format!(
                        "terminal state {s} must self-loop under action {a}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn init(&self) -> &[f64] {
        &self.init
    }

    pub fn terminal(&self) -> &[bool] {
        &self.terminal
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    /// `T(. | s, a)`.
    pub fn next_dist(&self, s: usize, a: usize) -> &[f64] {
        let ns = self.n_states;
        let start = (s * self.n_actions + a) * ns;
        &self.transition[start..start + ns]
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.next_dist(s, a)[next]
    }

    pub fn transition_flat(&self) -> &[f64] {
        &self.transition
    }

    pub fn has_reward(&self) -> bool {
        self.reward.is_some()
    }

    pub fn reward(&self, s: usize, a: usize) -> Option<f64> {
        self.reward.as_ref().map(|r| r[s * self.n_actions + a])
    }

    /// Returns a copy with a replaced discount.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut out = self.clone();
        out.gamma = gamma;
        out.validate()?;
        Ok(out)
    }

    /// True when every `T[s][a]` is one-hot.
    pub fn is_deterministic(&self) -> bool {
        (0..self.n_states).all(|s| {
            (0..self.n_actions).all(|a| {
                let row = self.next_dist(s, a);
                row.iter().filter(|&&p| p != 0.0).count() == 1
                    && row.contains(&1.0)
            })
        })
    }

    /// The successor of `(s, a)` in a deterministic MDP.
    pub fn deterministic_next(&self, s: usize, a: usize) -> Option<usize> {
        let row = self.next_dist(s, a);
        row.iter().position(|&p| p == 1.0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MdpDocument = serde_json::from_str(text)?;
        let mdp = Self::new(doc.gamma, doc.init, doc.terminal, doc.transition, doc.reward)?;
        if mdp.n_states != doc.n_states || mdp.n_actions != doc.n_actions {
            return Err(Error::Dimension(format!(
                "declared {}x{} but tensor is {}x{}",
                doc.n_states, doc.n_actions, mdp.n_states, mdp.n_actions
            )));
        }
        Ok(mdp)
    }

    fn to_document(&self) -> MdpDocument {
        let (ns, na) = (self.n_states, self.n_actions);
        let transition = (0..ns)
            .map(|s| (0..na).map(|a| self.next_dist(s, a).to_vec()).collect())
            .collect();
        let reward = self
            .reward
            .as_ref()
            .map(|r| r.chunks(na).map(<[f64]>::to_vec).collect());
        MdpDocument {
            n_states: ns,
            n_actions: na,
            gamma: self.gamma,
            init: self.init.clone(),
            terminal: self.terminal.clone(),
            transition,
            reward,
        }
    }
}

fn check_distribution(p: &[f64]) -> std::result::Result<(), String> {
    if let Some(i) = p.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(format!("entry {i} is negative or non-finite"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > ROW_SUM_TOL {
        return Err(format!("sums to {total}, not 1"));
    }
    Ok(())
}

/// Stationary stochastic policy `pi(a|s)` parameterised by softmax logits.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    logits: Vec<f64>,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PolicyDocument {
    n_states: usize,
    n_actions: usize,
    logits: Vec<Vec<f64>>,
}

impl TabularPolicy {
    pub fn from_logits(n_states: usize, n_actions: usize, logits: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidPolicy("empty state or action space".into()));
        }
        if logits.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "logits have length {}, expected {}",
                logits.len(),
                n_states * n_actions
            )));
        }
        if let Some(i) = logits.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidPolicy(format!("non-finite logit at {i}")));
        }
        let mut policy = TabularPolicy {
            n_states,
            n_actions,
            logits,
            probs: vec![0.0; n_states * n_actions],
            log_probs: vec![0.0; n_states * n_actions],
        };
        policy.refresh();
        if let Some(i) = policy.probs.iter().position(|&p| p <= 0.0) {
            return Err(Error::InvalidPolicy(format!(
                "probability underflow at state {} action {}",
                i / n_actions,
                i % n_actions
            )));
        }
        Ok(policy)
    }

    pub fn from_logit_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let ns = rows.len();
        let na = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != na) {
            return Err(Error::Dimension("ragged logit table".into()));
        }
        Self::from_logits(ns, na, rows.into_iter().flatten().collect())
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self::from_logits(n_states, n_actions, vec![0.0; n_states * n_actions])
            .expect("zero logits form a valid policy")
    }

    fn refresh(&mut self) {
        let na = self.n_actions;
        for ((theta, p), lp) in self
            .logits
            .chunks(na)
            .zip(self.probs.chunks_mut(na))
            .zip(self.log_probs.chunks_mut(na))
        {
            let max = theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = theta.iter().map(|t| (t - max).exp()).sum();
            let log_z = max + z.ln();
            for a in 0..na {
                lp[a] = theta[a] - log_z;
                p[a] = (theta[a] - max).exp() / z;
            }
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn log_prob(&self, s: usize, a: usize) -> f64 {
        self.log_probs[s * self.n_actions + a]
    }

    /// Adds `scale * delta` to the logits and recomputes the softmax.
    pub fn apply_update(&mut self, delta: &[f64], scale: f64) {
        assert_eq!(delta.len(), self.logits.len(), "logit update has wrong size");
        for (t, d) in self.logits.iter_mut().zip(delta) {
            *t += scale * d;
        }
        self.refresh();
    }

    /// Draws an action in state `s` by inverse-CDF sampling on `u ~ U[0,1)`.
    pub fn sample_with(&self, s: usize, u: f64) -> usize {
        let row = self.row(s);
        let mut acc = 0.0;
        for (a, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        // Rounding can leave `acc` a hair under 1.
        row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
    }

    /// Policy `softmax((1-t) theta_a + t theta_b)`.
    pub fn interpolate(a: &Self, b: &Self, t: f64) -> Result<Self> {
        if a.n_states != b.n_states || a.n_actions != b.n_actions {
            return Err(Error::Dimension("policies of different shape".into()));
        }
        let logits = a
            .logits
            .iter()
            .zip(&b.logits)
            .map(|(x, y)| (1.0 - t) * x + t * y)
            .collect();
        Self::from_logits(a.n_states, a.n_actions, logits)
    }

    pub fn check_matches(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(Error::Dimension(format!(
                "policy is {}x{} but MDP is {}x{}",
                self.n_states,
                self.n_actions,
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = PolicyDocument {
            n_states: self.n_states,
            n_actions: self.n_actions,
            logits: self.logits.chunks(self.n_actions).map(<[f64]>::to_vec).collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PolicyDocument = serde_json::from_str(text)?;
        let p = Self::from_logit_rows(doc.logits)?;
        if p.n_states != doc.n_states || p.n_actions != doc.n_actions {
            return Err(Error::Dimension("declared shape disagrees with logits".into()));
        }
        Ok(p)
    }
}
