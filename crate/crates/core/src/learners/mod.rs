//! Imitation learners: GAIL, GAIfO, GAIfO-s, BCO and IDDM on tabular MDPs.

pub mod bco;
pub mod discriminator;
pub mod mine;
pub mod optim;
pub mod policy_grad;
pub mod record;
pub mod rollout;
pub mod scorer;
pub mod train;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::Divergence;
use crate::mdp::TabularPolicy;

pub use bco::bco_train;
pub use discriminator::Discriminator;
pub use mine::MineEstimator;
pub use optim::{Optimizer, OptimizerKind};
pub use policy_grad::PolicyObjective;
pub use record::{EvalSummary, RunRecord, RunRow};
pub use scorer::{Scorer, ScorerKind, Signature, Transition};
pub use train::train;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub enum Algorithm {
    #[serde(rename = "GAIL")]
    Gail,
    #[default]
    #[serde(rename = "GAIfO")]
    Gaifo,
    #[serde(rename = "GAIfO-s")]
    GaifoS,
    #[serde(rename = "BCO")]
    Bco,
    #[serde(rename = "IDDM")]
    Iddm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Gail,
        Algorithm::Gaifo,
        Algorithm::GaifoS,
        Algorithm::Bco,
        Algorithm::Iddm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gail => "GAIL",
            Algorithm::Gaifo => "GAIfO",
            Algorithm::GaifoS => "GAIfO-s",
            Algorithm::Bco => "BCO",
            Algorithm::Iddm => "IDDM",
        }
    }

    /// Discriminator input, or `None` for BCO which has no discriminator.
    pub fn disc_signature(self) -> Option<Signature> {
        match self {
            Algorithm::Gail => Some(Signature::StateAction),
            Algorithm::Gaifo | Algorithm::Iddm => Some(Signature::StateNext),
            Algorithm::GaifoS => Some(Signature::State),
            Algorithm::Bco => None,
        }
    }

    /// Only GAIL learns from expert actions.
    pub fn needs_actions(self) -> bool {
        self == Algorithm::Gail
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::config("algorithm", format!("unknown algorithm `{s}` (GAIL, GAIfO, GAIfO-s, BCO, IDDM)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    /// Policy entropy weight for IDDM.
    pub lambda_p: f64,
    /// MI weight for IDDM.
    pub lambda_s: f64,
    /// Policy entropy weight for GAIL, GAIfO and GAIfO-s.
    pub baseline_lambda_p: f64,
    pub lr: f64,
    pub policy_lr: Option<f64>,
    pub disc_lr: Option<f64>,
    pub mine_lr: Option<f64>,
    pub batch: usize,
    pub iterations: usize,
    /// Minimum environment steps collected per iteration (whole episodes).
    pub rollout_steps: usize,
    pub mi_pretrain_steps: usize,
    pub mi_update_steps: usize,
    pub disc_update_steps: usize,
    pub seed: u64,
    /// Divergence used for the `diag_kl_*` columns.
    pub divergence: Divergence,
    pub optimizer: OptimizerKind,
    pub momentum: f64,
    pub disc_l2: f64,
    pub mine_ema_decay: f64,
    pub scorer: ScorerKind,
    pub policy_objective: PolicyObjective,
    /// Add-alpha smoothing of the BCO inverse model counts.
    pub bco_smoothing: f64,
    /// Behaviour cloning gradient steps per BCO iteration.
    pub bco_epochs: usize,
    /// Exact diagnostics are computed every `log_interval` iterations.
    pub log_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::default(),
            lambda_p: 0.01,
            lambda_s: 0.1,
            baseline_lambda_p: 0.0,
            lr: 3e-4,
            policy_lr: None,
            disc_lr: None,
            mine_lr: None,
            batch: 512,
            iterations: 100,
            rollout_steps: 1024,
            mi_pretrain_steps: 10_000,
            mi_update_steps: 50,
            disc_update_steps: 1,
            seed: 0,
            divergence: Divergence::Kl,
            optimizer: OptimizerKind::SgdMomentum,
            momentum: 0.9,
            disc_l2: 1e-4,
            mine_ema_decay: 0.99,
            scorer: ScorerKind::Tabular,
            policy_objective: PolicyObjective::Reinforce,
            bco_smoothing: 1.0,
            bco_epochs: 50,
            log_interval: 1,
        }
    }
}

fn check_nonneg(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be finite and >= 0, got {v}")))
    }
}

fn check_pos(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be finite and > 0, got {v}")))
    }
}

fn check_count(path: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::config(path, "must be at least 1"))
    } else {
        Ok(())
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_nonneg("train.lambda_p", self.lambda_p)?;
        check_nonneg("train.lambda_s", self.lambda_s)?;
        check_nonneg("train.baseline_lambda_p", self.baseline_lambda_p)?;
        check_pos("train.lr", self.lr)?;
        for (path, v) in [
            ("train.policy_lr", self.policy_lr),
            ("train.disc_lr", self.disc_lr),
            ("train.mine_lr", self.mine_lr),
        ] {
            if let Some(v) = v {
                check_pos(path, v)?;
            }
        }
        check_count("train.batch", self.batch)?;
        check_count("train.iterations", self.iterations)?;
        check_count("train.rollout_steps", self.rollout_steps)?;
        check_count("train.disc_update_steps", self.disc_update_steps)?;
        check_count("train.log_interval", self.log_interval)?;
        check_nonneg("train.disc_l2", self.disc_l2)?;
        check_nonneg("train.bco_smoothing", self.bco_smoothing)?;
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("train.momentum", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.mine_ema_decay) {
            return Err(Error::config("train.mine_ema_decay", "must lie in [0, 1)"));
        }
        if let PolicyObjective::Ppo { clip, epochs } = self.policy_objective {
            check_pos("train.policy_objective.clip", clip)?;
            check_count("train.policy_objective.epochs", epochs)?;
        }
        if let ScorerKind::Mlp { widths } = &self.scorer {
            if widths.is_empty() || widths.contains(&0) {
                return Err(Error::config("train.scorer.widths", "need at least one positive width"));
            }
        }
        Ok(())
    }

    pub fn policy_lr(&self) -> f64 {
        self.policy_lr.unwrap_or(self.lr)
    }

    pub fn disc_lr(&self) -> f64 {
        self.disc_lr.unwrap_or(self.lr)
    }

    pub fn mine_lr(&self) -> f64 {
        self.mine_lr.unwrap_or(self.lr)
    }

    /// Entropy weight actually used by the configured algorithm.
    pub fn effective_lambda_p(&self) -> f64 {
        match self.algorithm {
            Algorithm::Iddm => self.lambda_p,
            Algorithm::Bco => 0.0,
            _ => self.baseline_lambda_p,
        }
    }

    /// MI weight actually used; non-zero only for IDDM.
    pub fn effective_lambda_s(&self) -> f64 {
        match self.algorithm {
            Algorithm::Iddm => self.lambda_s,
            _ => 0.0,
        }
    }
}

/// `-log D(x) + lambda_p * (-log pi(a|s)) + lambda_s * (T(s, (s', a)) - log Z)`.
///
/// Terms with a zero weight are skipped entirely, so with both weights zero
/// the result is bitwise the discriminator reward.
pub fn compose_reward(
    t: &Transition,
    disc: &Discriminator,
    mine: Option<&MineEstimator>,
    policy: &TabularPolicy,
    lambda_p: f64,
    lambda_s: f64,
) -> Result<f64> {
    let mut r = disc.reward(&disc.input(t)?);
    if lambda_p != 0.0 {
        let a = t.a.ok_or_else(|| Error::Signature("entropy bonus needs the action".into()))?;
        r += lambda_p * -policy.log_prob(t.s, a);
    }
    if lambda_s != 0.0 {
        let mine = mine.ok_or_else(|| Error::Precondition("lambda_s > 0 needs an MI estimator".into()))?;
        r += lambda_s * mine.pointwise(&mine.input(t)?);
    }
    Ok(r)
}

/// Independent generator number `stream` derived from `seed`.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) mod streams {
    pub const ROLLOUT: u64 = 1;
    pub const DISC: u64 = 2;
    pub const MINE: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const INIT: u64 = 5;
    pub const BCO: u64 = 6;
}
