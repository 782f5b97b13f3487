//! Donsker-Varadhan mutual information estimator for `I(s; (s', a))`.

use rand::seq::SliceRandom;
use rand::Rng;

use super::optim::{LazyMomentum, Optimizer};
use super::scorer::{Scorer, ScorerInput, ScorerKind, Signature, Transition};
use crate::error::{Error, Result};

/// Score values are clipped here before exponentiation.
const SCORE_CLAMP: f64 = 50.0;

#[derive(Debug, Clone)]
pub struct MineEstimator {
    scorer: Scorer,
    optimizer: Optimizer,
    ema_decay: f64,
    ema_partition: Option<f64>,
    steps: usize,
    /// Sparse path for tabular scorers; the table can have far more entries
    /// than a batch touches.
    lazy: Option<LazyMomentum>,
    /// Reused gradient buffer.
    grad: Vec<f64>,
    touched: Vec<usize>,
    marked: Vec<bool>,
}

fn log_mean_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().map(|v| (v - max).exp()).sum::<f64>() / values.len() as f64;
    max + mean.ln()
}

impl MineEstimator {
    pub fn new(scorer: Scorer, optimizer: Optimizer, ema_decay: f64) -> Result<Self> {
        if scorer.signature() != Signature::StateNextAction {
            return Err(Error::Signature("MINE scores (s, (s', a)) inputs".into()));
        }
        let lazy = match scorer.kind() {
            ScorerKind::Tabular => optimizer.lazy(),
            ScorerKind::Mlp { .. } => None,
        };
        Ok(MineEstimator {
            scorer,
            optimizer,
            ema_decay,
            ema_partition: None,
            steps: 0,
            lazy,
            grad: Vec::new(),
            touched: Vec::new(),
            marked: Vec::new(),
        })
    }

    /// The scorer with all pending updates applied.
    pub fn scorer(&mut self) -> &Scorer {
        if let Some(lazy) = &mut self.lazy {
            lazy.flush(self.scorer.params_mut());
        }
        &self.scorer
    }

    pub fn ema_partition(&self) -> Option<f64> {
        self.ema_partition
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn input(&self, t: &Transition) -> Result<ScorerInput> {
        self.scorer.input(t)
    }

    /// `T(s, (s', a))`.
    pub fn score(&self, x: &ScorerInput) -> f64 {
        let v = match &self.lazy {
            Some(lazy) => {
                let i = self.scorer.table_index(x);
                self.scorer.params()[i] + lazy.pending(i)
            }
            None => self.scorer.value(x),
        };
        v.clamp(-SCORE_CLAMP, SCORE_CLAMP)
    }

    /// `T(x) - log Z` with `Z` the moving average of `mean e^T`; its mean
    /// over the joint is the bound. Equals `T(x)` before the first update.
    pub fn pointwise(&self, x: &ScorerInput) -> f64 {
        self.score(x) - self.ema_partition.map_or(0.0, f64::ln)
    }

    /// `mean_joint T - log mean_marginal e^T`.
    pub fn bound(&self, joint: &[ScorerInput], marginal: &[ScorerInput]) -> Result<f64> {
        if joint.is_empty() {
            return Err(Error::EmptyBatch("joint"));
        }
        if marginal.is_empty() {
            return Err(Error::EmptyBatch("marginal"));
        }
        let tj = joint.iter().map(|x| self.score(x)).sum::<f64>() / joint.len() as f64;
        let tm: Vec<f64> = marginal.iter().map(|x| self.score(x)).collect();
        Ok(tj - log_mean_exp(&tm))
    }

    /// One ascent step on the bound. The gradient of the log-partition is
    /// divided by a moving average of `mean e^T` instead of the batch value,
    /// which removes most of the minibatch bias. Returns the bound before the
    /// step.
    pub fn update(&mut self, joint: &[ScorerInput], marginal: &[ScorerInput]) -> Result<f64> {
        let bound = self.bound(joint, marginal)?;
        let exps: Vec<f64> = marginal.iter().map(|x| self.score(x).exp()).collect();
        let batch_partition = exps.iter().sum::<f64>() / exps.len() as f64;
        let ema = match self.ema_partition {
            None => batch_partition,
            Some(prev) => self.ema_decay * prev + (1.0 - self.ema_decay) * batch_partition,
        };
        self.ema_partition = Some(ema);

        if self.lazy.is_some() {
            self.sparse_step(joint, marginal, &exps, ema);
            self.steps += 1;
            return Ok(bound);
        }
        let mut grad = std::mem::take(&mut self.grad);
        grad.clear();
        grad.resize(self.scorer.n_params(), 0.0);
        let wj = 1.0 / joint.len() as f64;
        for x in joint {
            self.scorer.accumulate(x, wj, &mut grad);
        }
        let wm = 1.0 / (marginal.len() as f64 * ema);
        for (x, e) in marginal.iter().zip(&exps) {
            self.scorer.accumulate(x, -wm * e, &mut grad);
        }
        self.optimizer.ascend(self.scorer.params_mut(), &grad);
        self.grad = grad;
        self.steps += 1;
        Ok(bound)
    }
}

impl MineEstimator {
    fn sparse_step(&mut self, joint: &[ScorerInput], marginal: &[ScorerInput], exps: &[f64], ema: f64) {
        let n = self.scorer.n_params();
        if self.grad.len() != n {
            self.grad = vec![0.0; n];
            self.marked = vec![false; n];
        }
        self.touched.clear();
        let wj = 1.0 / joint.len() as f64;
        let wm = 1.0 / (marginal.len() as f64 * ema);
        let terms = joint.iter().map(|x| (x, wj)).chain(marginal.iter().zip(exps).map(|(x, e)| (x, -wm * e)));
        for (x, w) in terms {
            let i = self.scorer.table_index(x);
            self.grad[i] += w;
            if !self.marked[i] {
                self.marked[i] = true;
                self.touched.push(i);
            }
        }
        for &i in &self.touched {
            self.marked[i] = false;
        }
        let lazy = self.lazy.as_mut().expect("sparse path needs the lazy optimizer");
        lazy.ascend_sparse(self.scorer.params_mut(), &self.touched, &mut self.grad);
    }
}

/// Samples from the product of marginals by permuting `s` across the batch
/// while keeping each `(s', a)` in place.
pub fn shuffle_states<R: Rng + ?Sized>(joint: &[Transition], rng: &mut R) -> Vec<Transition> {
    let mut states: Vec<usize> = joint.iter().map(|t| t.s).collect();
    states.shuffle(rng);
    joint
        .iter()
        .zip(states)
        .map(|(t, s)| Transition { s, a: t.a, sn: t.sn })
        .collect()
}
