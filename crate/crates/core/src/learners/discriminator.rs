use super::optim::Optimizer;
use super::scorer::{Scorer, ScorerInput, Signature, Transition};
use crate::error::{Error, Result};

/// Logits are clipped to this magnitude when turned into probabilities, which
/// keeps `D` strictly inside `(0, 1)` and `-log D` finite.
pub const LOGIT_CLAMP: f64 = 30.0;

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `D = sigmoid(f)`, trained to be high on agent samples and low on expert
/// samples, so `-log D` rewards expert-like transitions.
#[derive(Debug, Clone)]
pub struct Discriminator {
    scorer: Scorer,
    optimizer: Optimizer,
    l2: f64,
    /// Reused gradient buffer.
    grad: Vec<f64>,
}

impl Discriminator {
    pub fn new(scorer: Scorer, optimizer: Optimizer, l2: f64) -> Self {
        Discriminator {
            scorer,
            optimizer,
            l2,
            grad: Vec::new(),
        }
    }

    pub fn scorer(&self) -> &Scorer {
        &self.scorer
    }

    pub fn signature(&self) -> Signature {
        self.scorer.signature()
    }

    pub fn input(&self, t: &Transition) -> Result<ScorerInput> {
        self.scorer.input(t)
    }

    fn logit(&self, x: &ScorerInput) -> f64 {
        self.scorer.value(x).clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
    }

    pub fn prob(&self, x: &ScorerInput) -> f64 {
        sigmoid(self.logit(x))
    }

    /// `-log D(x)`.
    pub fn reward(&self, x: &ScorerInput) -> f64 {
        softplus(-self.logit(x))
    }

    /// `mean_A log D + mean_E log(1 - D)`.
    pub fn objective(&self, agent: &[ScorerInput], expert: &[ScorerInput]) -> Result<f64> {
        if agent.is_empty() {
            return Err(Error::EmptyBatch("agent"));
        }
        if expert.is_empty() {
            return Err(Error::EmptyBatch("expert"));
        }
        let a: f64 = agent.iter().map(|x| -softplus(-self.logit(x))).sum::<f64>() / agent.len() as f64;
        let e: f64 = expert.iter().map(|x| -softplus(self.logit(x))).sum::<f64>() / expert.len() as f64;
        Ok(a + e)
    }

    /// One ascent step on the objective with an L2 penalty on the parameters.
    /// Returns the objective before the step.
    pub fn update(&mut self, agent: &[ScorerInput], expert: &[ScorerInput]) -> Result<f64> {
        let objective = self.objective(agent, expert)?;
        let mut grad = std::mem::take(&mut self.grad);
        grad.clear();
        grad.resize(self.scorer.n_params(), 0.0);
        let wa = 1.0 / agent.len() as f64;
        for x in agent {
            // d/df log sigmoid(f) = 1 - sigmoid(f)
            let d = sigmoid(self.scorer.value(x));
            self.scorer.accumulate(x, wa * (1.0 - d), &mut grad);
        }
        let we = 1.0 / expert.len() as f64;
        for x in expert {
            // d/df log(1 - sigmoid(f)) = -sigmoid(f)
            let d = sigmoid(self.scorer.value(x));
            self.scorer.accumulate(x, -we * d, &mut grad);
        }
        for (g, p) in grad.iter_mut().zip(self.scorer.params()) {
            *g -= self.l2 * p;
        }
        self.optimizer.ascend(self.scorer.params_mut(), &grad);
        self.grad = grad;
        Ok(objective)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::optim::OptimizerKind;
    use crate::learners::scorer::ScorerKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn disc(lr: f64) -> Discriminator {
        disc_with(lr, 0.9)
    }

    fn disc_with(lr: f64, momentum: f64) -> Discriminator {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let scorer = Scorer::new(ScorerKind::Tabular, Signature::StateNext, 4, 2, &mut rng).unwrap();
        let n = scorer.n_params();
        Discriminator::new(scorer, Optimizer::new(OptimizerKind::SgdMomentum, lr, momentum, n), 1e-4)
    }

    fn inputs(d: &Discriminator, pairs: &[(usize, usize)]) -> Vec<ScorerInput> {
        pairs.iter().map(|&(s, sn)| d.input(&Transition { s, a: None, sn }).unwrap()).collect()
    }

    #[test]
    fn symmetric_batches_sit_at_one_half() {
        let mut d = disc(0.5);
        let xs = inputs(&d, &[(0, 1), (1, 2), (2, 3)]);
        let obj = d.update(&xs, &xs).unwrap();
        assert!((obj - 2.0 * 0.5f64.ln()).abs() < 1e-15);
        assert!(d.scorer().params().iter().all(|&p| p == 0.0));
        assert!((d.prob(&xs[0]) - 0.5).abs() < 1e-15);
        assert!((d.reward(&xs[0]) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn disjoint_supports_separate_monotonically() {
        // Plain gradient ascent; momentum can overshoot and break monotonicity.
        let mut d = disc_with(0.5, 0.0);
        let agent = inputs(&d, &[(0, 1), (1, 1)]);
        let expert = inputs(&d, &[(2, 3), (3, 0)]);
        let mut last = f64::NEG_INFINITY;
        for _ in 0..200 {
            let obj = d.update(&agent, &expert).unwrap();
            assert!(obj >= last - 1e-12);
            last = obj;
        }
        assert!(agent.iter().all(|x| d.prob(x) > 0.95));
        assert!(expert.iter().all(|x| d.prob(x) < 0.05));
        assert!(agent.iter().chain(&expert).all(|x| d.prob(x) > 0.0 && d.prob(x) < 1.0));
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut d = disc(0.0);
        let agent = inputs(&d, &[(0, 1)]);
        let expert = inputs(&d, &[(2, 3)]);
        let before = d.scorer().params().to_vec();
        d.update(&agent, &expert).unwrap();
        assert_eq!(d.scorer().params(), &before[..]);
    }

    #[test]
    fn empty_batches_are_rejected() {
        let mut d = disc(0.1);
        let xs = inputs(&d, &[(0, 1)]);
        assert!(matches!(d.update(&[], &xs), Err(Error::EmptyBatch("agent"))));
        assert!(matches!(d.update(&xs, &[]), Err(Error::EmptyBatch("expert"))));
    }

    #[test]
    fn outputs_stay_inside_unit_interval_when_saturated() {
        let mut d = disc(0.1);
        let xs = inputs(&d, &[(0, 1), (1, 0)]);
        d.scorer.params_mut()[1] = 1e6;
        d.scorer.params_mut()[4] = -1e6;
        for x in &xs {
            let p = d.prob(x);
            assert!(p > 0.0 && p < 1.0);
            assert!(d.reward(x).is_finite());
        }
    }
}
