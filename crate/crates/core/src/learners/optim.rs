use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    SgdMomentum,
    Adam,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// First-order optimizer that produces ascent steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    momentum: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, momentum: f64, n_params: usize) -> Self {
        Optimizer {
            kind,
            lr,
            momentum,
            m: vec![0.0; n_params],
            v: if kind == OptimizerKind::Adam { vec![0.0; n_params] } else { Vec::new() },
            t: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Equivalent lazy form for sparse gradients, available for fresh
    /// momentum SGD only.
    pub fn lazy(&self) -> Option<LazyMomentum> {
        let fresh = self.m.iter().all(|&m| m == 0.0);
        (self.kind == OptimizerKind::SgdMomentum && fresh && self.momentum < 1.0).then(|| LazyMomentum {
            lr: self.lr,
            beta: self.momentum,
            m: vec![0.0; self.m.len()],
            last: vec![0; self.m.len()],
            t: 0,
        })
    }

    /// Step to add to the parameters to move along `grad`.
    pub fn step(&mut self, grad: &[f64]) -> Vec<f64> {
        let mut step = vec![0.0; grad.len()];
        self.ascend(&mut step, grad);
        step
    }

    /// Moves `params` along `grad` in place.
    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(grad.len(), self.m.len(), "gradient size changed");
        assert_eq!(params.len(), self.m.len(), "parameter size changed");
        match self.kind {
            OptimizerKind::SgdMomentum => {
                for ((p, m), g) in params.iter_mut().zip(self.m.iter_mut()).zip(grad) {
                    *m = self.momentum * *m + g;
                    *p += self.lr * *m;
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(self.t);
                let c2 = 1.0 - ADAM_BETA2.powi(self.t);
                for (((p, m), v), g) in params.iter_mut().zip(self.m.iter_mut()).zip(self.v.iter_mut()).zip(grad) {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    *p += self.lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// Momentum SGD that only touches entries with a nonzero gradient. An
/// entry left alone for `k` steps owes `lr * m * (b + b^2 + .. + b^k)` to its
/// parameter and `b^k` to its velocity; both are settled when it is next read
/// or updated, so the trajectory matches the dense update up to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct LazyMomentum {
    lr: f64,
    beta: f64,
    m: Vec<f64>,
    last: Vec<u64>,
    t: u64,
}

impl LazyMomentum {
    fn geometric(&self, k: u64) -> f64 {
        if k == 0 || self.beta == 0.0 {
            return 0.0;
        }
        let bk = self.beta.powi(k.min(i32::MAX as u64) as i32);
        self.beta * (1.0 - bk) / (1.0 - self.beta)
    }

    /// Parameter movement owed to entry `i` since its last update.
    pub fn pending(&self, i: usize) -> f64 {
        self.lr * self.m[i] * self.geometric(self.t - self.last[i])
    }

    fn settle(&mut self, params: &mut [f64], i: usize, upto: u64) {
        let k = upto - self.last[i];
        if k > 0 {
            params[i] += self.lr * self.m[i] * self.geometric(k);
            self.m[i] *= self.beta.powi(k.min(i32::MAX as u64) as i32);
            self.last[i] = upto;
        }
    }

    /// One step. `touched` lists the distinct entries with a nonzero
    /// gradient; their entries in `grad` are reset to zero.
    pub fn ascend_sparse(&mut self, params: &mut [f64], touched: &[usize], grad: &mut [f64]) {
        assert_eq!(params.len(), self.m.len(), "parameter size changed");
        self.t += 1;
        for &i in touched {
            self.settle(params, i, self.t - 1);
            self.m[i] = self.beta * self.m[i] + grad[i];
            params[i] += self.lr * self.m[i];
            self.last[i] = self.t;
            grad[i] = 0.0;
        }
    }

    /// Settles every entry.
    pub fn flush(&mut self, params: &mut [f64]) {
        for i in 0..params.len() {
            self.settle(params, i, self.t);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        for kind in [OptimizerKind::SgdMomentum, OptimizerKind::Adam] {
            let mut opt = Optimizer::new(kind, 0.0, 0.9, 3);
            let mut p = [1.0, -2.0, 0.5];
            opt.ascend(&mut p, &[1.0, 2.0, 3.0]);
            assert_eq!(p, [1.0, -2.0, 0.5]);
        }
    }

    #[test]
    fn momentum_accumulates() {
        let mut opt = Optimizer::new(OptimizerKind::SgdMomentum, 0.1, 0.9, 1);
        assert_eq!(opt.step(&[1.0]), vec![0.1]);
        assert!((opt.step(&[1.0])[0] - 0.19).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_has_lr_magnitude() {
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.01, 0.0, 2);
        let s = opt.step(&[3.0, -0.5]);
        assert!((s[0] - 0.01).abs() < 1e-8);
        assert!((s[1] + 0.01).abs() < 1e-8);
    }

    #[test]
    fn lazy_momentum_tracks_the_dense_update() {
        let n = 6;
        let mut dense = Optimizer::new(OptimizerKind::SgdMomentum, 0.3, 0.9, n);
        let mut lazy = dense.lazy().unwrap();
        let mut pd = vec![0.5; n];
        let mut pl = pd.clone();
        let mut g = vec![0.0; n];
        for t in 0..200usize {
            let touched: Vec<usize> = vec![t % n, (t * 7 + 1) % n].into_iter().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
            let mut full = vec![0.0; n];
            for &i in &touched {
                let v = ((t * 31 + i * 17) % 13) as f64 / 13.0 - 0.5;
                full[i] = v;
                g[i] = v;
            }
            dense.ascend(&mut pd, &full);
            lazy.ascend_sparse(&mut pl, &touched, &mut g);
            for i in 0..n {
                assert!((pl[i] + lazy.pending(i) - pd[i]).abs() < 1e-10);
            }
        }
        lazy.flush(&mut pl);
        for i in 0..n {
            assert!((pl[i] - pd[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn adam_has_no_lazy_form() {
        assert!(Optimizer::new(OptimizerKind::Adam, 0.1, 0.9, 2).lazy().is_none());
    }
}
