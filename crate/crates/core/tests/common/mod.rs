//! Independent oracles shared by the integration tests and the acceptance
//! target. Each helper returns the measured quantity so callers choose the
//! threshold.
#![allow(dead_code)]

use iddlab_core::instances::random_policy;
use iddlab_core::learners::mine::shuffle_states;
use iddlab_core::learners::policy_grad::{policy_gradient, returns_to_go};
use iddlab_core::learners::rollout::{Episode, Rollouts, Step};
use iddlab_core::learners::{MineEstimator, Optimizer, OptimizerKind, Scorer, ScorerKind, Signature, Transition};
use iddlab_core::measures::entropies;
use iddlab_core::{derive_occupancies, TabularMdp, TabularPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Random deterministic MDP: every `(s, a)` has one successor.
pub fn deterministic_mdp<R: Rng>(rng: &mut R, ns: usize, na: usize, gamma: f64) -> TabularMdp {
    let transition = (0..ns)
        .map(|_| {
            (0..na)
                .map(|_| {
                    let mut row = vec![0.0; ns];
                    row[rng.random_range(0..ns)] = 1.0;
                    row
                })
                .collect()
        })
        .collect();
    TabularMdp::new(gamma, simplex(rng, ns), vec![false; ns], transition, None).unwrap()
}

/// `sum_t gamma^t P(s_t = s)` by summing the power series until the tail is
/// negligible, with no linear solve.
pub fn power_series_visitation(mdp: &TabularMdp, policy: &TabularPolicy) -> Vec<f64> {
    let ns = mdp.n_states();
    let mut dist = mdp.init().to_vec();
    let mut total = vec![0.0; ns];
    let mut weight = 1.0;
    while weight > 1e-17 {
        for s in 0..ns {
            total[s] += weight * dist[s];
        }
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            for a in 0..mdp.n_actions() {
                let p = dist[s] * policy.prob(s, a);
                for (sn, &t) in mdp.next_dist(s, a).iter().enumerate() {
                    next[sn] += p * t;
                }
            }
        }
        dist = next;
        weight *= mdp.gamma();
    }
    total
}

/// Largest relative error between the analytic directional derivative and a
/// central difference, over `probes` random (parameters, input, direction)
/// triples.
pub fn scorer_fd_error(kind: &ScorerKind, probes: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let (ns, na) = (5, 3);
    let signatures = [
        Signature::StateAction,
        Signature::StateNext,
        Signature::State,
        Signature::StateNextAction,
    ];
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..probes {
        let sig = signatures[i % signatures.len()];
        let mut scorer = Scorer::new(kind.clone(), sig, ns, na, &mut rng).unwrap();
        for p in scorer.params_mut() {
            *p = rng.random_range(-1.0..1.0);
        }
        let t = Transition::new(rng.random_range(0..ns), rng.random_range(0..na), rng.random_range(0..ns));
        let x = scorer.input(&t).unwrap();
        let (_, grad) = scorer.eval(&x).unwrap();
        let dir: Vec<f64> = (0..scorer.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let analytic: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        let shifted = |sign: f64| {
            let mut s = scorer.clone();
            for (p, d) in s.params_mut().iter_mut().zip(&dir) {
                *p += sign * h * d;
            }
            s.value(&x)
        };
        let fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
        let rel = (fd - analytic).abs() / analytic.abs().max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

/// `E_{rho}[-log pi(a|s)] / (1 - gamma)` from the exact occupancies: the
/// expected undiscounted entropy return when the discount acts as a
/// per-step continuation probability.
pub fn exact_entropy_return(mdp: &TabularMdp, policy: &TabularPolicy) -> f64 {
    let occ = derive_occupancies(mdp, policy).unwrap();
    entropies(&occ, policy).unwrap().h_a_given_s / (1.0 - mdp.gamma())
}

pub struct EntropyGradientCheck {
    pub estimator: Vec<f64>,
    pub finite_difference: Vec<f64>,
    pub relative_error: f64,
}

/// Expected value of the score-function estimator for the entropy reward
/// `-log pi`, computed by enumerating every trajectory up to `horizon` steps
/// of a deterministic MDP where the episode stops after each step with
/// probability `1 - gamma`. Compared with central differences of
/// [`exact_entropy_return`].
pub fn entropy_gradient_check(seed: u64, horizon: usize) -> EntropyGradientCheck {
    let mut rng = rng(seed);
    let (ns, na, gamma) = (3, 2, 0.4);
    let mdp = deterministic_mdp(&mut rng, ns, na, gamma);
    let policy = random_policy(&mut rng, ns, na, 1.0);

    let mut expected = vec![0.0; ns * na];
    let mut prefix: Vec<Step> = Vec::with_capacity(horizon);
    for s0 in 0..ns {
        let w0 = mdp.init()[s0];
        if w0 > 0.0 {
            enumerate(&mdp, &policy, horizon, s0, w0, &mut prefix, &mut expected);
        }
    }

    let h = 1e-6;
    let mut fd = vec![0.0; ns * na];
    for (i, slot) in fd.iter_mut().enumerate() {
        let value = |sign: f64| {
            let mut logits = policy.logits().to_vec();
            logits[i] += sign * h;
            let p = TabularPolicy::from_logits(ns, na, logits).unwrap();
            exact_entropy_return(&mdp, &p)
        };
        *slot = (value(1.0) - value(-1.0)) / (2.0 * h);
    }
    let err: f64 = expected.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
    EntropyGradientCheck {
        estimator: expected,
        finite_difference: fd,
        relative_error: err / norm,
    }
}

/// Depth-first walk over action sequences. At every prefix the episode ends
/// with probability `1 - gamma` (or with the remaining mass at the horizon),
/// and the estimator of that single episode is added with its weight.
fn enumerate(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    horizon: usize,
    s: usize,
    weight: f64,
    prefix: &mut Vec<Step>,
    acc: &mut [f64],
) {
    for a in 0..mdp.n_actions() {
        let sn = mdp.deterministic_next(s, a).unwrap();
        let w = weight * policy.prob(s, a);
        prefix.push(Step { s, a, sn, env_reward: 0.0 });
        let last = prefix.len() == horizon;
        let stop = if last { w } else { w * (1.0 - mdp.gamma()) };
        add_episode(policy, prefix, stop, acc);
        if !last {
            enumerate(mdp, policy, horizon, sn, w * mdp.gamma(), prefix, acc);
        }
        prefix.pop();
    }
}

fn add_episode(policy: &TabularPolicy, steps: &[Step], weight: f64, acc: &mut [f64]) {
    let rollouts = Rollouts {
        episodes: vec![Episode { steps: steps.to_vec(), terminated: false }],
    };
    let rewards = vec![steps.iter().map(|st| -policy.log_prob(st.s, st.a)).collect::<Vec<_>>()];
    let g = returns_to_go(&rollouts, &rewards, &[0.0], 1.0).unwrap();
    // The library averages over steps; scale back to the per-episode sum.
    let grad = policy_gradient(policy, &rollouts, &g).unwrap();
    let scale = weight * steps.len() as f64;
    for (a, g) in acc.iter_mut().zip(grad) {
        *a += scale * g;
    }
}

/// Exact `I(s; (s', a))` of a joint table indexed `[s][sn][a]`.
pub fn exact_mi(joint: &[Vec<Vec<f64>>]) -> f64 {
    let ns = joint.len();
    let nsn = joint[0].len();
    let na = joint[0][0].len();
    let ps: Vec<f64> = joint.iter().map(|m| m.iter().flatten().sum()).collect();
    let mut pna = vec![vec![0.0; na]; nsn];
    for m in joint {
        for (sn, row) in m.iter().enumerate() {
            for (a, &p) in row.iter().enumerate() {
                pna[sn][a] += p;
            }
        }
    }
    let mut mi = 0.0;
    for s in 0..ns {
        for sn in 0..nsn {
            for a in 0..na {
                let p = joint[s][sn][a];
                if p > 0.0 {
                    mi += p * (p / (ps[s] * pna[sn][a])).ln();
                }
            }
        }
    }
    mi
}

fn sample_joint<R: Rng>(rng: &mut R, cdf: &[(f64, Transition)], n: usize) -> Vec<Transition> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            cdf.iter().find(|(c, _)| u < *c).map_or(cdf[cdf.len() - 1].1, |(_, t)| *t)
        })
        .collect()
}

/// Trains a tabular MINE estimator on minibatches from `joint` for
/// `updates` steps and returns the bound on a large fresh sample.
pub fn mine_estimate(joint: &[Vec<Vec<f64>>], updates: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let ns = joint.len().max(joint[0].len());
    let na = joint[0][0].len();
    let mut cdf = Vec::new();
    let mut c = 0.0;
    for (s, m) in joint.iter().enumerate() {
        for (sn, row) in m.iter().enumerate() {
            for (a, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    c += p;
                    cdf.push((c, Transition::new(s, a, sn)));
                }
            }
        }
    }
    let scorer = Scorer::new(ScorerKind::Tabular, Signature::StateNextAction, ns, na, &mut rng).unwrap();
    let opt = Optimizer::new(OptimizerKind::SgdMomentum, 0.1, 0.9, scorer.n_params());
    let mut est = MineEstimator::new(scorer, opt, 0.99).unwrap();
    let inputs = |est: &MineEstimator, ts: &[Transition]| -> Vec<_> { ts.iter().map(|t| est.input(t).unwrap()).collect() };
    for _ in 0..updates {
        let batch = sample_joint(&mut rng, &cdf, 256);
        let marg = shuffle_states(&batch, &mut rng);
        let (xj, xm) = (inputs(&est, &batch), inputs(&est, &marg));
        est.update(&xj, &xm).unwrap();
    }
    let eval = sample_joint(&mut rng, &cdf, 50_000);
    let marg = shuffle_states(&eval, &mut rng);
    est.bound(&inputs(&est, &eval), &inputs(&est, &marg)).unwrap()
}

/// `s` uniform on two values and `s'` equal to it, one action: MI is ln 2.
pub fn correlated_bits() -> Vec<Vec<Vec<f64>>> {
    vec![vec![vec![0.5], vec![0.0]], vec![vec![0.0], vec![0.5]]]
}

/// `s` and `s'` independent fair bits.
pub fn independent_bits() -> Vec<Vec<Vec<f64>>> {
    vec![vec![vec![0.25], vec![0.25]], vec![vec![0.25], vec![0.25]]]
}

pub fn random_joint<R: Rng>(rng: &mut R, ns: usize, na: usize) -> Vec<Vec<Vec<f64>>> {
    let flat = simplex(rng, ns * ns * na);
    (0..ns)
        .map(|s| (0..ns).map(|sn| (0..na).map(|a| flat[(s * ns + sn) * na + a]).collect()).collect())
        .collect()
}
