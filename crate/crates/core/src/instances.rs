//! Random instance generators for property tests and the verification suite.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::mdp::{TabularMdp, TabularPolicy};

fn random_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    // Exponential draws give a uniform point on the simplex; the floor keeps
    // every entry strictly positive.
    let draws: Vec<f64> = (0..n)
        .map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-3)
        .collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}

/// Dense MDP with strictly positive transition rows and initial distribution.
pub fn random_mdp<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize, gamma: f64) -> TabularMdp {
    let transition = (0..n_states)
        .map(|_| (0..n_actions).map(|_| random_simplex(rng, n_states)).collect())
        .collect();
    let reward = (0..n_states)
        .map(|_| (0..n_actions).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    TabularMdp::new(
        gamma,
        random_simplex(rng, n_states),
        vec![false; n_states],
        transition,
        Some(reward),
    )
    .expect("random simplex rows are valid")
}

/// Softmax policy with logits drawn from `N(0, scale^2)`.
pub fn random_policy<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize, scale: f64) -> TabularPolicy {
    let logits = (0..n_states * n_actions)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect();
    TabularPolicy::from_logits(n_states, n_actions, logits).expect("finite logits")
}

/// Same as [`random_policy`] but with uniform rows on the MDP's terminal
/// states, where the choice of action is meaningless.
pub fn random_policy_for<R: Rng + ?Sized>(rng: &mut R, mdp: &TabularMdp, scale: f64) -> TabularPolicy {
    let p = random_policy(rng, mdp.n_states(), mdp.n_actions(), scale);
    with_uniform_terminal_rows(&p, mdp)
}

pub fn with_uniform_terminal_rows(policy: &TabularPolicy, mdp: &TabularMdp) -> TabularPolicy {
    let na = policy.n_actions();
    let mut logits = policy.logits().to_vec();
    for s in (0..mdp.n_states()).filter(|&s| mdp.is_terminal(s)) {
        logits[s * na..(s + 1) * na].fill(0.0);
    }
    TabularPolicy::from_logits(policy.n_states(), na, logits).expect("finite logits")
}

/// Deterministic MDP where every action is a permutation of the states and no
/// two actions share a successor from any state. Both `(s, a) -> s'` and
/// `(s', a) -> s` are functions, and `(s, s') -> a` is injective.
///
/// Requires `n_actions <= n_states`.
pub fn random_permutation_mdp<R: Rng + ?Sized>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
    gamma: f64,
) -> TabularMdp {
    assert!(n_actions <= n_states, "need at least as many states as actions");
    let mut relabel: Vec<usize> = (0..n_states).collect();
    relabel.shuffle(rng);
    let mut order: Vec<usize> = (0..n_states).collect();
    order.shuffle(rng);
    let mut offsets: Vec<usize> = (0..n_states).collect();
    offsets.shuffle(rng);
    offsets.truncate(n_actions);

    // sigma_a(s) = relabel[(order[s] + c_a) mod n], a Latin-square construction.
    let transition: Vec<Vec<Vec<f64>>> = (0..n_states)
        .map(|s| {
            offsets
                .iter()
                .map(|&c| {
                    let mut row = vec![0.0; n_states];
                    row[relabel[(order[s] + c) % n_states]] = 1.0;
                    row
                })
                .collect()
        })
        .collect();
    let mdp = TabularMdp::new(
        gamma,
        random_simplex(rng, n_states),
        vec![false; n_states],
        transition,
        None,
    )
    .expect("permutation rows are valid");
    debug_assert!(actions_distinct_per_state(&mdp));
    mdp
}

/// Rejection scan: no two actions lead to the same successor from any state.
pub fn actions_distinct_per_state(mdp: &TabularMdp) -> bool {
    (0..mdp.n_states()).all(|s| {
        let mut seen = vec![false; mdp.n_states()];
        (0..mdp.n_actions()).all(|a| match mdp.deterministic_next(s, a) {
            Some(n) if !seen[n] => {
                seen[n] = true;
                true
            }
            _ => false,
        })
    })
}

/// Deterministic chain `0 -> 1 -> ... -> n-1 -> 0` where action `a` jumps
/// `a + 1` positions forward.
pub fn deterministic_chain(n_states: usize, n_actions: usize, gamma: f64) -> TabularMdp {
    assert!(n_actions < n_states);
    let transition = (0..n_states)
        .map(|s| {
            (0..n_actions)
                .map(|a| {
                    let mut row = vec![0.0; n_states];
                    row[(s + a + 1) % n_states] = 1.0;
                    row
                })
                .collect()
        })
        .collect();
    let mut init = vec![0.0; n_states];
    init[0] = 1.0;
    TabularMdp::new(gamma, init, vec![false; n_states], transition, None).expect("valid chain")
}

/// Random stochastic MDP whose every row has at least two successors.
pub fn random_stochastic_mdp<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize, gamma: f64) -> TabularMdp {
    assert!(n_states >= 2);
    random_mdp(rng, n_states, n_actions, gamma)
}

/// Moves probability mass between actions that have identical successor
/// distributions, keeping each class's total. The result induces the same
/// state and transition occupancies as `policy` but a different
/// state-action occupancy. Terminal rows are left as they are.
pub fn redistribute_equivalent_actions<R: Rng + ?Sized>(
    rng: &mut R,
    mdp: &TabularMdp,
    policy: &TabularPolicy,
) -> TabularPolicy {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut logits = policy.logits().to_vec();
    for s in (0..ns).filter(|&s| !mdp.is_terminal(s)) {
        let mut assigned = vec![false; na];
        for a in 0..na {
            if assigned[a] {
                continue;
            }
            let class: Vec<usize> = (a..na).filter(|&b| mdp.next_dist(s, b) == mdp.next_dist(s, a)).collect();
            let mass: f64 = class.iter().map(|&b| policy.prob(s, b)).sum();
            let w = random_simplex(rng, class.len());
            for (&b, wb) in class.iter().zip(w) {
                assigned[b] = true;
                logits[s * na + b] = (mass * wb).ln();
            }
        }
    }
    TabularPolicy::from_logits(ns, na, logits).expect("positive masses give finite logits")
}
