//! Fixtures shared by the benchmarks.

use iddlab_core::experiment::{prepare, Setup};
use iddlab_core::gridworld::GridSpec;
use iddlab_core::learners::Transition;
use iddlab_core::{GridWorld, TabularPolicy};

/// Reference maze with `k` variants, its expert and 1000 demonstration pairs.
pub fn reference_setup(k: usize) -> Setup {
    prepare(&GridSpec::reference(k), 0.01, 1000, 0, true).expect("reference maze is valid")
}

/// Expert with every move's mass spread evenly over its variants.
pub fn variant_mixture(world: &GridWorld, expert: &TabularPolicy) -> TabularPolicy {
    let (ns, na) = (world.mdp.n_states(), world.mdp.n_actions());
    let k = na / 4;
    let mut logits = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            let dir_mass: f64 = (0..k).map(|v| expert.prob(s, 4 * v + a % 4)).sum();
            logits.push((dir_mass / k as f64).max(1e-300).ln());
        }
    }
    TabularPolicy::from_logits(ns, na, logits).expect("finite logits")
}

/// Demonstration records as scorer transitions, cycled to `n` entries.
pub fn demo_transitions(setup: &Setup, n: usize) -> Vec<Transition> {
    let all: Vec<Transition> = setup.demos.records().map(|r| Transition { s: r.s, a: r.a, sn: r.sn }).collect();
    all.iter().cycle().take(n).copied().collect()
}
