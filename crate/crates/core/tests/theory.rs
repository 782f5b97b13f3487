mod common;

use iddlab_core::instances::{random_mdp, random_permutation_mdp, random_policy};
use iddlab_core::theory::{check_entropy_decomposition, check_lemma1, check_theorem1, check_corollary1};
use iddlab_core::{Divergence, PolicyPair, TabularMdp, TabularPolicy};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Disagreement straight from the definitions: weight every `(s, s')` by the
/// agent's transition occupancy and sum the KL between the Bayes posteriors
/// over actions.
fn direct_idd(mdp: &TabularMdp, pi: &TabularPolicy, pe: &TabularPolicy) -> f64 {
    let visits = common::power_series_visitation(mdp, pi);
    let scale = 1.0 - mdp.gamma();
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut total = 0.0;
    for s in 0..ns {
        for sn in 0..ns {
            let joint_pi: Vec<f64> = (0..na).map(|a| pi.prob(s, a) * mdp.prob(s, a, sn)).collect();
            let joint_pe: Vec<f64> = (0..na).map(|a| pe.prob(s, a) * mdp.prob(s, a, sn)).collect();
            let (zp, ze): (f64, f64) = (joint_pi.iter().sum(), joint_pe.iter().sum());
            if zp == 0.0 {
                continue;
            }
            let weight = scale * visits[s] * zp;
            let kl: f64 = joint_pi
                .iter()
                .zip(&joint_pe)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, q)| (p / zp) * ((p / zp) / (q / ze)).ln())
                .sum();
            total += weight * kl;
        }
    }
    total
}

fn instance(seed: u64, ns: usize, na: usize) -> (TabularMdp, TabularPolicy, TabularPolicy) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mdp = random_mdp(&mut rng, ns, na, 0.9);
    let pi = random_policy(&mut rng, ns, na, 1.5);
    let pe = random_policy(&mut rng, ns, na, 1.5);
    (mdp, pi, pe)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gap_identity_holds(seed in any::<u64>(), ns in 1usize..=10, na in 1usize..=5) {
        let (mdp, pi, pe) = instance(seed, ns, na);
        let rep = check_theorem1(&mdp, &pi, &pe).unwrap();
        prop_assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn disagreement_matches_direct_formula(seed in any::<u64>(), ns in 1usize..=8, na in 1usize..=4) {
        let (mdp, pi, pe) = instance(seed, ns, na);
        let pair = PolicyPair::evaluate(&mdp, &pi, &pe).unwrap();
        let lib = pair.idd().unwrap();
        let direct = direct_idd(&mdp, &pi, &pe);
        prop_assert!((lib - direct).abs() <= 1e-10 * (1.0 + direct.abs()), "{lib} vs {direct}");
        prop_assert!(lib >= -1e-12);
    }

    #[test]
    fn divergence_gap_is_nonnegative(seed in any::<u64>(), ns in 1usize..=10, na in 1usize..=5) {
        let (mdp, pi, pe) = instance(seed, ns, na);
        let pair = PolicyPair::evaluate(&mdp, &pi, &pe).unwrap();
        for kind in [Divergence::Kl, Divergence::Js] {
            let sa = pair.div_sa(kind).unwrap();
            let ss = pair.div_ss(kind).unwrap();
            prop_assert!(sa >= ss - 1e-12, "{kind:?}: {sa} < {ss}");
        }
    }

    #[test]
    fn lemma_and_entropy_decomposition_hold(seed in any::<u64>(), ns in 1usize..=10, na in 1usize..=5) {
        let (mdp, pi, pe) = instance(seed, ns, na);
        for kind in [Divergence::Kl, Divergence::Js] {
            let rep = check_lemma1(&mdp, &pi, &pe, kind).unwrap();
            prop_assert!(rep.passed, "{rep:?}");
        }
        let rep = check_entropy_decomposition(&mdp, &pi).unwrap();
        prop_assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn injective_dynamics_close_the_gap(seed in any::<u64>(), ns in 1usize..=10, na_raw in 1usize..=5) {
        let na = na_raw.min(ns);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_permutation_mdp(&mut rng, ns, na, 0.9);
        let pi = random_policy(&mut rng, ns, na, 1.5);
        let pe = random_policy(&mut rng, ns, na, 1.5);
        let rep = check_corollary1(&mdp, &pi, &pe).unwrap();
        prop_assert!(rep.passed, "{rep:?}");
        prop_assert!(direct_idd(&mdp, &pi, &pe).abs() <= 1e-12);
    }
}
