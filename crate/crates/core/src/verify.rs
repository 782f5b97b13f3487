//! Seeded verification suite: every identity checked on a family of
//! generated instances, one aggregated report per family.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{train_expert, GridSpec, GridWorld};
use crate::instances::{
    deterministic_chain, random_mdp, random_permutation_mdp, random_policy, random_policy_for,
    redistribute_equivalent_actions,
};
use crate::mdp::{TabularMdp, TabularPolicy};
use crate::measures::Divergence;
use crate::theory::{
    check_corollary1, check_entropy_decomposition, check_js_identities, check_lemma1, check_mi_identity,
    check_theorem1, check_theorem2, TheoremReport, COROLLARY1_TOL, ENTROPY_TOL, JS_COROLLARY_TOL, JS_EPSILON_TOL,
    JS_LEMMA_TOL, MI_TOL, THEOREM1_TOL, THEOREM2_TOL,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    pub theorem1_instances: usize,
    pub corollary1_instances: usize,
    pub theorem2_instances: usize,
    pub entropy_instances: usize,
    pub mi_instances: usize,
    pub js_instances: usize,
    /// Homotopy resolution for the JS decomposition.
    pub js_steps: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 0,
            theorem1_instances: 200,
            corollary1_instances: 50,
            theorem2_instances: 20,
            entropy_instances: 100,
            mi_instances: 50,
            js_instances: 50,
            js_steps: 10,
        }
    }
}

/// Worst instance of a family plus counts.
fn aggregate(name: &str, tolerance: f64, results: Vec<Result<TheoremReport>>) -> TheoremReport {
    let instances = results.len();
    let mut failures = 0usize;
    let mut errors = 0usize;
    let mut worst: Option<TheoremReport> = None;
    for r in results {
        match r {
            Ok(rep) => {
                failures += !rep.passed as usize;
                let worse = match &worst {
                    None => true,
                    Some(w) => !(rep.residual.abs() <= w.residual.abs()),
                };
                if worse {
                    worst = Some(rep);
                }
            }
            Err(e) => {
                log::warn!("{name}: instance rejected: {e}");
                errors += 1;
            }
        }
    }
    let mut out = match worst {
        Some(w) => TheoremReport {
            name: name.to_string(),
            tolerance,
            ..w
        },
        None => TheoremReport::new(name, [], f64::NAN, tolerance),
    };
    out.terms.insert("instances".into(), instances as f64);
    out.terms.insert("failures".into(), (failures + errors) as f64);
    out.passed = instances > 0 && failures == 0 && errors == 0 && out.residual.abs() <= tolerance;
    out
}

fn random_sizes<R: Rng + ?Sized>(rng: &mut R) -> (usize, usize) {
    (rng.random_range(1..=10), rng.random_range(1..=5))
}

/// Policy pairs with matched transition occupancies: the agent moves mass
/// between equivalent action variants of the expert.
pub fn equivalent_action_pairs(seed: u64, n: usize) -> Result<Vec<(TabularMdp, TabularPolicy, TabularPolicy)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let k = 2 + i % 2;
        let spec = match i % 4 {
            0 | 1 => GridSpec::reference(k),
            _ => GridSpec::open_torus(3 + i % 3, 3 + (i / 3) % 3, k),
        };
        let world = GridWorld::new(spec)?;
        let expert = if i % 2 == 0 {
            train_expert(&world.mdp, 0.5)?
        } else {
            random_policy_for(&mut rng, &world.mdp, 1.0)
        };
        let agent = redistribute_equivalent_actions(&mut rng, &world.mdp, &expert);
        out.push((world.mdp, agent, expert));
    }
    Ok(out)
}

/// Injective instances: permutation MDPs, cyclic chains and wall-free `k = 1`
/// tori.
pub fn injective_instances(seed: u64, n: usize) -> Result<Vec<(TabularMdp, TabularPolicy, TabularPolicy)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mdp = match i % 3 {
            0 => {
                let ns = rng.random_range(2..=10);
                let na = rng.random_range(1..=ns.min(5));
                random_permutation_mdp(&mut rng, ns, na, 0.9)
            }
            1 => {
                let ns = rng.random_range(3..=10);
                let na = rng.random_range(1..=(ns - 1).min(5));
                deterministic_chain(ns, na, 0.9)
            }
            _ => GridWorld::new(GridSpec::open_torus(3 + i % 3, 3 + (i / 3) % 2, 1))?.mdp,
        };
        let pi = random_policy_for(&mut rng, &mdp, 1.0);
        let pe = random_policy_for(&mut rng, &mdp, 1.0);
        out.push((mdp, pi, pe));
    }
    Ok(out)
}

pub fn verify_theorem1(seed: u64, n: usize) -> TheoremReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let results = (0..n)
        .map(|_| {
            let (ns, na) = random_sizes(&mut rng);
            let mdp = random_mdp(&mut rng, ns, na, 0.9);
            let pi = random_policy(&mut rng, ns, na, 1.5);
            let pe = random_policy(&mut rng, ns, na, 1.5);
            check_theorem1(&mdp, &pi, &pe)
        })
        .collect();
    aggregate("theorem1.random_mdps", THEOREM1_TOL, results)
}

pub fn verify_corollary1(seed: u64, n: usize) -> Result<TheoremReport> {
    let results = injective_instances(seed, n)?
        .iter()
        .map(|(mdp, pi, pe)| check_corollary1(mdp, pi, pe))
        .collect();
    Ok(aggregate("corollary1.injective", COROLLARY1_TOL, results))
}

pub fn verify_theorem2(seed: u64, n: usize) -> Result<TheoremReport> {
    let results = equivalent_action_pairs(seed, n)?
        .iter()
        .map(|(mdp, pi, pe)| check_theorem2(mdp, pi, pe))
        .collect();
    Ok(aggregate("theorem2.equivalent_actions", THEOREM2_TOL, results))
}

pub fn verify_entropy(seed: u64, n: usize) -> TheoremReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let results = (0..n)
        .map(|_| {
            let (ns, na) = random_sizes(&mut rng);
            let mdp = random_mdp(&mut rng, ns, na, 0.9);
            let pi = random_policy(&mut rng, ns, na, 1.5);
            check_entropy_decomposition(&mdp, &pi)
        })
        .collect();
    aggregate("entropy_decomposition.random_mdps", ENTROPY_TOL, results)
}

/// Deterministic instances on which `(s', a)` determines `s`.
pub fn verify_mi(seed: u64, n: usize) -> TheoremReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let results = (0..n)
        .map(|i| {
            let mdp = if i % 2 == 0 {
                let ns = rng.random_range(1..=10);
                let na = rng.random_range(1..=ns.min(5));
                random_permutation_mdp(&mut rng, ns, na, 0.9)
            } else {
                let ns = rng.random_range(2..=10);
                deterministic_chain(ns, rng.random_range(1..ns.min(6)), 0.9)
            };
            let pi = random_policy_for(&mut rng, &mdp, 1.5);
            check_mi_identity(&mdp, &pi)
        })
        .collect();
    aggregate("mi_identity.invertible", MI_TOL, results)
}

/// Lemma on random MDPs, corollary on injective ones, and the homotopy
/// limit on both.
pub fn verify_js(seed: u64, n: usize, steps: usize) -> Result<Vec<TheoremReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lemma = Vec::with_capacity(n);
    let mut homotopy = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let (ns, na) = random_sizes(&mut rng);
        let mdp = random_mdp(&mut rng, ns, na, 0.9);
        let pi = random_policy(&mut rng, ns, na, 1.5);
        let pe = random_policy(&mut rng, ns, na, 1.5);
        lemma.push(check_lemma1(&mdp, &pi, &pe, Divergence::Js));
        homotopy.push(check_js_identities(&mdp, &pi, &pe, steps).map(|r| r.homotopy));
    }
    let mut corollary = Vec::with_capacity(n);
    for (mdp, pi, pe) in injective_instances(seed.wrapping_add(1), n)? {
        match check_js_identities(&mdp, &pi, &pe, steps) {
            Ok(r) => {
                corollary.push(r.corollary.ok_or_else(|| Error::Precondition("instance is not injective".into())));
                homotopy.push(Ok(r.homotopy));
            }
            Err(e) => corollary.push(Err(e)),
        }
    }
    Ok(vec![
        aggregate("lemma1_js.random_mdps", JS_LEMMA_TOL, lemma),
        aggregate("corollary1_js.injective", JS_COROLLARY_TOL, corollary),
        aggregate("theorem1_js_epsilon.endpoint", JS_EPSILON_TOL, homotopy),
    ])
}

/// The whole suite in a fixed order.
pub fn run_suite(config: &VerifyConfig) -> Result<Vec<TheoremReport>> {
    let s = config.seed;
    let mut out = vec![
        verify_theorem1(s, config.theorem1_instances),
        verify_corollary1(s.wrapping_add(1), config.corollary1_instances)?,
        verify_theorem2(s.wrapping_add(2), config.theorem2_instances)?,
        verify_entropy(s.wrapping_add(3), config.entropy_instances),
        verify_mi(s.wrapping_add(4), config.mi_instances),
    ];
    out.extend(verify_js(s.wrapping_add(5), config.js_instances, config.js_steps.max(1))?);
    Ok(out)
}

/// One JSON object per line.
pub fn to_jsonl(reports: &[TheoremReport]) -> Result<String> {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}
