//! Adversarial training loop shared by GAIL, GAIfO, GAIfO-s and IDDM.

use log::debug;
use rand::Rng;

use super::discriminator::Discriminator;
use super::mine::{shuffle_states, MineEstimator};
use super::optim::Optimizer;
use super::policy_grad::{advantages, policy_update};
use super::record::{RunRecord, RunRow};
use super::rollout::{collect_rollouts, Rollouts};
use super::scorer::{Scorer, ScorerInput, Signature, Transition};
use super::{compose_reward, stream_rng, streams, Algorithm, TrainConfig};
use crate::error::{Error, Result};
use crate::gridworld::Demonstration;
use crate::mdp::{TabularMdp, TabularPolicy};
use crate::measures::entropies;
use crate::occupancy::derive_occupancies;
use crate::theory::PolicyPair;

/// Demos must carry actions exactly when the algorithm reads them, and must
/// describe the same state and action spaces.
pub fn check_demos(mdp: &TabularMdp, demos: &Demonstration, algorithm: Algorithm) -> Result<()> {
    if demos.meta.includes_actions != algorithm.needs_actions() {
        let what = if algorithm.needs_actions() { "state-action" } else { "state-only" };
        return Err(Error::DemoMismatch(format!("{algorithm} needs {what} demonstrations")));
    }
    if demos.meta.n_states != mdp.n_states() || demos.meta.n_actions != mdp.n_actions() {
        return Err(Error::DemoMismatch(format!(
            "demos are for {}x{} but the environment is {}x{}",
            demos.meta.n_states,
            demos.meta.n_actions,
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    if demos.records().next().is_none() {
        return Err(Error::EmptyBatch("expert demonstrations"));
    }
    Ok(())
}

/// Transition recorded once per episode that ends in a terminal state, so
/// the discriminator can score what happens after termination.
pub fn absorbing(terminal: usize) -> Transition {
    Transition::new(terminal, 0, terminal)
}

pub(crate) fn expert_transitions(mdp: &TabularMdp, demos: &Demonstration) -> Vec<Transition> {
    let mut out = Vec::new();
    for ep in &demos.episodes {
        out.extend(ep.iter().map(|r| Transition { s: r.s, a: r.a, sn: r.sn }));
        if let Some(last) = ep.last() {
            if mdp.is_terminal(last.sn) {
                out.push(absorbing(last.sn));
            }
        }
    }
    out
}

pub(crate) fn agent_transitions(rollouts: &Rollouts) -> Vec<Transition> {
    let mut out = Vec::with_capacity(rollouts.n_steps() + rollouts.episodes.len());
    for ep in &rollouts.episodes {
        out.extend(ep.steps.iter().map(|st| Transition::new(st.s, st.a, st.sn)));
        if ep.terminated {
            if let Some(last) = ep.steps.last() {
                out.push(absorbing(last.sn));
            }
        }
    }
    out
}

fn sample_batch<T: Copy, R: Rng + ?Sized>(pool: &[T], n: usize, rng: &mut R) -> Vec<T> {
    (0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect()
}

fn mine_step<R: Rng + ?Sized>(mine: &mut MineEstimator, pool: &[Transition], batch: usize, rng: &mut R) -> Result<f64> {
    let joint = sample_batch(pool, batch, rng);
    let marginal = shuffle_states(&joint, rng);
    let xj = joint.iter().map(|t| mine.input(t)).collect::<Result<Vec<_>>>()?;
    let xm = marginal.iter().map(|t| mine.input(t)).collect::<Result<Vec<_>>>()?;
    mine.update(&xj, &xm)
}

/// Exact diagnostics of `policy` against `expert`: `(H(a|s), div_ss, div_sa, IDD)`.
pub(crate) fn diagnostics(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    expert: Option<&TabularPolicy>,
    config: &TrainConfig,
) -> (f64, f64, f64, f64) {
    let nan = f64::NAN;
    let entropy = derive_occupancies(mdp, policy)
        .and_then(|occ| entropies(&occ, policy))
        .map(|e| e.h_a_given_s)
        .unwrap_or(nan);
    let Some(expert) = expert else {
        return (entropy, nan, nan, nan);
    };
    match PolicyPair::evaluate(mdp, policy, expert) {
        Ok(pair) => (
            entropy,
            pair.div_ss(config.divergence).unwrap_or(nan),
            pair.div_sa(config.divergence).unwrap_or(nan),
            pair.idd().unwrap_or(nan),
        ),
        Err(_) => (entropy, nan, nan, nan),
    }
}

/// Runs the configured adversarial learner from a uniform policy. `expert`
/// is used only for the logged diagnostics.
pub fn train(
    mdp: &TabularMdp,
    max_steps: usize,
    demos: &Demonstration,
    expert: Option<&TabularPolicy>,
    config: &TrainConfig,
) -> Result<(TabularPolicy, RunRecord)> {
    config.validate()?;
    check_demos(mdp, demos, config.algorithm)?;
    if let Some(e) = expert {
        e.check_matches(mdp)?;
    }
    let Some(signature) = config.algorithm.disc_signature() else {
        return super::bco::bco_train(mdp, max_steps, demos, expert, config);
    };
    if max_steps == 0 {
        return Err(Error::Precondition("max_steps must be at least 1".into()));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let lambda_p = config.effective_lambda_p();
    let lambda_s = config.effective_lambda_s();

    let mut rollout_rng = stream_rng(config.seed, streams::ROLLOUT);
    let mut disc_rng = stream_rng(config.seed, streams::DISC);
    let mut init_rng = stream_rng(config.seed, streams::INIT);

    let disc_scorer = Scorer::new(config.scorer.clone(), signature, ns, na, &mut init_rng)?;
    let disc_opt = Optimizer::new(config.optimizer, config.disc_lr(), config.momentum, disc_scorer.n_params());
    let mut disc = Discriminator::new(disc_scorer, disc_opt, config.disc_l2);

    let mut policy = TabularPolicy::uniform(ns, na);
    let mut policy_opt = Optimizer::new(config.optimizer, config.policy_lr(), config.momentum, ns * na);

    let expert_x: Vec<ScorerInput> = expert_transitions(mdp, demos)
        .iter()
        .map(|t| disc.input(t))
        .collect::<Result<_>>()?;

    // With lambda_s = 0 the estimator is never built, so IDDM reduces to
    // GAIfO bitwise, logs included.
    let mut mine_state = None;
    if lambda_s > 0.0 {
        let mut mine_rng = stream_rng(config.seed, streams::MINE);
        let scorer = Scorer::new(config.scorer.clone(), Signature::StateNextAction, ns, na, &mut init_rng)?;
        let opt = Optimizer::new(config.optimizer, config.mine_lr(), config.momentum, scorer.n_params());
        let mut mine = MineEstimator::new(scorer, opt, config.mine_ema_decay)?;
        let warmup = collect_rollouts(mdp, &policy, max_steps, config.rollout_steps, &mut mine_rng);
        let pool = agent_transitions(&warmup);
        if pool.is_empty() {
            return Err(Error::EmptyBatch("rollouts"));
        }
        for _ in 0..config.mi_pretrain_steps {
            mine_step(&mut mine, &pool, config.batch, &mut mine_rng)?;
        }
        mine_state = Some((mine, mine_rng));
    }

    let gamma = mdp.gamma();
    let mut record = RunRecord::default();
    for iter in 0..config.iterations {
        let rollouts = collect_rollouts(mdp, &policy, max_steps, config.rollout_steps, &mut rollout_rng);
        if rollouts.n_steps() == 0 {
            return Err(Error::EmptyBatch("rollouts"));
        }

        let mut mi_estimate = f64::NAN;
        if let Some((mine, mine_rng)) = mine_state.as_mut() {
            let pool = agent_transitions(&rollouts);
            for _ in 0..config.mi_update_steps {
                mi_estimate = mine_step(mine, &pool, config.batch, mine_rng)?;
            }
        }

        let agent_x: Vec<ScorerInput> = agent_transitions(&rollouts)
            .iter()
            .map(|t| disc.input(t))
            .collect::<Result<_>>()?;
        let mut objective = f64::NAN;
        for _ in 0..config.disc_update_steps {
            let a = sample_batch(&agent_x, config.batch, &mut disc_rng);
            let e = sample_batch(&expert_x, config.batch, &mut disc_rng);
            objective = disc.update(&a, &e)?;
        }

        let mine_ref = mine_state.as_ref().map(|(m, _)| m);
        let mut rewards = Vec::with_capacity(rollouts.episodes.len());
        let mut bootstrap = Vec::with_capacity(rollouts.episodes.len());
        for ep in &rollouts.episodes {
            let r = ep
                .steps
                .iter()
                .map(|st| compose_reward(&Transition::new(st.s, st.a, st.sn), &disc, mine_ref, &policy, lambda_p, lambda_s))
                .collect::<Result<Vec<_>>>()?;
            rewards.push(r);
            // After termination the agent sits in the absorbing state forever.
            let boot = match (ep.terminated, ep.steps.last()) {
                (true, Some(last)) => {
                    compose_reward(&absorbing(last.sn), &disc, mine_ref, &policy, lambda_p, lambda_s)? / (1.0 - gamma)
                }
                _ => 0.0,
            };
            bootstrap.push(boot);
        }
        let adv = advantages(&rollouts, &rewards, &bootstrap, gamma, ns)?;
        policy_update(&mut policy, &mut policy_opt, &rollouts, &adv, config.policy_objective)?;

        let (policy_entropy, diag_kl_ss, diag_kl_sa, diag_idd) = if iter % config.log_interval == 0 {
            diagnostics(mdp, &policy, expert, config)
        } else {
            (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
        };
        let row = RunRow {
            iter,
            mean_return: rollouts.mean_return(),
            disc_loss: -objective,
            mi_estimate,
            policy_entropy,
            diag_kl_ss,
            diag_kl_sa,
            diag_idd,
        };
        debug!(
            "{} iter {iter}: return {:.3} disc {:.4} mi {:.4} kl_ss {:.4}",
            config.algorithm, row.mean_return, row.disc_loss, row.mi_estimate, row.diag_kl_ss
        );
        record.rows.push(row);
    }
    Ok((policy, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{train_expert, GridSpec, GridWorld};

    fn setup(k: usize, actions: bool) -> (GridWorld, TabularPolicy, Demonstration) {
        let world = GridWorld::new(GridSpec::open_torus(3, 3, k)).unwrap();
        let expert = train_expert(&world.mdp, 0.01).unwrap();
        let demos = world.collect_demos(&expert, 200, actions, 3).unwrap();
        (world, expert, demos)
    }

    fn quick(algorithm: Algorithm) -> TrainConfig {
        TrainConfig {
            algorithm,
            iterations: 5,
            rollout_steps: 64,
            batch: 32,
            mi_pretrain_steps: 20,
            mi_update_steps: 2,
            lr: 0.05,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn action_presence_must_match_algorithm() {
        let (world, expert, demos) = setup(1, false);
        let err = train(&world.mdp, 50, &demos, Some(&expert), &quick(Algorithm::Gail));
        assert!(matches!(err, Err(Error::DemoMismatch(_))));
        let (_, _, with_actions) = setup(1, true);
        let err = train(&world.mdp, 50, &with_actions, Some(&expert), &quick(Algorithm::Gaifo));
        assert!(matches!(err, Err(Error::DemoMismatch(_))));
    }

    #[test]
    fn one_row_per_iteration_and_online_identity() {
        let (world, expert, demos) = setup(2, false);
        let (_, rec) = train(&world.mdp, 50, &demos, Some(&expert), &quick(Algorithm::Iddm)).unwrap();
        assert_eq!(rec.rows.len(), 5);
        for r in &rec.rows {
            assert!((r.diag_idd - (r.diag_kl_sa - r.diag_kl_ss)).abs() <= 1e-8);
            assert!(r.mi_estimate.is_finite());
        }
    }

    #[test]
    fn iddm_without_bonuses_is_gaifo() {
        let (world, expert, demos) = setup(2, false);
        let g = train(&world.mdp, 50, &demos, Some(&expert), &quick(Algorithm::Gaifo)).unwrap();
        let cfg = TrainConfig {
            lambda_p: 0.0,
            lambda_s: 0.0,
            ..quick(Algorithm::Iddm)
        };
        let i = train(&world.mdp, 50, &demos, Some(&expert), &cfg).unwrap();
        assert_eq!(g.0, i.0);
        assert_eq!(g.1.to_csv(), i.1.to_csv());
    }

    #[test]
    fn absorbing_records_follow_terminated_episodes() {
        let (world, _, demos) = setup(1, false);
        let sink = world.spec.sink();
        let complete = demos
            .episodes
            .iter()
            .filter(|ep| world.mdp.is_terminal(ep.last().unwrap().sn))
            .count();
        let xs = expert_transitions(&world.mdp, &demos);
        let n_abs = xs.iter().filter(|t| t.s == sink && t.sn == sink).count();
        assert_eq!(n_abs, complete);
        assert_eq!(xs.len(), demos.records().count() + complete);
    }
}
