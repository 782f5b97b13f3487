use crate::error::{Error, Result};
use crate::mdp::{TabularMdp, TabularPolicy};

/// Lower bound on `(Q - max Q) / temperature`. Keeps every action probability
/// representable so KL terms against the expert stay finite.
pub const MAX_LOGIT_GAP: f64 = 30.0;

const VI_TOL: f64 = 1e-10;
const VI_MAX_ITERS: usize = 1_000_000;

/// Value iteration to a sup-norm residual below `1e-10`. Returns `(V, Q)`
/// with `Q` laid out `[s][a]`.
pub fn value_iteration(mdp: &TabularMdp) -> Result<(Vec<f64>, Vec<f64>)> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    if !mdp.has_reward() {
        return Err(Error::MissingReward);
    }
    let gamma = mdp.gamma();
    let mut v = vec![0.0; ns];
    let mut q = vec![0.0; ns * na];
    for _ in 0..VI_MAX_ITERS {
        for s in 0..ns {
            for a in 0..na {
                let r = mdp.reward(s, a).expect("checked above");
                let ev: f64 = match mdp.deterministic_next(s, a) {
                    Some(sn) => v[sn],
                    None => mdp.next_dist(s, a).iter().zip(&v).map(|(p, x)| p * x).sum(),
                };
                q[s * na + a] = r + gamma * ev;
            }
        }
        let mut residual: f64 = 0.0;
        for s in 0..ns {
            let best = q[s * na..(s + 1) * na].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            residual = residual.max((best - v[s]).abs());
            v[s] = best;
        }
        if residual < VI_TOL {
            return Ok((v, q));
        }
    }
    Err(Error::Precondition("value iteration did not converge".into()))
}

/// Softmax of the optimal Q-values at the given temperature.
pub fn train_expert(mdp: &TabularMdp, temperature: f64) -> Result<TabularPolicy> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::Precondition(format!("temperature must be positive, got {temperature}")));
    }
    let (_, q) = value_iteration(mdp)?;
    let na = mdp.n_actions();
    let mut logits = vec![0.0; q.len()];
    for (row, out) in q.chunks(na).zip(logits.chunks_mut(na)) {
        let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (x, o) in row.iter().zip(out.iter_mut()) {
            *o = ((x - best) / temperature).max(-MAX_LOGIT_GAP);
        }
    }
    TabularPolicy::from_logits(mdp.n_states(), na, logits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{build_gridworld, GridAction, GridSpec};
    use crate::occupancy::derive_occupancies;

    #[test]
    fn k4_expert_prefers_original_moves() {
        let spec = GridSpec::reference(4);
        let mdp = build_gridworld(&spec).unwrap();
        let expert = train_expert(&mdp, 0.01).unwrap();
        for s in 0..mdp.n_states() {
            if mdp.is_terminal(s) {
                continue;
            }
            let mass: f64 = (0..4).map(|d| expert.prob(s, d)).sum();
            assert!(mass > 0.99, "state {s}: variant-0 mass {mass}");
        }
        // Strict positivity survives the clamp.
        assert!(expert.probs().iter().all(|&p| p > 0.0));
        let a = GridAction::from_flat(5, 4).unwrap();
        assert_eq!(a.variant, 1);
    }

    #[test]
    fn high_temperature_approaches_uniform() {
        let mdp = build_gridworld(&GridSpec::reference(2)).unwrap();
        let hot = train_expert(&mdp, 1e9).unwrap();
        let u = 1.0 / 8.0;
        assert!(hot.probs().iter().all(|p| (p - u).abs() < 1e-6));
        let inf = train_expert(&mdp, f64::INFINITY).unwrap();
        assert!(inf.probs().iter().all(|p| (p - u).abs() < 1e-15));
    }

    #[test]
    fn rejects_missing_reward_and_bad_temperature() {
        let mdp = crate::instances::deterministic_chain(3, 1, 0.9);
        assert!(matches!(train_expert(&mdp, 0.01), Err(Error::MissingReward)));
        let grid = build_gridworld(&GridSpec::reference(1)).unwrap();
        assert!(train_expert(&grid, 0.0).is_err());
    }

    #[test]
    fn expert_occupancy_reaches_sink() {
        let spec = GridSpec::reference(1);
        let mdp = build_gridworld(&spec).unwrap();
        let expert = train_expert(&mdp, 0.01).unwrap();
        let occ = derive_occupancies(&mdp, &expert).unwrap();
        // Sink mass: gamma^L with L the shortest path length.
        let l = spec.shortest_path_len().unwrap() as i32;
        assert!((occ.rho_s[spec.sink()] - 0.99f64.powi(l)).abs() < 1e-9);
    }
}
