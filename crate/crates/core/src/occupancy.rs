//! Discounted occupancy measures and the inverse dynamics model they induce.
//!
//! Every measure here is normalised to total mass one: the raw discounted
//! visitation `sum_t gamma^t P(s_t = s)` is rescaled by `(1 - gamma)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdp::{TabularMdp, TabularPolicy};

/// Largest state space handled by the dense solver.
pub const MAX_DENSE_STATES: usize = 10_000;

/// Solves `(I - gamma P_pi^T) x = mu` and returns `(1 - gamma) x`.
pub fn solve_state_occupancy(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Vec<f64>> {
    policy.check_matches(mdp)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    if ns > MAX_DENSE_STATES {
        return Err(Error::Dimension(format!(
            "{ns} states exceeds the dense solver limit of {MAX_DENSE_STATES}"
        )));
    }
    let gamma = mdp.gamma();

    // Column s' of P_pi^T is row s' of P_pi, so build A = I - gamma P^T directly.
    let mut a_mat = DMatrix::<f64>::identity(ns, ns);
    for s in 0..ns {
        let pi = policy.row(s);
        for (a, &p_a) in pi.iter().enumerate().take(na) {
            let next = mdp.next_dist(s, a);
            for (sn, &t) in next.iter().enumerate() {
                if t != 0.0 {
                    a_mat[(sn, s)] -= gamma * p_a * t;
                }
            }
        }
    }
    let rhs = DVector::from_column_slice(mdp.init());
    let x = a_mat
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("I - gamma P^T has no LU solution".into()))?;

    let scale = 1.0 - gamma;
    let mut rho = Vec::with_capacity(ns);
    for (s, &v) in x.iter().enumerate() {
        let v = v * scale;
        if !v.is_finite() || v < -1e-12 {
            return Err(Error::Singular(format!("occupancy of state {s} is {v}")));
        }
        rho.push(v.max(0.0));
    }
    Ok(rho)
}

/// The four occupancy measures of one policy on one MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancySet {
    n_states: usize,
    n_actions: usize,
    pub rho_s: Vec<f64>,
    /// `[s][a]`
    pub rho_sa: Vec<f64>,
    /// `[s][s']`
    pub rho_ss: Vec<f64>,
    /// `[s][a][s']`
    pub rho_sas: Vec<f64>,
    pub gamma_used: f64,
}

impl OccupancySet {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn sa(&self, s: usize, a: usize) -> f64 {
        self.rho_sa[s * self.n_actions + a]
    }

    pub fn ss(&self, s: usize, sn: usize) -> f64 {
        self.rho_ss[s * self.n_states + sn]
    }

    pub fn sas(&self, s: usize, a: usize, sn: usize) -> f64 {
        self.rho_sas[(s * self.n_actions + a) * self.n_states + sn]
    }

    /// Builds a set from a raw joint `rho(s, a, s')`, deriving every marginal.
    /// Used for synthetic joints that do not come from an MDP.
    pub fn from_joint(n_states: usize, n_actions: usize, rho_sas: Vec<f64>) -> Result<Self> {
        if rho_sas.len() != n_states * n_actions * n_states {
            return Err(Error::Dimension("joint has wrong size".into()));
        }
        let mut rho_s = vec![0.0; n_states];
        let mut rho_sa = vec![0.0; n_states * n_actions];
        let mut rho_ss = vec![0.0; n_states * n_states];
        for s in 0..n_states {
            for a in 0..n_actions {
                for sn in 0..n_states {
                    let v = rho_sas[(s * n_actions + a) * n_states + sn];
                    rho_sa[s * n_actions + a] += v;
                    rho_ss[s * n_states + sn] += v;
                }
            }
            rho_s[s] = rho_sa[s * n_actions..(s + 1) * n_actions].iter().sum();
        }
        Ok(OccupancySet {
            n_states,
            n_actions,
            rho_s,
            rho_sa,
            rho_ss,
            rho_sas,
            gamma_used: f64::NAN,
        })
    }
}

/// `rho(s,a) = rho(s) pi(a|s)`, `rho(s,a,s') = rho(s,a) T(s'|s,a)`,
/// `rho(s,s') = sum_a rho(s,a,s')`.
pub fn derive_occupancies(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<OccupancySet> {
    let rho_s = solve_state_occupancy(mdp, policy)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut rho_sa = vec![0.0; ns * na];
    let mut rho_sas = vec![0.0; ns * na * ns];
    let mut rho_ss = vec![0.0; ns * ns];
    for s in 0..ns {
        for a in 0..na {
            let w = rho_s[s] * policy.prob(s, a);
            rho_sa[s * na + a] = w;
            if w == 0.0 {
                continue;
            }
            let next = mdp.next_dist(s, a);
            let base = (s * na + a) * ns;
            for (sn, &t) in next.iter().enumerate() {
                if t != 0.0 {
                    let v = w * t;
                    rho_sas[base + sn] = v;
                    rho_ss[s * ns + sn] += v;
                }
            }
        }
    }
    Ok(OccupancySet {
        n_states: ns,
        n_actions: na,
        rho_s,
        rho_sa,
        rho_ss,
        rho_sas,
        gamma_used: mdp.gamma(),
    })
}

/// `rho_pi(a | s, s')`, defined only where `rho(s, s') > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseDynamicsTable {
    n_states: usize,
    n_actions: usize,
    /// `[s][s'][a]`; entries off the support are NaN.
    cond: Vec<f64>,
    support: Vec<bool>,
}

impl InverseDynamicsTable {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn is_defined(&self, s: usize, sn: usize) -> bool {
        self.support[s * self.n_states + sn]
    }

    /// The conditional row `rho(. | s, s')`, or `None` off the support.
    pub fn row(&self, s: usize, sn: usize) -> Option<&[f64]> {
        if !self.is_defined(s, sn) {
            return None;
        }
        let start = (s * self.n_states + sn) * self.n_actions;
        Some(&self.cond[start..start + self.n_actions])
    }

    pub fn get(&self, s: usize, sn: usize, a: usize) -> Option<f64> {
        self.row(s, sn).map(|r| r[a])
    }
}

/// Bayes inversion of the dynamics under `policy`:
/// `T(s'|s,a) pi(a|s) / sum_b T(s'|s,b) pi(b|s)`.
pub fn inverse_dynamics(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    occ: &OccupancySet,
) -> Result<InverseDynamicsTable> {
    policy.check_matches(mdp)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    if occ.n_states != ns || occ.n_actions != na {
        return Err(Error::Dimension("occupancy set does not match the MDP".into()));
    }
    let mut cond = vec![f64::NAN; ns * ns * na];
    let mut support = vec![false; ns * ns];
    let mut weights = vec![0.0; na];
    for s in 0..ns {
        for sn in 0..ns {
            if occ.ss(s, sn) <= 0.0 {
                continue;
            }
            let mut total = 0.0;
            for (a, w) in weights.iter_mut().enumerate() {
                *w = mdp.prob(s, a, sn) * policy.prob(s, a);
                total += *w;
            }
            if total <= 0.0 {
                continue;
            }
            let start = (s * ns + sn) * na;
            for a in 0..na {
                cond[start + a] = weights[a] / total;
            }
            support[s * ns + sn] = true;
        }
    }
    Ok(InverseDynamicsTable {
        n_states: ns,
        n_actions: na,
        cond,
        support,
    })
}
