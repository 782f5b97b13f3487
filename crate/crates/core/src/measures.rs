//! Divergences, entropies and mutual information over occupancy measures.
//! Natural logarithms throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularPolicy;
use crate::occupancy::{InverseDynamicsTable, OccupancySet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Divergence {
    #[default]
    #[serde(rename = "KL", alias = "kl")]
    Kl,
    #[serde(rename = "JS", alias = "js")]
    Js,
}

/// KL or Jensen-Shannon divergence between two distributions of equal shape.
///
/// `0 log(0/q) = 0`. KL fails with [`Error::SupportMismatch`] naming the first
/// index where `p > 0` and `q = 0`.
pub fn divergence(p: &[f64], q: &[f64], kind: Divergence) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!(
            "distributions have lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    match kind {
        Divergence::Kl => kl(p, q),
        Divergence::Js => Ok(js(p, q)),
    }
}

fn kl(p: &[f64], q: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(Error::SupportMismatch {
                index: i.to_string(),
                detail: format!("p = {pi} but q = {qi}"),
            });
        }
        total += pi * (pi / qi).ln();
    }
    Ok(total)
}

fn js(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let m = 0.5 * (pi + qi);
        if pi > 0.0 {
            total += 0.5 * pi * (pi / m).ln();
        }
        if qi > 0.0 {
            total += 0.5 * qi * (qi / m).ln();
        }
    }
    total
}

fn shannon(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entropies {
    /// `H(s, a)` of the state-action occupancy.
    pub h_sa: f64,
    /// Causal policy entropy `E_{rho(s,a)}[-log pi(a|s)]`.
    pub h_a_given_s: f64,
    /// `H(s)` of the state occupancy.
    pub h_s: f64,
}

pub fn entropies(occ: &OccupancySet, policy: &TabularPolicy) -> Result<Entropies> {
    if occ.n_states() != policy.n_states() || occ.n_actions() != policy.n_actions() {
        return Err(Error::Dimension("occupancy and policy shapes differ".into()));
    }
    let mut h_a_given_s = 0.0;
    for s in 0..occ.n_states() {
        for a in 0..occ.n_actions() {
            let w = occ.sa(s, a);
            if w > 0.0 {
                h_a_given_s -= w * policy.log_prob(s, a);
            }
        }
    }
    Ok(Entropies {
        h_sa: shannon(&occ.rho_sa),
        h_a_given_s,
        h_s: shannon(&occ.rho_s),
    })
}

/// `I(s; (s', a))` of the joint `rho(s, a, s')`.
pub fn exact_mutual_information(occ: &OccupancySet) -> f64 {
    let (ns, na) = (occ.n_states(), occ.n_actions());
    // rho(s', a)
    let mut next_action = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            for sn in 0..ns {
                next_action[sn * na + a] += occ.sas(s, a, sn);
            }
        }
    }
    let mut mi = 0.0;
    for s in 0..ns {
        let ps = occ.rho_s[s];
        if ps <= 0.0 {
            continue;
        }
        for a in 0..na {
            for sn in 0..ns {
                let joint = occ.sas(s, a, sn);
                if joint > 0.0 {
                    mi += joint * (joint / (ps * next_action[sn * na + a])).ln();
                }
            }
        }
    }
    mi.max(0.0)
}

/// `H(s | s', a)` of the joint, i.e. how far `(s', a)` is from identifying `s`.
pub fn conditional_entropy_s_given_next_action(occ: &OccupancySet) -> f64 {
    let (ns, na) = (occ.n_states(), occ.n_actions());
    let mut next_action = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            for sn in 0..ns {
                next_action[sn * na + a] += occ.sas(s, a, sn);
            }
        }
    }
    let mut h = 0.0;
    for s in 0..ns {
        for a in 0..na {
            for sn in 0..ns {
                let joint = occ.sas(s, a, sn);
                if joint > 0.0 {
                    h -= joint * (joint / next_action[sn * na + a]).ln();
                }
            }
        }
    }
    h
}

/// `sum rho(s,a,s') log( p(a|s,s') / q(a|s,s') )`, weighted by `weights`'s joint.
pub fn conditional_kl(
    weights: &OccupancySet,
    p: &InverseDynamicsTable,
    q: &InverseDynamicsTable,
) -> Result<f64> {
    let (ns, na) = (weights.n_states(), weights.n_actions());
    for t in [p, q] {
        if t.n_states() != ns || t.n_actions() != na {
            return Err(Error::Dimension("inverse dynamics table shape".into()));
        }
    }
    let mut total = 0.0;
    for s in 0..ns {
        for sn in 0..ns {
            if weights.ss(s, sn) <= 0.0 {
                continue;
            }
            let p_row = p.row(s, sn).ok_or_else(|| Error::SupportMismatch {
                index: format!("(s={s}, s'={sn})"),
                detail: "first inverse dynamics model undefined on the weighting support".into(),
            })?;
            let q_row = q.row(s, sn).ok_or_else(|| Error::SupportMismatch {
                index: format!("(s={s}, s'={sn})"),
                detail: "second inverse dynamics model undefined on the weighting support".into(),
            })?;
            for a in 0..na {
                let w = weights.sas(s, a, sn);
                if w <= 0.0 {
                    continue;
                }
                if q_row[a] <= 0.0 {
                    return Err(Error::SupportMismatch {
                        index: format!("(s={s}, a={a}, s'={sn})"),
                        detail: "second inverse dynamics model assigns zero probability".into(),
                    });
                }
                total += w * (p_row[a] / q_row[a]).ln();
            }
        }
    }
    Ok(total)
}

/// Inverse dynamics disagreement: KL between the agent's and the expert's
/// inverse dynamics models, weighted by the agent's joint occupancy.
pub fn inverse_dynamics_disagreement(
    occ_pi: &OccupancySet,
    id_pi: &InverseDynamicsTable,
    id_expert: &InverseDynamicsTable,
) -> Result<f64> {
    conditional_kl(occ_pi, id_pi, id_expert)
}

/// Jensen-Shannon analogue of the disagreement: each half is weighted by its
/// own policy's joint occupancy.
pub fn js_inverse_dynamics(
    occ_pi: &OccupancySet,
    id_pi: &InverseDynamicsTable,
    occ_expert: &OccupancySet,
    id_expert: &InverseDynamicsTable,
) -> Result<f64> {
    let (ns, na) = (occ_pi.n_states(), occ_pi.n_actions());
    let mut total = 0.0;
    for s in 0..ns {
        for sn in 0..ns {
            let (w_pi, w_e) = (occ_pi.ss(s, sn), occ_expert.ss(s, sn));
            if w_pi <= 0.0 && w_e <= 0.0 {
                continue;
            }
            let (Some(cp), Some(ce)) = (id_pi.row(s, sn), id_expert.row(s, sn)) else {
                return Err(Error::SupportMismatch {
                    index: format!("(s={s}, s'={sn})"),
                    detail: "transition supports of the two policies differ".into(),
                });
            };
            for a in 0..na {
                let m = cp[a] + ce[a];
                let jp = occ_pi.sas(s, a, sn);
                if jp > 0.0 {
                    total += 0.5 * jp * (2.0 * cp[a] / m).ln();
                }
                let je = occ_expert.sas(s, a, sn);
                if je > 0.0 {
                    total += 0.5 * je * (2.0 * ce[a] / m).ln();
                }
            }
        }
    }
    Ok(total)
}

/// `-sum rho_p log rho_q`.
pub fn cross_entropy(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension("cross entropy operands differ in length".into()));
    }
    let mut total = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(Error::SupportMismatch {
                index: i.to_string(),
                detail: format!("p = {pi} but q = {qi}"),
            });
        }
        total -= pi * qi.ln();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_distributions_have_zero_divergence() {
        let p = [0.1, 0.2, 0.7];
        assert_eq!(divergence(&p, &p, Divergence::Kl).unwrap(), 0.0);
        assert_eq!(divergence(&p, &p, Divergence::Js).unwrap(), 0.0);
    }

    #[test]
    fn bernoulli_kl_matches_closed_form() {
        let v = divergence(&[0.5, 0.5], &[0.25, 0.75], Divergence::Kl).unwrap();
        // 0.5 ln 2 + 0.5 ln(2/3) = 0.5 ln(4/3)
        assert!((v - 0.5 * (4.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!((v - 0.143841).abs() < 1e-6);
    }

    #[test]
    fn disjoint_js_is_ln2() {
        let v = divergence(&[1.0, 0.0], &[0.0, 1.0], Divergence::Js).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn kl_names_offending_index() {
        match divergence(&[0.5, 0.0, 0.5], &[1.0, 0.0, 0.0], Divergence::Kl) {
            Err(Error::SupportMismatch { index, .. }) => assert_eq!(index, "2"),
            other => panic!("expected support error, got {other:?}"),
        }
        assert!(matches!(
            divergence(&[1.0], &[0.5, 0.5], Divergence::Kl),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn product_joint_has_zero_mutual_information() {
        let (ns, na) = (3, 2);
        let ps = [0.2, 0.5, 0.3];
        let pna = [[0.1, 0.2], [0.3, 0.1], [0.05, 0.25]]; // [s'][a]
        let mut joint = vec![0.0; ns * na * ns];
        for s in 0..ns {
            for a in 0..na {
                for sn in 0..ns {
                    joint[(s * na + a) * ns + sn] = ps[s] * pna[sn][a];
                }
            }
        }
        let occ = OccupancySet::from_joint(ns, na, joint).unwrap();
        assert!(exact_mutual_information(&occ).abs() < 1e-10);
    }

    fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
            let total: f64 = v.iter().sum();
            v.into_iter().map(|x| x / total).collect()
        })
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative_and_js_bounded(p in distribution(6), q in distribution(6)) {
            let k = divergence(&p, &q, Divergence::Kl).unwrap();
            let j = divergence(&p, &q, Divergence::Js).unwrap();
            prop_assert!(k >= -1e-12);
            prop_assert!(j >= -1e-12);
            prop_assert!(j <= std::f64::consts::LN_2 + 1e-12);
            let same = p.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-12);
            if !same {
                prop_assert!(k > 0.0);
            }
        }
    }
}
