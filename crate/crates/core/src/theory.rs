//! Numerical certificates for the occupancy-measure identities.
//!
//! Every check returns a [`TheoremReport`] with the individual terms, a signed
//! residual and the tolerance it is judged against.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{TabularMdp, TabularPolicy};
use crate::measures::{
    conditional_entropy_s_given_next_action, cross_entropy, divergence, entropies,
    exact_mutual_information, inverse_dynamics_disagreement, js_inverse_dynamics, Divergence,
};
use crate::occupancy::{derive_occupancies, inverse_dynamics, InverseDynamicsTable, OccupancySet};

pub const THEOREM1_TOL: f64 = 1e-8;
pub const COROLLARY1_TOL: f64 = 1e-8;
pub const THEOREM2_TOL: f64 = 1e-6;
pub const ENTROPY_TOL: f64 = 1e-10;
pub const MI_TOL: f64 = 1e-10;
pub const JS_LEMMA_TOL: f64 = 1e-10;
pub const JS_COROLLARY_TOL: f64 = 1e-8;
pub const JS_EPSILON_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub name: String,
    pub terms: BTreeMap<String, f64>,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl TheoremReport {
    pub fn new<'a>(
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (&'a str, f64)>,
        residual: f64,
        tolerance: f64,
    ) -> Self {
        TheoremReport {
            name: name.into(),
            terms: terms.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            residual,
            tolerance,
            // NaN residuals fail.
            passed: residual.abs() <= tolerance,
        }
    }

    pub fn term(&self, key: &str) -> f64 {
        self.terms.get(key).copied().unwrap_or(f64::NAN)
    }
}

/// Occupancies and inverse dynamics of an agent/expert pair on one MDP.
pub struct PolicyPair {
    pub occ_pi: OccupancySet,
    pub occ_expert: OccupancySet,
    pub id_pi: InverseDynamicsTable,
    pub id_expert: InverseDynamicsTable,
}

impl PolicyPair {
    pub fn evaluate(mdp: &TabularMdp, pi: &TabularPolicy, expert: &TabularPolicy) -> Result<Self> {
        let occ_pi = derive_occupancies(mdp, pi)?;
        let occ_expert = derive_occupancies(mdp, expert)?;
        let id_pi = inverse_dynamics(mdp, pi, &occ_pi)?;
        let id_expert = inverse_dynamics(mdp, expert, &occ_expert)?;
        Ok(PolicyPair {
            occ_pi,
            occ_expert,
            id_pi,
            id_expert,
        })
    }

    pub fn div_sa(&self, kind: Divergence) -> Result<f64> {
        divergence(&self.occ_pi.rho_sa, &self.occ_expert.rho_sa, kind)
    }

    pub fn div_ss(&self, kind: Divergence) -> Result<f64> {
        divergence(&self.occ_pi.rho_ss, &self.occ_expert.rho_ss, kind)
    }

    pub fn div_sas(&self, kind: Divergence) -> Result<f64> {
        divergence(&self.occ_pi.rho_sas, &self.occ_expert.rho_sas, kind)
    }

    pub fn idd(&self) -> Result<f64> {
        inverse_dynamics_disagreement(&self.occ_pi, &self.id_pi, &self.id_expert)
    }

    /// Disagreement in the other direction, weighted by the expert's joint.
    pub fn idd_reverse(&self) -> Result<f64> {
        inverse_dynamics_disagreement(&self.occ_expert, &self.id_expert, &self.id_pi)
    }

    pub fn js_inverse(&self) -> Result<f64> {
        js_inverse_dynamics(&self.occ_pi, &self.id_pi, &self.occ_expert, &self.id_expert)
    }
}

/// `IDD = KL_sa - KL_ss`.
pub fn check_theorem1(mdp: &TabularMdp, pi: &TabularPolicy, expert: &TabularPolicy) -> Result<TheoremReport> {
    let pair = PolicyPair::evaluate(mdp, pi, expert)?;
    let idd = pair.idd()?;
    let kl_sa = pair.div_sa(Divergence::Kl)?;
    let kl_ss = pair.div_ss(Divergence::Kl)?;
    Ok(TheoremReport::new(
        "theorem1",
        [("IDD", idd), ("KL_sa", kl_sa), ("KL_ss", kl_ss)],
        idd - (kl_sa - kl_ss),
        THEOREM1_TOL,
    ))
}

/// `KL(rho_sas) = KL(rho_sa)` for two policies on the same dynamics.
pub fn check_lemma1(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    expert: &TabularPolicy,
    kind: Divergence,
) -> Result<TheoremReport> {
    let pair = PolicyPair::evaluate(mdp, pi, expert)?;
    let sas = pair.div_sas(kind)?;
    let sa = pair.div_sa(kind)?;
    let name = match kind {
        Divergence::Kl => "lemma1",
        Divergence::Js => "lemma1_js",
    };
    Ok(TheoremReport::new(name, [("D_sas", sas), ("D_sa", sa)], sas - sa, JS_LEMMA_TOL))
}

/// Fails unless every transition that either policy can reach from a
/// non-terminal state is produced by exactly one action, and the two policies
/// agree on terminal states (where every action self-loops).
pub fn verify_injective(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    expert: &TabularPolicy,
    occ_pi: &OccupancySet,
    occ_expert: &OccupancySet,
) -> Result<()> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    for s in 0..ns {
        if occ_pi.rho_s[s] <= 0.0 && occ_expert.rho_s[s] <= 0.0 {
            continue;
        }
        if mdp.is_terminal(s) {
            if pi.row(s) != expert.row(s) {
                return Err(Error::Precondition(format!(
                    "policies differ on terminal state {s}, where all actions coincide"
                )));
            }
            continue;
        }
        for sn in 0..ns {
            let generators: Vec<usize> = (0..na).filter(|&a| mdp.prob(s, a, sn) > 0.0).collect();
            if generators.len() > 1 {
                return Err(Error::Precondition(format!(
                    "transition ({s}, {sn}) is generated by actions {generators:?}"
                )));
            }
        }
    }
    Ok(())
}

/// On injective dynamics `KL_sa = KL_ss` and the disagreement vanishes. The
/// residual is whichever of `KL_sa - KL_ss` and `IDD` is larger in magnitude.
pub fn check_corollary1(mdp: &TabularMdp, pi: &TabularPolicy, expert: &TabularPolicy) -> Result<TheoremReport> {
    let pair = PolicyPair::evaluate(mdp, pi, expert)?;
    verify_injective(mdp, pi, expert, &pair.occ_pi, &pair.occ_expert)?;
    let idd = pair.idd()?;
    let kl_sa = pair.div_sa(Divergence::Kl)?;
    let kl_ss = pair.div_ss(Divergence::Kl)?;
    let gap = kl_sa - kl_ss;
    let residual = if idd.abs() > gap.abs() { idd } else { gap };
    Ok(TheoremReport::new(
        "corollary1",
        [("IDD", idd), ("KL_sa", kl_sa), ("KL_ss", kl_ss)],
        residual,
        COROLLARY1_TOL,
    ))
}

/// With matched transition occupancies the disagreement equals
/// `-H(rho_sa^pi) - sum rho_sa^pi log rho_sa^E`.
pub fn check_theorem2(mdp: &TabularMdp, pi: &TabularPolicy, expert: &TabularPolicy) -> Result<TheoremReport> {
    let pair = PolicyPair::evaluate(mdp, pi, expert)?;
    let kl_ss = pair.div_ss(Divergence::Kl)?;
    if kl_ss > THEOREM2_TOL {
        return Err(Error::Precondition(format!(
            "transition occupancies differ: KL_ss = {kl_ss:e} > {THEOREM2_TOL:e}"
        )));
    }
    let idd = pair.idd()?;
    let neg_h_sa = -entropies(&pair.occ_pi, pi)?.h_sa;
    let cross = cross_entropy(&pair.occ_pi.rho_sa, &pair.occ_expert.rho_sa)?;
    Ok(TheoremReport::new(
        "theorem2",
        [
            ("IDD", idd),
            ("neg_H_sa", neg_h_sa),
            ("cross_entropy", cross),
            ("KL_ss", kl_ss),
        ],
        idd - (neg_h_sa + cross),
        THEOREM2_TOL,
    ))
}

/// `H(s,a) = H(a|s) + H(s)`.
pub fn check_entropy_decomposition(mdp: &TabularMdp, pi: &TabularPolicy) -> Result<TheoremReport> {
    let occ = derive_occupancies(mdp, pi)?;
    let h = entropies(&occ, pi)?;
    Ok(TheoremReport::new(
        "entropy_decomposition",
        [("H_sa", h.h_sa), ("H_a_given_s", h.h_a_given_s), ("H_s", h.h_s)],
        h.h_sa - h.h_a_given_s - h.h_s,
        ENTROPY_TOL,
    ))
}

/// `I(s; (s', a)) = H(s)` when `s` is a deterministic function of `(s', a)`.
///
/// Deterministic forward dynamics alone do not make the reverse map a
/// function (two states can bump into the same cell), so both are checked and
/// the measured `H(s | s', a)` is reported on failure.
pub fn check_mi_identity(mdp: &TabularMdp, pi: &TabularPolicy) -> Result<TheoremReport> {
    if !mdp.is_deterministic() {
        return Err(Error::Precondition("transition tensor is not deterministic".into()));
    }
    let occ = derive_occupancies(mdp, pi)?;
    let h_rev = conditional_entropy_s_given_next_action(&occ);
    if h_rev > 1e-12 {
        return Err(Error::Precondition(format!(
            "(s', a) does not determine s on the support: H(s|s',a) = {h_rev:e}"
        )));
    }
    let mi = exact_mutual_information(&occ);
    let h_s = entropies(&occ, pi)?.h_s;
    Ok(TheoremReport::new("mi_identity", [("MI", mi), ("H_s", h_s)], mi - h_s, MI_TOL))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsReport {
    pub lemma: TheoremReport,
    /// Present only when the dynamics are injective on the support.
    pub corollary: Option<TheoremReport>,
    pub homotopy: TheoremReport,
    /// `eps_t` for `t = 0, 1/steps, ..., 1`.
    pub epsilon: Vec<f64>,
}

impl JsReport {
    pub fn reports(&self) -> impl Iterator<Item = &TheoremReport> {
        std::iter::once(&self.lemma)
            .chain(self.corollary.as_ref())
            .chain(std::iter::once(&self.homotopy))
    }

    pub fn passed(&self) -> bool {
        self.reports().all(|r| r.passed)
    }
}

/// Jensen-Shannon versions of the identities. The decomposition
/// `JS_sa = JS_ss + JS_inv + eps` is tracked along the logit homotopy from
/// `pi` to `expert`; only its limit at `t = 1` is asserted.
pub fn check_js_identities(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    expert: &TabularPolicy,
    steps: usize,
) -> Result<JsReport> {
    if steps == 0 {
        return Err(Error::Precondition("homotopy needs at least one step".into()));
    }
    let pair = PolicyPair::evaluate(mdp, pi, expert)?;
    let js_sas = pair.div_sas(Divergence::Js)?;
    let js_sa = pair.div_sa(Divergence::Js)?;
    let js_ss = pair.div_ss(Divergence::Js)?;
    let lemma = TheoremReport::new(
        "lemma1_js",
        [("JS_sas", js_sas), ("JS_sa", js_sa)],
        js_sas - js_sa,
        JS_LEMMA_TOL,
    );
    let corollary = verify_injective(mdp, pi, expert, &pair.occ_pi, &pair.occ_expert)
        .ok()
        .map(|()| {
            TheoremReport::new(
                "corollary1_js",
                [("JS_sa", js_sa), ("JS_ss", js_ss)],
                js_sa - js_ss,
                JS_COROLLARY_TOL,
            )
        });

    let mut epsilon = Vec::with_capacity(steps + 1);
    let mut last = (0.0, 0.0, 0.0);
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let pi_t = TabularPolicy::interpolate(pi, expert, t)?;
        let p = PolicyPair::evaluate(mdp, &pi_t, expert)?;
        let (sa, ss, inv) = (p.div_sa(Divergence::Js)?, p.div_ss(Divergence::Js)?, p.js_inverse()?);
        epsilon.push(sa - ss - inv);
        last = (sa, ss, inv);
    }
    let eps_end = *epsilon.last().expect("steps + 1 entries");
    let homotopy = TheoremReport::new(
        "theorem1_js_epsilon",
        [
            ("JS_sa", last.0),
            ("JS_ss", last.1),
            ("JS_inv", last.2),
            ("epsilon_start", epsilon[0]),
        ],
        eps_end,
        JS_EPSILON_TOL,
    );
    Ok(JsReport {
        lemma,
        corollary,
        homotopy,
        epsilon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub mean: f64,
    pub std_err: f64,
}

/// `KL(Uniform(k) || softmax(theta))`.
fn uniform_vs_softmax(theta: &[f64]) -> f64 {
    let k = theta.len() as f64;
    let max = theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + theta.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
    let u = 1.0 / k;
    theta.iter().map(|t| u * (u.ln() - (t - lse))).sum()
}

/// Monte-Carlo estimate of `E_{theta ~ N(0, I_k)}[KL(Uniform(k) || softmax(theta))]`
/// with its standard error, for each `k`. Each `k` draws from its own stream
/// of the seeded generator, so a value does not depend on the other entries.
pub fn approx_idd_curve_with_errors(k_values: &[usize], n_samples: usize, seed: u64) -> Result<Vec<CurvePoint>> {
    if n_samples == 0 {
        return Err(Error::Precondition("n_samples must be at least 1".into()));
    }
    k_values
        .iter()
        .map(|&k| {
            if k == 0 {
                return Err(Error::Precondition("k must be at least 1".into()));
            }
            if k == 1 {
                return Ok(CurvePoint { k, mean: 0.0, std_err: 0.0 });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut theta = vec![0.0; k];
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..n_samples {
                for t in theta.iter_mut() {
                    *t = StandardNormal.sample(&mut rng);
                }
                let v = uniform_vs_softmax(&theta);
                sum += v;
                sum_sq += v * v;
            }
            let n = n_samples as f64;
            let mean = sum / n;
            let var = if n_samples > 1 {
                ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            Ok(CurvePoint {
                k,
                mean,
                std_err: (var / n).sqrt(),
            })
        })
        .collect()
}

pub fn approx_idd_curve(k_values: &[usize], n_samples: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(approx_idd_curve_with_errors(k_values, n_samples, seed)?
        .into_iter()
        .map(|p| p.mean)
        .collect())
}
