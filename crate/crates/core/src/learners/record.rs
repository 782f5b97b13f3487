use serde::{Deserialize, Serialize};

use super::rollout::{evaluate, mean_std};
use super::{stream_rng, streams};
use crate::mdp::{TabularMdp, TabularPolicy};

pub const CSV_HEADER: &str = "iter,mean_return,disc_loss,mi_estimate,policy_entropy,diag_kl_ss,diag_kl_sa,diag_idd";

/// One training iteration. Diagnostics are NaN when not computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub iter: usize,
    /// Mean environment return of the iteration's rollouts.
    pub mean_return: f64,
    /// Discriminator cross-entropy (BCO: cloning NLL).
    pub disc_loss: f64,
    pub mi_estimate: f64,
    /// Exact `H(a|s)` under the agent's occupancy.
    pub policy_entropy: f64,
    pub diag_kl_ss: f64,
    pub diag_kl_sa: f64,
    pub diag_idd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
    pub summary: Option<EvalSummary>,
}

impl RunRecord {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.iter, r.mean_return, r.disc_loss, r.mi_estimate, r.policy_entropy, r.diag_kl_ss, r.diag_kl_sa, r.diag_idd
            ));
        }
        out
    }
}

/// Undiscounted returns of `n` episodes on the evaluation stream of `seed`.
pub fn evaluate_policy(mdp: &TabularMdp, policy: &TabularPolicy, max_steps: usize, n: usize, seed: u64) -> EvalSummary {
    let mut rng = stream_rng(seed, streams::EVAL);
    let returns = evaluate(mdp, policy, max_steps, n, &mut rng);
    let (mean, std) = mean_std(&returns);
    EvalSummary { mean, std, returns }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_one_line_per_row() {
        let row = RunRow {
            iter: 0,
            mean_return: 1.5,
            disc_loss: 0.25,
            mi_estimate: f64::NAN,
            policy_entropy: 1.0,
            diag_kl_ss: 0.0,
            diag_kl_sa: 0.0,
            diag_idd: 0.0,
        };
        let rec = RunRecord {
            rows: vec![row, RunRow { iter: 1, ..row }],
            summary: None,
        };
        let csv = rec.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "0,1.5,0.25,NaN,1,0,0,0");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn single_episode_has_zero_std() {
        let s = EvalSummary {
            mean: 3.0,
            std: 0.0,
            returns: vec![3.0],
        };
        assert_eq!(mean_std(&s.returns), (3.0, 0.0));
    }
}
