//! Expert demonstrations and their JSON Lines format.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sample_initial, sample_next, GridWorld};
use crate::error::{Error, Result};
use crate::mdp::{TabularMdp, TabularPolicy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoMeta {
    pub fingerprint: String,
    pub includes_actions: bool,
    pub seed: u64,
    pub pair_count: usize,
    pub n_states: usize,
    pub n_actions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DemoRecord {
    pub s: usize,
    pub a: Option<usize>,
    pub sn: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Demonstration {
    pub meta: DemoMeta,
    pub episodes: Vec<Vec<DemoRecord>>,
}

#[derive(Serialize, Deserialize)]
struct MetaLine {
    meta: DemoMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    ep: usize,
    t: usize,
    s: usize,
    a: Option<usize>,
    sn: usize,
}

impl Demonstration {
    pub fn records(&self) -> impl Iterator<Item = &DemoRecord> {
        self.episodes.iter().flatten()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&MetaLine { meta: self.meta.clone() })?;
        out.push('\n');
        for (ep, episode) in self.episodes.iter().enumerate() {
            for (t, r) in episode.iter().enumerate() {
                let line = RecordLine {
                    ep,
                    t,
                    s: r.s,
                    a: r.a,
                    sn: r.sn,
                };
                out.push_str(&serde_json::to_string(&line)?);
                out.push('\n');
            }
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(Error::DemoFormat {
            line: 1,
            message: "missing metadata line".into(),
        })?;
        let meta = serde_json::from_str::<MetaLine>(first)
            .map_err(|e| Error::DemoFormat {
                line: 1,
                message: e.to_string(),
            })?
            .meta;
        let mut episodes: Vec<Vec<DemoRecord>> = Vec::new();
        for (i, text) in lines {
            let line = i + 1;
            let bad = |message: String| Error::DemoFormat { line, message };
            let r: RecordLine = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
            if r.ep == episodes.len() {
                episodes.push(Vec::new());
            } else if r.ep + 1 != episodes.len() {
                return Err(bad(format!("episode {} out of order", r.ep)));
            }
            let episode = episodes.last_mut().expect("pushed above");
            if r.t != episode.len() {
                return Err(bad(format!("step {} out of order", r.t)));
            }
            if let Some(prev) = episode.last() {
                if prev.sn != r.s {
                    return Err(bad(format!("record does not chain: previous sn {} but s {}", prev.sn, r.s)));
                }
            }
            if r.a.is_some() != meta.includes_actions {
                return Err(bad("action presence disagrees with includes_actions".into()));
            }
            if r.s >= meta.n_states || r.sn >= meta.n_states || r.a.is_some_and(|a| a >= meta.n_actions) {
                return Err(bad("index out of range".into()));
            }
            episode.push(DemoRecord { s: r.s, a: r.a, sn: r.sn });
        }
        let demo = Demonstration { meta, episodes };
        let count = demo.records().count();
        if count != demo.meta.pair_count {
            return Err(Error::DemoFormat {
                line: 1,
                message: format!("pair_count {} but {count} records", demo.meta.pair_count),
            });
        }
        Ok(demo)
    }
}

/// Rolls complete episodes of `policy` until at least `n_pairs` transitions
/// are recorded, then truncates to exactly `n_pairs`.
pub fn collect_demos(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    max_steps: usize,
    n_pairs: usize,
    include_actions: bool,
    seed: u64,
    fingerprint: &str,
) -> Result<Demonstration> {
    policy.check_matches(mdp)?;
    if n_pairs == 0 {
        return Err(Error::Precondition("n_pairs must be at least 1".into()));
    }
    if max_steps == 0 {
        return Err(Error::Precondition("max_steps must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut episodes = Vec::new();
    let mut total = 0;
    while total < n_pairs {
        let mut s = sample_initial(mdp, &mut rng);
        let mut episode = Vec::new();
        while !mdp.is_terminal(s) && episode.len() < max_steps {
            let a = policy.sample_with(s, rng.random());
            let sn = sample_next(mdp, s, a, &mut rng);
            episode.push(DemoRecord {
                s,
                a: include_actions.then_some(a),
                sn,
            });
            s = sn;
        }
        if episode.is_empty() {
            return Err(Error::Precondition("initial state is terminal".into()));
        }
        total += episode.len();
        episodes.push(episode);
    }
    let mut excess = total - n_pairs;
    while excess > 0 {
        let last = episodes.last_mut().expect("at least one episode");
        if last.len() <= excess {
            excess -= last.len();
            episodes.pop();
        } else {
            last.truncate(last.len() - excess);
            excess = 0;
        }
    }
    Ok(Demonstration {
        meta: DemoMeta {
            fingerprint: fingerprint.to_string(),
            includes_actions: include_actions,
            seed,
            pair_count: n_pairs,
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
        },
        episodes,
    })
}

impl GridWorld {
    pub fn collect_demos(
        &self,
        policy: &TabularPolicy,
        n_pairs: usize,
        include_actions: bool,
        seed: u64,
    ) -> Result<Demonstration> {
        collect_demos(
            &self.mdp,
            policy,
            self.spec.max_steps,
            n_pairs,
            include_actions,
            seed,
            &self.spec.fingerprint(),
        )
    }
}
