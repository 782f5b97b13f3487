//! Experiment configs, single runs, parallel sweeps and their summaries.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{train_expert, Demonstration, GridSpec, GridWorld};
use crate::learners::record::{evaluate_policy, EvalSummary};
use crate::learners::rollout::mean_std;
use crate::learners::{train, Algorithm, RunRecord, TrainConfig};
use crate::mdp::TabularPolicy;
use crate::theory::{approx_idd_curve_with_errors, CurvePoint};
use crate::verify::VerifyConfig;

/// Optional sweep axes. A missing axis means the base config value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub k_choices: Option<Vec<usize>>,
    pub lambda_p: Option<Vec<f64>>,
    pub lambda_s: Option<Vec<f64>>,
    pub demo_pairs: Option<Vec<usize>>,
    pub algorithms: Option<Vec<Algorithm>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveConfig {
    pub k_values: Vec<usize>,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig {
            k_values: (1..=11).collect(),
            n_samples: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub eval_rollouts: usize,
    /// Softmax temperature of the value-iteration expert.
    pub expert_temperature: f64,
    pub demo_pairs: usize,
    pub demo_seed: u64,
    pub sweep: SweepAxes,
    pub verify: VerifyConfig,
    pub curve: CurveConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            grid: GridSpec::reference(1),
            train: TrainConfig::default(),
            seeds: (0..5).collect(),
            eval_rollouts: 50,
            expert_temperature: 0.01,
            demo_pairs: 1000,
            demo_seed: 1000,
            sweep: SweepAxes::default(),
            verify: VerifyConfig::default(),
            curve: CurveConfig::default(),
        }
    }
}

fn nonempty<T>(path: &str, v: &Option<Vec<T>>) -> Result<()> {
    match v {
        Some(v) if v.is_empty() => Err(Error::config(path, "sweep axis is empty")),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    /// Parses JSON, reporting the field path of the first bad value.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        if self.eval_rollouts == 0 {
            return Err(Error::config("eval_rollouts", "must be at least 1"));
        }
        if self.demo_pairs == 0 {
            return Err(Error::config("demo_pairs", "must be at least 1"));
        }
        if !(self.expert_temperature > 0.0) {
            return Err(Error::config("expert_temperature", "must be > 0"));
        }
        self.grid
            .validate()
            .map_err(|e| Error::config("grid", e.to_string()))?;
        self.train.validate()?;
        nonempty("sweep.k_choices", &self.sweep.k_choices)?;
        nonempty("sweep.lambda_p", &self.sweep.lambda_p)?;
        nonempty("sweep.lambda_s", &self.sweep.lambda_s)?;
        nonempty("sweep.demo_pairs", &self.sweep.demo_pairs)?;
        nonempty("sweep.algorithms", &self.sweep.algorithms)?;
        if let Some(ks) = &self.sweep.k_choices {
            if ks.contains(&0) {
                return Err(Error::config("sweep.k_choices", "k must be at least 1"));
            }
        }
        if self.sweep.demo_pairs.as_ref().is_some_and(|d| d.contains(&0)) {
            return Err(Error::config("sweep.demo_pairs", "must be at least 1"));
        }
        for (path, axis) in [("sweep.lambda_p", &self.sweep.lambda_p), ("sweep.lambda_s", &self.sweep.lambda_s)] {
            if axis.as_ref().is_some_and(|v| v.iter().any(|x| !(x.is_finite() && *x >= 0.0))) {
                return Err(Error::config(path, "weights must be finite and >= 0"));
            }
        }
        if self.curve.k_values.is_empty() || self.curve.k_values.contains(&0) || self.curve.n_samples == 0 {
            return Err(Error::config("curve", "need positive k values and at least one sample"));
        }
        Ok(())
    }
}

/// World, expert and demonstrations shared by every run on one grid.
#[derive(Debug, Clone)]
pub struct Setup {
    pub world: GridWorld,
    pub expert: TabularPolicy,
    pub demos: Demonstration,
}

pub fn prepare(
    grid: &GridSpec,
    temperature: f64,
    demo_pairs: usize,
    demo_seed: u64,
    include_actions: bool,
) -> Result<Setup> {
    let world = GridWorld::new(grid.clone())?;
    let expert = train_expert(&world.mdp, temperature)?;
    let demos = world.collect_demos(&expert, demo_pairs, include_actions, demo_seed)?;
    Ok(Setup { world, expert, demos })
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub policy: TabularPolicy,
    pub record: RunRecord,
}

impl RunOutput {
    pub fn summary(&self) -> &EvalSummary {
        self.record.summary.as_ref().expect("run_single always evaluates")
    }
}

/// Trains one learner on `setup` and evaluates it on the run's seed.
pub fn run_with(setup: &Setup, train_config: &TrainConfig, eval_rollouts: usize) -> Result<RunOutput> {
    let max_steps = setup.world.spec.max_steps;
    let (policy, mut record) = train(&setup.world.mdp, max_steps, &setup.demos, Some(&setup.expert), train_config)?;
    record.summary = Some(evaluate_policy(&setup.world.mdp, &policy, max_steps, eval_rollouts, train_config.seed));
    Ok(RunOutput { policy, record })
}

/// Single run of `config.train` on `config.grid`.
pub fn run_single(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let setup = prepare(
        &config.grid,
        config.expert_temperature,
        config.demo_pairs,
        config.demo_seed,
        config.train.algorithm.needs_actions(),
    )?;
    run_with(&setup, &config.train, config.eval_rollouts)
}

/// One point of the sweep grid (all axes except algorithm and seed).
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub label: String,
    pub k_choices: usize,
    pub lambda_p: f64,
    pub lambda_s: f64,
    pub demo_pairs: usize,
}

pub fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let s = &config.sweep;
    let ks = s.k_choices.clone().unwrap_or_else(|| vec![config.grid.k_choices]);
    let lps = s.lambda_p.clone().unwrap_or_else(|| vec![config.train.lambda_p]);
    let lss = s.lambda_s.clone().unwrap_or_else(|| vec![config.train.lambda_s]);
    let dps = s.demo_pairs.clone().unwrap_or_else(|| vec![config.demo_pairs]);
    let mut out = Vec::new();
    for &k in &ks {
        for &lp in &lps {
            for &ls in &lss {
                for &dp in &dps {
                    let mut parts = Vec::new();
                    if s.k_choices.is_some() {
                        parts.push(format!("k={k}"));
                    }
                    if s.lambda_p.is_some() {
                        parts.push(format!("lambda_p={lp}"));
                    }
                    if s.lambda_s.is_some() {
                        parts.push(format!("lambda_s={ls}"));
                    }
                    if s.demo_pairs.is_some() {
                        parts.push(format!("demo_pairs={dp}"));
                    }
                    let label = if parts.is_empty() { "base".to_string() } else { parts.join(";") };
                    out.push(Cell {
                        label,
                        k_choices: k,
                        lambda_p: lp,
                        lambda_s: ls,
                        demo_pairs: dp,
                    });
                }
            }
        }
    }
    out
}

pub fn sweep_algorithms(config: &ExperimentConfig) -> Vec<Algorithm> {
    config
        .sweep
        .algorithms
        .clone()
        .unwrap_or_else(|| vec![Algorithm::Gail, Algorithm::Gaifo, Algorithm::Iddm])
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub cell: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub output: RunOutput,
}

struct Task {
    cell: Cell,
    algorithm: Algorithm,
    seed: u64,
}

fn run_task(config: &ExperimentConfig, task: &Task) -> Result<SweepResult> {
    let grid = GridSpec {
        k_choices: task.cell.k_choices,
        ..config.grid.clone()
    };
    let setup = prepare(
        &grid,
        config.expert_temperature,
        task.cell.demo_pairs,
        config.demo_seed,
        task.algorithm.needs_actions(),
    )?;
    let train_config = TrainConfig {
        algorithm: task.algorithm,
        lambda_p: task.cell.lambda_p,
        lambda_s: task.cell.lambda_s,
        seed: task.seed,
        ..config.train.clone()
    };
    let output = run_with(&setup, &train_config, config.eval_rollouts)?;
    log::info!(
        "{} {} seed {}: eval {:.2}",
        task.cell.label,
        task.algorithm,
        task.seed,
        output.summary().mean
    );
    Ok(SweepResult {
        cell: task.cell.label.clone(),
        algorithm: task.algorithm,
        seed: task.seed,
        output,
    })
}

/// Every (cell, algorithm, seed) as an independent task on `jobs` threads
/// (0 = all cores). Results come back in task order whatever the schedule.
pub fn run_sweep(config: &ExperimentConfig, jobs: usize) -> Result<Vec<SweepResult>> {
    config.validate()?;
    let algorithms = sweep_algorithms(config);
    let mut tasks = Vec::new();
    for cell in cells(config) {
        for &algorithm in &algorithms {
            for &seed in &config.seeds {
                tasks.push(Task {
                    cell: cell.clone(),
                    algorithm,
                    seed,
                });
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Precondition(format!("cannot build thread pool: {e}")))?;
    pool.install(|| tasks.par_iter().map(|t| run_task(config, t)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: String,
    pub algorithm: Algorithm,
    /// Mean over seeds of the per-seed evaluation mean.
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub std: f64,
    pub n_seeds: usize,
}

/// One row per (cell, algorithm) in first-appearance order.
pub fn summarize(results: &[SweepResult]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, Algorithm)> = Vec::new();
    let mut groups: BTreeMap<(String, Algorithm), Vec<f64>> = BTreeMap::new();
    for r in results {
        let key = (r.cell.clone(), r.algorithm);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r.output.summary().mean);
    }
    order
        .into_iter()
        .map(|key| {
            let values = &groups[&key];
            let (mean, std) = mean_std(values);
            SummaryRow {
                cell: key.0,
                algorithm: key.1,
                mean,
                std,
                n_seeds: values.len(),
            }
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("cell,algorithm,mean,std,n_seeds\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.cell, r.algorithm, r.mean, r.std, r.n_seeds));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub cell: String,
    /// NaN when either side is missing from the sweep.
    pub gail_minus_gaifo: f64,
    pub gail_minus_iddm: f64,
}

pub fn gaps(rows: &[SummaryRow]) -> Vec<GapRow> {
    let find = |cell: &str, a: Algorithm| {
        rows.iter()
            .find(|r| r.cell == cell && r.algorithm == a)
            .map_or(f64::NAN, |r| r.mean)
    };
    let mut cells: Vec<&str> = Vec::new();
    for r in rows {
        if !cells.contains(&r.cell.as_str()) {
            cells.push(&r.cell);
        }
    }
    cells
        .into_iter()
        .map(|c| {
            let gail = find(c, Algorithm::Gail);
            GapRow {
                cell: c.to_string(),
                gail_minus_gaifo: gail - find(c, Algorithm::Gaifo),
                gail_minus_iddm: gail - find(c, Algorithm::Iddm),
            }
        })
        .collect()
}

pub fn gaps_csv(rows: &[GapRow]) -> String {
    let mut out = String::from("cell,gail_minus_gaifo,gail_minus_iddm\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.cell, r.gail_minus_gaifo, r.gail_minus_iddm));
    }
    out
}

pub fn run_curve(config: &CurveConfig) -> Result<Vec<CurvePoint>> {
    approx_idd_curve_with_errors(&config.k_values, config.n_samples, config.seed)
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("k,mean,std_err\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.k, p.mean, p.std_err));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            grid: GridSpec::open_torus(3, 3, 1),
            train: TrainConfig {
                iterations: 3,
                rollout_steps: 50,
                batch: 16,
                mi_pretrain_steps: 5,
                mi_update_steps: 1,
                lr: 0.05,
                ..TrainConfig::default()
            },
            seeds: vec![0, 1],
            eval_rollouts: 5,
            demo_pairs: 100,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_round_trips() {
        let c = ExperimentConfig {
            sweep: SweepAxes {
                k_choices: Some(vec![1, 2]),
                ..SweepAxes::default()
            },
            ..tiny()
        };
        let text = c.to_json().unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(ExperimentConfig::from_json(&back.to_json().unwrap()).unwrap(), back);
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn bad_fields_report_their_path() {
        let err = ExperimentConfig::from_json(r#"{"train": {"lambda_p": "x"}}"#).unwrap_err();
        assert!(matches!(&err, Error::Config { path, .. } if path == "train.lambda_p"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"grid": {"width": 3}}"#).unwrap_err();
        assert!(matches!(&err, Error::Config { path, .. } if path == "grid"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"seeds": []}"#).unwrap_err();
        assert!(matches!(&err, Error::Config { path, .. } if path == "seeds"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"train": {"algorithm": "PPO"}}"#).unwrap_err();
        assert!(matches!(&err, Error::Config { path, .. } if path == "train.algorithm"), "{err}");
    }

    #[test]
    fn sweep_rows_cover_cells_times_algorithms() {
        let c = ExperimentConfig {
            sweep: SweepAxes {
                k_choices: Some(vec![1, 2]),
                ..SweepAxes::default()
            },
            ..tiny()
        };
        let results = run_sweep(&c, 2).unwrap();
        assert_eq!(results.len(), 2 * 3 * 2);
        let rows = summarize(&results);
        assert_eq!(rows.len(), 6);
        let mut keys: Vec<_> = rows.iter().map(|r| (r.cell.clone(), r.algorithm)).collect();
        keys.dedup();
        assert_eq!(keys.len(), 6);
        assert_eq!(rows[0].cell, "k=1");
        assert!(rows.iter().all(|r| r.n_seeds == 2));
        let g = gaps(&rows);
        assert_eq!(g.len(), 2);
        assert!(g[0].gail_minus_gaifo.is_finite());

        // Thread count does not change any result.
        let again = run_sweep(&c, 1).unwrap();
        assert_eq!(summary_csv(&summarize(&again)), summary_csv(&rows));
    }

    #[test]
    fn single_seed_has_zero_std() {
        let c = ExperimentConfig { seeds: vec![3], ..tiny() };
        let rows = summarize(&run_sweep(&c, 1).unwrap());
        assert!(rows.iter().all(|r| r.std == 0.0 && r.n_seeds == 1));
        assert!(rows.iter().all(|r| r.cell == "base"));
    }
}
