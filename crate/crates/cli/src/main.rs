use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use iddlab_core::experiment::{self, ExperimentConfig};
use iddlab_core::gridworld::{train_expert, GridWorld};
use iddlab_core::learners::record::evaluate_policy;
use iddlab_core::verify;
use iddlab_core::Algorithm;

#[derive(Parser)]
#[command(name = "iddlab", version, about = "Inverse-dynamics disagreement experiments on tabular MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every identity on generated instances; exit 2 if any fails.
    Verify(Common),
    /// Train the value-iteration expert and save it.
    Expert(Common),
    /// Collect expert demonstrations.
    Demos(Common),
    /// One training run.
    Run(Common),
    /// Cross product of the sweep axes and seeds, in parallel.
    Sweep(Common),
    /// Approximate disagreement against the number of action choices.
    Curve(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Overrides the algorithm (GAIL, GAIfO, GAIfO-s, BCO, IDDM).
    #[arg(long)]
    algo: Option<Algorithm>,
}

enum Outcome {
    Ok,
    VerifyFailed,
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_json(&text).with_context(|| format!("loading {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seeds = vec![seed];
        config.train.seed = seed;
        config.verify.seed = seed;
        config.curve.seed = seed;
        config.demo_seed = seed;
    }
    if let Some(algo) = common.algo {
        config.train.algorithm = algo;
        config.sweep.algorithms = Some(vec![algo]);
    }
    config.validate()?;
    Ok(config)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn verify_cmd(common: &Common) -> Result<Outcome> {
    let config = load(common)?;
    let reports = verify::run_suite(&config.verify)?;
    let text = verify::to_jsonl(&reports)?;
    print!("{text}");
    write(&common.out, "verify.jsonl", &text)?;
    if reports.iter().all(|r| r.passed) {
        Ok(Outcome::Ok)
    } else {
        for r in reports.iter().filter(|r| !r.passed) {
            eprintln!("FAILED {}: residual {:e} > {:e}", r.name, r.residual, r.tolerance);
        }
        Ok(Outcome::VerifyFailed)
    }
}

fn expert_cmd(common: &Common) -> Result<Outcome> {
    let config = load(common)?;
    let world = GridWorld::new(config.grid.clone())?;
    let expert = train_expert(&world.mdp, config.expert_temperature)?;
    let eval = evaluate_policy(&world.mdp, &expert, config.grid.max_steps, config.eval_rollouts, config.train.seed);
    write(&common.out, "expert.json", &expert.to_json()?)?;
    write(&common.out, "mdp.json", &world.mdp.to_json()?)?;
    write(&common.out, "expert_eval.json", &serde_json::to_string_pretty(&eval)?)?;
    println!("expert return {:.3} +- {:.3} over {} episodes", eval.mean, eval.std, eval.returns.len());
    Ok(Outcome::Ok)
}

fn demos_cmd(common: &Common) -> Result<Outcome> {
    let config = load(common)?;
    let setup = experiment::prepare(
        &config.grid,
        config.expert_temperature,
        config.demo_pairs,
        config.demo_seed,
        config.train.algorithm.needs_actions(),
    )?;
    write(&common.out, "demos.jsonl", &setup.demos.to_jsonl()?)?;
    println!(
        "{} transitions in {} episodes",
        setup.demos.meta.pair_count,
        setup.demos.episodes.len()
    );
    Ok(Outcome::Ok)
}

fn run_cmd(common: &Common) -> Result<Outcome> {
    let config = load(common)?;
    let out = experiment::run_single(&config)?;
    let summary = out.summary();
    write(&common.out, "run.csv", &out.record.to_csv())?;
    write(&common.out, "policy.json", &out.policy.to_json()?)?;
    write(&common.out, "eval.json", &serde_json::to_string_pretty(summary)?)?;
    println!(
        "{} seed {}: eval return {:.3} +- {:.3}",
        config.train.algorithm, config.train.seed, summary.mean, summary.std
    );
    Ok(Outcome::Ok)
}

fn sweep_cmd(common: &Common) -> Result<Outcome> {
    let config = load(common)?;
    let results = experiment::run_sweep(&config, common.jobs)?;
    let runs = common.out.join("runs");
    for r in &results {
        let name = format!("{}_{}_seed{}.csv", r.cell.replace(';', "_"), r.algorithm, r.seed);
        write(&runs, &name, &r.output.record.to_csv())?;
    }
    let rows = experiment::summarize(&results);
    let summary = experiment::summary_csv(&rows);
    write(&common.out, "summary.csv", &summary)?;
    write(&common.out, "gaps.csv", &experiment::gaps_csv(&experiment::gaps(&rows)))?;
    print!("{summary}");
    Ok(Outcome::Ok)
}

fn curve_cmd(common: &Common) -> Result<Outcome> {
    let config = load(common)?;
    let points = experiment::run_curve(&config.curve)?;
    let text = experiment::curve_csv(&points);
    write(&common.out, "curve.csv", &text)?;
    print!("{text}");
    Ok(Outcome::Ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Verify(c) => verify_cmd(c),
        Command::Expert(c) => expert_cmd(c),
        Command::Demos(c) => demos_cmd(c),
        Command::Run(c) => run_cmd(c),
        Command::Sweep(c) => sweep_cmd(c),
        Command::Curve(c) => curve_cmd(c),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::VerifyFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
