//! Run directories: resolved config, metric CSVs, run metadata, checkpoint.
//!
//! ```text
//! <dir>/config.toml      resolved configuration with the single seed of this run
//! <dir>/episodes.csv     EpisodeRecord rows
//! <dir>/steps.csv        StepRow rows for every training slot (if recorded)
//! <dir>/eval.csv         StepRow rows of the greedy evaluation
//! <dir>/run.json         RunRecord, the only file carrying wall-clock time
//! <dir>/checkpoint.json  agent parameters and optimizer state
//! ```

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::run::{eval_seeds, evaluate, mean_efficiency, train, EpisodeRecord, Policy, StepRow, TrainOutcome};
use crate::rl::agent::Agent;

pub const CONFIG_FILE: &str = "config.toml";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const STEPS_FILE: &str = "steps.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const RUN_FILE: &str = "run.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub seed: u64,
    pub config_hash: String,
    pub crate_version: String,
    pub episodes: usize,
    pub final_reward: f64,
    pub eval_efficiency: Option<f64>,
    pub wall_clock_seconds: f64,
}

pub fn write_csv<T: Serialize>(path: &Path, columns: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(columns)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Directory of one seed of an experiment.
pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed-{seed}"))
}

/// The configuration as stored in a run directory: one seed, nothing implicit.
pub fn single_seed(cfg: &ExperimentConfig, seed: u64) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.train.seeds = vec![seed];
    c
}

/// Trains `seed`, evaluates greedily on the held-out seeds and writes `dir`.
pub fn train_and_record(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<(TrainOutcome, RunRecord)> {
    let snapshot = single_seed(cfg, seed);
    let start = Instant::now();
    let outcome = train(&snapshot, seed)?;
    let eval = if snapshot.train.eval_episodes > 0 {
        Some(evaluate(&snapshot.effective_env(), &Policy::Agent(&outcome.agent), &eval_seeds(snapshot.train.eval_episodes))?)
    } else {
        None
    };
    let wall = start.elapsed().as_secs_f64();
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(CONFIG_FILE), snapshot.to_toml_string()?)?;
    write_csv(&dir.join(EPISODES_FILE), &EpisodeRecord::COLUMNS, &outcome.episodes)?;
    if snapshot.train.record_steps {
        write_csv(&dir.join(STEPS_FILE), &StepRow::COLUMNS, &outcome.steps)?;
    }
    if let Some(rows) = &eval {
        write_csv(&dir.join(EVAL_FILE), &StepRow::COLUMNS, rows)?;
    }
    if snapshot.train.save_checkpoint {
        outcome.agent.save(&dir.join(CHECKPOINT_FILE))?;
    }
    let record = RunRecord {
        name: snapshot.name.clone(),
        seed,
        config_hash: snapshot.hash()?,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        episodes: outcome.episodes.len(),
        final_reward: outcome.final_reward(snapshot.train.final_window),
        eval_efficiency: eval.as_deref().map(mean_efficiency),
        wall_clock_seconds: wall,
    };
    std::fs::write(dir.join(RUN_FILE), serde_json::to_string_pretty(&record)?)?;
    Ok((outcome, record))
}

/// Trains every seed of `cfg` under `<output_dir>/<name>/seed-<s>`.
pub fn train_all(cfg: &ExperimentConfig) -> Result<Vec<(PathBuf, RunRecord)>> {
    cfg.validate()?;
    let root = cfg.output_dir.join(&cfg.name);
    cfg.train
        .seeds
        .iter()
        .map(|&s| {
            let dir = seed_dir(&root, s);
            train_and_record(cfg, s, &dir).map(|(_, r)| (dir, r))
        })
        .collect()
}

/// Crosses one dotted key over `values` and every seed; runs land in
/// `<output_dir>/<name>/<key>=<value>/seed-<s>`.
pub fn sweep(cfg: &ExperimentConfig, key: &str, values: &[String]) -> Result<Vec<(PathBuf, RunRecord)>> {
    if values.is_empty() {
        return Err(Error::config(key, "sweep needs at least one value"));
    }
    let variants = values.iter().map(|v| cfg.with_override(key, v).map(|c| (v, c))).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (v, c) in variants {
        let root = cfg.output_dir.join(&cfg.name).join(format!("{key}={}", sanitize(v)));
        for &s in &c.train.seeds {
            let dir = seed_dir(&root, s);
            let (_, r) = train_and_record(&c, s, &dir)?;
            out.push((dir, r));
        }
    }
    Ok(out)
}

fn sanitize(v: &str) -> String {
    v.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.+".contains(c) { c } else { '_' }).collect()
}

/// Loads the configuration snapshot of a run directory.
pub fn load_run_config(dir: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(&dir.join(CONFIG_FILE))
}

/// Loads the agent of a run directory.
pub fn load_run_agent(dir: &Path) -> Result<(ExperimentConfig, Agent)> {
    let cfg = load_run_config(dir)?;
    let path = dir.join(CHECKPOINT_FILE);
    if !path.exists() {
        return Err(Error::Checkpoint(format!("missing checkpoint {}", path.display())));
    }
    let env = crate::env::Env::new(cfg.effective_env(), 0)?;
    let agent = Agent::load(&path, &cfg.agent, env.state_dim(), env.action_dim(), 0)?;
    Ok((cfg, agent))
}

/// Greedy evaluation of a stored agent on `episodes` held-out episodes; writes `eval.csv`.
pub fn evaluate_run(dir: &Path, episodes: usize) -> Result<Vec<StepRow>> {
    let (cfg, agent) = load_run_agent(dir)?;
    let rows = evaluate(&cfg.effective_env(), &Policy::Agent(&agent), &eval_seeds(episodes))?;
    write_csv(&dir.join(EVAL_FILE), &StepRow::COLUMNS, &rows)?;
    Ok(rows)
}

/// Re-executes a run from its snapshot into `out` and reports whether the
/// metric CSVs are byte-identical to the originals.
pub fn reproduce_run(dir: &Path, out: &Path) -> Result<bool> {
    let cfg = load_run_config(dir)?;
    let seed = cfg.train.seeds[0];
    train_and_record(&cfg, seed, out)?;
    for f in [EPISODES_FILE, STEPS_FILE, EVAL_FILE] {
        let (a, b) = (dir.join(f), out.join(f));
        if a.exists() != b.exists() {
            return Ok(false);
        }
        if a.exists() && std::fs::read(&a)? != std::fs::read(&b)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Every directory below `root` (inclusive) that holds a `run.json`, sorted.
pub fn find_runs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        if d.join(RUN_FILE).is_file() {
            out.push(d.clone());
        }
        for entry in std::fs::read_dir(&d)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// One tidy plot-data row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub run: String,
    pub seed: u64,
    pub protocol: String,
    pub agent: String,
    pub metric: String,
    pub x: usize,
    pub value: f64,
}

impl PlotRow {
    pub const COLUMNS: [&'static str; 7] = ["run", "seed", "protocol", "agent", "metric", "x", "value"];
}

/// Collects every run below `root` into tidy rows: per-episode reward and
/// efficiency, and per-step evaluation efficiency and reward.
pub fn plot_rows(root: &Path) -> Result<Vec<PlotRow>> {
    let runs = find_runs(root)?;
    if runs.is_empty() {
        return Err(Error::invalid(format!("no runs found under {}", root.display())));
    }
    let mut rows = Vec::new();
    for dir in runs {
        let cfg = load_run_config(&dir)?;
        let run = dir.strip_prefix(root).unwrap_or(&dir).to_string_lossy().replace('\\', "/");
        let run = if run.is_empty() { ".".to_string() } else { run };
        let seed = cfg.train.seeds[0];
        let protocol = cfg.env.protocol.label().to_string();
        let agent = cfg.agent.kind.label().to_string();
        let mut push = |metric: &str, x: usize, value: f64| {
            rows.push(PlotRow {
                run: run.clone(),
                seed,
                protocol: protocol.clone(),
                agent: agent.clone(),
                metric: metric.to_string(),
                x,
                value,
            })
        };
        for e in read_csv::<EpisodeRecord>(&dir.join(EPISODES_FILE))? {
            push("episode_reward", e.episode, e.reward);
            push("episode_efficiency", e.episode, e.mean_efficiency);
        }
        let eval = dir.join(EVAL_FILE);
        if eval.exists() {
            for (i, s) in read_csv::<StepRow>(&eval)?.into_iter().enumerate() {
                push("eval_efficiency", i, s.efficiency);
                push("eval_reward", i, s.reward);
            }
        }
    }
    Ok(rows)
}

pub fn export_plots(root: &Path, out: &Path) -> Result<usize> {
    let rows = plot_rows(root)?;
    write_csv(out, &PlotRow::COLUMNS, &rows)?;
    Ok(rows.len())
}
