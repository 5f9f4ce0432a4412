//! Training and evaluation loops.

use serde::{Deserialize, Serialize};

use crate::env::{Env, EnvConfig, SlotReport};
use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::rl::agent::Agent;
use crate::rl::replay::{ReplayBuffer, Transition};
use crate::rl::search::{exhaustive_search, SearchConfig};
use crate::rng;

/// One CSV row per slot. Column order is the field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub episode: usize,
    pub step: usize,
    pub incident_rf_energy: f64,
    pub eh_input_energy: f64,
    pub harvested_rf_energy: f64,
    pub harvested_solar_energy: f64,
    pub consumed_energy: f64,
    pub overflow: f64,
    pub causality_violated: bool,
    pub battery_level: f64,
    pub efficiency: f64,
    pub reward: f64,
    pub qos_violations: usize,
    pub min_rate: f64,
    /// Per-node rates joined with `;`.
    pub rates: String,
}

impl StepRow {
    pub const COLUMNS: [&'static str; 15] = [
        "episode",
        "step",
        "incident_rf_energy",
        "eh_input_energy",
        "harvested_rf_energy",
        "harvested_solar_energy",
        "consumed_energy",
        "overflow",
        "causality_violated",
        "battery_level",
        "efficiency",
        "reward",
        "qos_violations",
        "min_rate",
        "rates",
    ];

    pub fn from_report(episode: usize, r: &SlotReport) -> Self {
        StepRow {
            episode,
            step: r.step,
            incident_rf_energy: r.incident_rf_energy,
            eh_input_energy: r.eh_input_energy,
            harvested_rf_energy: r.harvested_rf_energy,
            harvested_solar_energy: r.harvested_solar_energy,
            consumed_energy: r.consumed_energy,
            overflow: r.overflow,
            causality_violated: r.causality_violated,
            battery_level: r.battery_level,
            efficiency: r.efficiency,
            reward: r.reward,
            qos_violations: r.qos_violations(),
            min_rate: r.rates.iter().copied().fold(f64::INFINITY, f64::min),
            rates: r.rates.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";"),
        }
    }
}

/// Per-episode training summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub steps: usize,
    /// Sum of slot rewards.
    pub reward: f64,
    pub mean_efficiency: f64,
    pub qos_violations: usize,
    pub causality_violations: usize,
    pub overflow: f64,
    pub final_battery: f64,
}

impl EpisodeRecord {
    pub const COLUMNS: [&'static str; 8] = [
        "episode",
        "steps",
        "reward",
        "mean_efficiency",
        "qos_violations",
        "causality_violations",
        "overflow",
        "final_battery",
    ];

    fn from_reports(episode: usize, reports: &[SlotReport]) -> Self {
        let n = reports.len().max(1) as f64;
        EpisodeRecord {
            episode,
            steps: reports.len(),
            reward: reports.iter().map(|r| r.reward).sum(),
            mean_efficiency: reports.iter().map(|r| r.efficiency).sum::<f64>() / n,
            qos_violations: reports.iter().map(|r| r.qos_violations()).sum(),
            causality_violations: reports.iter().filter(|r| r.causality_violated).count(),
            overflow: reports.iter().map(|r| r.overflow).sum(),
            final_battery: reports.last().map(|r| r.battery_level).unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub seed: u64,
    pub agent: Agent,
    pub episodes: Vec<EpisodeRecord>,
    pub steps: Vec<StepRow>,
}

impl TrainOutcome {
    /// Mean episode reward over the last `window` episodes.
    pub fn final_reward(&self, window: usize) -> f64 {
        final_mean(&self.episodes, window)
    }
}

pub fn final_mean(episodes: &[EpisodeRecord], window: usize) -> f64 {
    let tail = &episodes[episodes.len().saturating_sub(window)..];
    tail.iter().map(|e| e.reward).sum::<f64>() / tail.len().max(1) as f64
}

/// Seed of training episode `episode` of a run seeded with `seed`.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    rng::mix(seed, episode as u64)
}

/// Held-out environment seeds shared by every evaluation.
pub fn eval_seeds(n: usize) -> Vec<u64> {
    (0..n).map(|i| rng::mix(0x5EED_E7A1_0000_0000, i as u64)).collect()
}

/// Trains one agent with the effective environment of `cfg`.
pub fn train(cfg: &ExperimentConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let env_cfg = cfg.effective_env();
    let mut env = Env::new(env_cfg.clone(), episode_seed(seed, 0))?;
    let mut agent = Agent::new(cfg.agent.clone(), env.state_dim(), env.action_dim(), rng::mix(seed, 0xA6E7))?;
    let mut buffer = ReplayBuffer::new(cfg.agent.buffer_capacity)?;
    let mut episodes = Vec::with_capacity(cfg.train.episodes);
    let mut steps = Vec::new();
    let mut total = 0usize;
    for ep in 0..cfg.train.episodes {
        let mut state = env.reset(episode_seed(seed, ep))?;
        let mut reports = Vec::with_capacity(env_cfg.slots);
        loop {
            let raw = if total < cfg.agent.warmup_steps { agent.random_action() } else { agent.act(&state, true)? };
            let out = env.step_raw(&raw)?;
            // Running out of slots is a truncation, not a terminal state.
            let terminal = out.done && env.t() < env_cfg.slots;
            buffer.push(Transition { state, action: raw, reward: out.reward, next_state: out.state.clone(), done: terminal });
            total += 1;
            if total >= cfg.agent.warmup_steps && buffer.len() >= cfg.agent.batch_size && total % cfg.train.train_every == 0 {
                agent.train_step(&buffer)?;
            }
            if cfg.train.record_steps {
                steps.push(StepRow::from_report(ep, &out.report));
            }
            reports.push(out.report);
            state = out.state;
            if out.done {
                break;
            }
        }
        episodes.push(EpisodeRecord::from_reports(ep, &reports));
    }
    Ok(TrainOutcome { seed, agent, episodes, steps })
}

/// How actions are chosen during evaluation.
pub enum Policy<'a> {
    /// Greedy actor output.
    Agent(&'a Agent),
    /// Per-slot coarse-grid search on the slot oracle.
    Search(&'a SearchConfig),
    /// The same raw action every slot.
    Fixed(Vec<f64>),
}

/// Runs one full episode per seed (never stopping early on an empty battery)
/// and returns every slot.
pub fn evaluate(env_cfg: &EnvConfig, policy: &Policy, seeds: &[u64]) -> Result<Vec<StepRow>> {
    let cfg = EnvConfig { terminate_on_empty: false, ..env_cfg.clone() };
    let mut rows = Vec::with_capacity(seeds.len() * cfg.slots);
    for (i, &seed) in seeds.iter().enumerate() {
        let mut env = Env::new(cfg.clone(), seed)?;
        loop {
            let out = match policy {
                Policy::Agent(agent) => {
                    let raw = agent.act_greedy(&env.state())?;
                    env.step_raw(&raw)?
                }
                Policy::Search(sc) => {
                    let best = exhaustive_search(&env, sc)?;
                    env.step(&best.action)?
                }
                Policy::Fixed(raw) => env.step_raw(raw)?,
            };
            rows.push(StepRow::from_report(i, &out.report));
            if out.done {
                break;
            }
        }
    }
    Ok(rows)
}

pub fn mean_efficiency(rows: &[StepRow]) -> f64 {
    rows.iter().map(|r| r.efficiency).sum::<f64>() / rows.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::agent::{AgentConfig, AgentKind};

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.env = EnvConfig { antennas: 2, elements: 4, nodes: 2, slots: 10, ..EnvConfig::default() };
        cfg.agent = AgentConfig { hidden: vec![8], batch_size: 8, warmup_steps: 10, ..AgentConfig::preset(AgentKind::DdpgEh) };
        cfg.train.episodes = 3;
        cfg
    }

    #[test]
    fn one_episode_gives_t_rows() {
        let mut cfg = tiny();
        cfg.train.episodes = 1;
        let out = train(&cfg, 0).unwrap();
        assert_eq!(out.steps.len(), 10);
        assert_eq!(out.episodes.len(), 1);
        let sum: f64 = out.steps.iter().map(|s| s.reward).sum();
        assert!((out.episodes[0].reward - sum).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic() {
        let a = train(&tiny(), 5).unwrap();
        let b = train(&tiny(), 5).unwrap();
        assert_eq!(a.episodes, b.episodes);
        assert_eq!(a.steps, b.steps);
        let c = train(&tiny(), 6).unwrap();
        assert_ne!(a.episodes, c.episodes);
    }

    #[test]
    fn evaluation_covers_every_slot() {
        let cfg = tiny();
        let out = train(&cfg, 1).unwrap();
        let seeds = eval_seeds(3);
        let rows = evaluate(&cfg.env, &Policy::Agent(&out.agent), &seeds).unwrap();
        assert_eq!(rows.len(), 30);
        let fixed = evaluate(&cfg.env, &Policy::Fixed(vec![0.0; out.agent.action_dim()]), &seeds).unwrap();
        assert_eq!(fixed.len(), 30);
        assert!((0.0..=1.0).contains(&mean_efficiency(&rows)));
    }

    #[test]
    fn final_mean_uses_tail() {
        let mk = |r: f64| EpisodeRecord {
            episode: 0,
            steps: 1,
            reward: r,
            mean_efficiency: 0.0,
            qos_violations: 0,
            causality_violations: 0,
            overflow: 0.0,
            final_battery: 0.0,
        };
        let eps = vec![mk(100.0), mk(1.0), mk(3.0)];
        assert_eq!(final_mean(&eps, 2), 2.0);
        assert_eq!(final_mean(&eps, 10), 104.0 / 3.0);
    }
}
