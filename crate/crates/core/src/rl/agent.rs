//! Actor-critic agents. DDPG-EH runs several independent actor-critic pairs on
//! a shared replay buffer; TD3 and DDPG are the single-pair special cases.

use std::path::Path;

use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rl::mlp::{flatten, soft_update, unflatten_into, Activation, Adam, Mlp};
use crate::rl::replay::{Batch, ReplayBuffer};
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    #[serde(rename = "ddpg-eh")]
    DdpgEh,
    #[serde(rename = "td3")]
    Td3,
    #[serde(rename = "ddpg")]
    Ddpg,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::DdpgEh, AgentKind::Td3, AgentKind::Ddpg];

    pub fn label(self) -> &'static str {
        match self {
            AgentKind::DdpgEh => "ddpg-eh",
            AgentKind::Td3 => "td3",
            AgentKind::Ddpg => "ddpg",
        }
    }
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ddpg-eh" | "ddpg_eh" | "ddpgeh" => Ok(AgentKind::DdpgEh),
            "td3" => Ok(AgentKind::Td3),
            "ddpg" => Ok(AgentKind::Ddpg),
            other => Err(Error::invalid(format!("unknown agent kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub kind: AgentKind,
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub soft_update_rate: f64,
    /// Actor and target updates happen on every `policy_delay`-th train call.
    pub policy_delay: usize,
    pub explore_noise: f64,
    pub target_noise: f64,
    pub target_clip: f64,
    /// Softmax temperature over the sampled target values.
    pub softmax_beta: f64,
    /// Target actions sampled per next state (DDPG-EH only).
    pub target_samples: usize,
    /// Actor-critic pairs (DDPG-EH only).
    pub pairs: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Uniformly random actions taken before the policy is used.
    pub warmup_steps: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig::preset(AgentKind::DdpgEh)
    }
}

impl AgentConfig {
    pub fn preset(kind: AgentKind) -> Self {
        let base = AgentConfig {
            kind,
            hidden: vec![256, 256],
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            gamma: 0.99,
            soft_update_rate: 5e-3,
            policy_delay: 2,
            explore_noise: 0.1,
            target_noise: 0.2,
            target_clip: 0.5,
            softmax_beta: 1.0,
            target_samples: 8,
            pairs: 2,
            batch_size: 128,
            buffer_capacity: 100_000,
            warmup_steps: 1_000,
        };
        match kind {
            AgentKind::DdpgEh => base,
            AgentKind::Td3 => AgentConfig { pairs: 1, target_samples: 1, ..base },
            AgentKind::Ddpg => AgentConfig { pairs: 1, target_samples: 1, policy_delay: 1, target_noise: 0.0, ..base },
        }
    }

    /// Same hyperparameters, different algorithm.
    pub fn with_kind(&self, kind: AgentKind) -> Self {
        let p = AgentConfig::preset(kind);
        AgentConfig {
            kind,
            pairs: p.pairs,
            target_samples: p.target_samples,
            policy_delay: if kind == AgentKind::Ddpg { 1 } else { self.policy_delay },
            target_noise: if kind == AgentKind::Ddpg { 0.0 } else { self.target_noise },
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |path: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("agent.{path}"), "must be > 0"))
            }
        };
        let nonneg = |path: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("agent.{path}"), "must be >= 0"))
            }
        };
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("agent.hidden", "need at least one non-zero hidden layer"));
        }
        pos("actor_lr", self.actor_lr)?;
        pos("critic_lr", self.critic_lr)?;
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("agent.gamma", "must lie in (0, 1)"));
        }
        if !(self.soft_update_rate > 0.0 && self.soft_update_rate <= 1.0) {
            return Err(Error::config("agent.soft_update_rate", "must lie in (0, 1]"));
        }
        nonneg("explore_noise", self.explore_noise)?;
        nonneg("target_noise", self.target_noise)?;
        nonneg("target_clip", self.target_clip)?;
        nonneg("softmax_beta", self.softmax_beta)?;
        for (path, v) in [
            ("policy_delay", self.policy_delay),
            ("target_samples", self.target_samples),
            ("pairs", self.pairs),
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
        ] {
            if v == 0 {
                return Err(Error::config(format!("agent.{path}"), "must be >= 1"));
            }
        }
        if self.kind != AgentKind::DdpgEh && (self.pairs != 1 || self.target_samples != 1) {
            return Err(Error::config("agent.pairs", "td3 and ddpg use a single pair with one target sample"));
        }
        if self.batch_size > self.buffer_capacity {
            return Err(Error::config("agent.batch_size", "must not exceed buffer_capacity"));
        }
        Ok(())
    }

    fn critics_per_pair(&self) -> usize {
        if self.kind == AgentKind::Ddpg {
            1
        } else {
            2
        }
    }

    fn smooth_targets(&self) -> bool {
        self.kind != AgentKind::Ddpg
    }
}

/// Temperature-weighted average `sum q e^{beta q} / sum e^{beta q}`.
pub fn softmax_value(q: &[f64], beta: f64) -> Result<f64> {
    if q.is_empty() {
        return Err(Error::invalid("softmax_value of an empty vector"));
    }
    if !(beta.is_finite() && beta >= 0.0) || q.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("softmax_value needs finite q and beta >= 0"));
    }
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for &v in q {
        let w = (beta * (v - max)).exp();
        num += v * w;
        den += w;
    }
    Ok(num / den)
}

#[derive(Debug, Clone)]
struct Pair {
    actor: Mlp,
    actor_target: Mlp,
    actor_opt: Adam,
    critics: Vec<Mlp>,
    critic_targets: Vec<Mlp>,
    critic_opts: Vec<Adam>,
}

/// Targets of one pair together with the quantities they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetLog {
    pub targets: Vec<f64>,
    /// `n x M` minimum-over-critics target values.
    pub q_samples: Vec<Vec<f64>>,
    /// `(n M) x D` sampled target actions, row `i M + m`.
    pub actions: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainDiagnostics {
    /// Per pair, per critic.
    pub critic_loss: Vec<Vec<f64>>,
    /// Mean of `-Q(s, actor(s))` per pair, on policy-update calls.
    pub actor_loss: Option<Vec<f64>>,
    pub q_mean: f64,
    pub q_max: f64,
}

impl TrainDiagnostics {
    pub fn is_finite(&self) -> bool {
        self.critic_loss.iter().flatten().all(|v| v.is_finite())
            && self.actor_loss.iter().flatten().all(|v| v.is_finite())
            && self.q_mean.is_finite()
            && self.q_max.is_finite()
    }

    pub fn mean_critic_loss(&self) -> f64 {
        let all: Vec<f64> = self.critic_loss.iter().flatten().copied().collect();
        all.iter().sum::<f64>() / all.len().max(1) as f64
    }
}

/// One actor's proposal and its own critic's score.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub action: Vec<f64>,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct Agent {
    cfg: AgentConfig,
    state_dim: usize,
    action_dim: usize,
    pairs: Vec<Pair>,
    rng: SimRng,
    train_calls: u64,
}

impl Agent {
    pub fn new(cfg: AgentConfig, state_dim: usize, action_dim: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::invalid("state and action dimensions must be >= 1"));
        }
        let mut pairs = Vec::with_capacity(cfg.pairs);
        for p in 0..cfg.pairs {
            let mut init = rng::stream(seed, 100 + p as u64);
            let mut actor_sizes = vec![state_dim];
            actor_sizes.extend(&cfg.hidden);
            actor_sizes.push(action_dim);
            let mut critic_sizes = vec![state_dim + action_dim];
            critic_sizes.extend(&cfg.hidden);
            critic_sizes.push(1);
            let actor = Mlp::new(&actor_sizes, Activation::Relu, Activation::Tanh, Some(3e-3), &mut init)?;
            let critics = (0..cfg.critics_per_pair())
                .map(|_| Mlp::new(&critic_sizes, Activation::Relu, Activation::Identity, Some(3e-3), &mut init))
                .collect::<Result<Vec<_>>>()?;
            pairs.push(Pair {
                actor_target: actor.clone(),
                actor_opt: Adam::new(&actor, cfg.actor_lr),
                critic_targets: critics.clone(),
                critic_opts: critics.iter().map(|c| Adam::new(c, cfg.critic_lr)).collect(),
                actor,
                critics,
            });
        }
        Ok(Agent { rng: rng::stream(seed, 200), cfg, state_dim, action_dim, pairs, train_calls: 0 })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn kind(&self) -> AgentKind {
        self.cfg.kind
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn train_calls(&self) -> u64 {
        self.train_calls
    }

    pub fn actor(&self, pair: usize) -> &Mlp {
        &self.pairs[pair].actor
    }

    pub fn actor_mut(&mut self, pair: usize) -> &mut Mlp {
        &mut self.pairs[pair].actor
    }

    pub fn critic(&self, pair: usize, critic: usize) -> &Mlp {
        &self.pairs[pair].critics[critic]
    }

    pub fn critic_mut(&mut self, pair: usize, critic: usize) -> &mut Mlp {
        &mut self.pairs[pair].critics[critic]
    }

    pub fn target_actor(&self, pair: usize) -> &Mlp {
        &self.pairs[pair].actor_target
    }

    pub fn target_critic(&self, pair: usize, critic: usize) -> &Mlp {
        &self.pairs[pair].critic_targets[critic]
    }

    /// Makes every target network a copy of its main network.
    pub fn sync_targets(&mut self) {
        for p in &mut self.pairs {
            p.actor_target = p.actor.clone();
            p.critic_targets = p.critics.clone();
        }
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.state_dim {
            return Err(Error::invalid(format!("state has {} entries, expected {}", state.len(), self.state_dim)));
        }
        Ok(())
    }

    /// Every actor's proposal scored by the first critic of its own pair.
    pub fn proposals(&self, state: &[f64]) -> Result<Vec<Proposal>> {
        self.check_state(state)?;
        Ok(self
            .pairs
            .iter()
            .map(|p| {
                let action = p.actor.forward_one(state);
                let mut sa = state.to_vec();
                sa.extend_from_slice(&action);
                let score = p.critics[0].forward_one(&sa)[0];
                Proposal { action, score }
            })
            .collect())
    }

    /// Highest-scored proposal; ties go to the lower pair index.
    pub fn act_greedy(&self, state: &[f64]) -> Result<Vec<f64>> {
        let props = self.proposals(state)?;
        let best = (1..props.len()).fold(0, |b, i| if props[i].score > props[b].score { i } else { b });
        Ok(props.into_iter().nth(best).expect("at least one pair").action)
    }

    pub fn act(&mut self, state: &[f64], explore: bool) -> Result<Vec<f64>> {
        let mut a = self.act_greedy(state)?;
        if explore && self.cfg.explore_noise > 0.0 {
            for v in &mut a {
                let n: f64 = self.rng.sample(StandardNormal);
                *v = (*v + self.cfg.explore_noise * n).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }

    /// Uniform action in `[-1, 1]^D` from the agent's own stream.
    pub fn random_action(&mut self) -> Vec<f64> {
        (0..self.action_dim).map(|_| self.rng.random_range(-1.0..=1.0)).collect()
    }

    /// Bellman targets for every pair, drawing target-smoothing noise from the agent stream.
    pub fn target_q(&mut self, batch: &Batch) -> Result<Vec<TargetLog>> {
        if batch.is_empty() {
            return Err(Error::invalid("target_q on an empty batch"));
        }
        let mut logs = Vec::with_capacity(self.pairs.len());
        for p in 0..self.pairs.len() {
            let log = self.pair_target(p, batch)?;
            logs.push(log);
        }
        Ok(logs)
    }

    fn pair_target(&mut self, p: usize, batch: &Batch) -> Result<TargetLog> {
        let n = batch.len();
        let m = self.cfg.target_samples;
        let d = self.action_dim;
        let smooth = self.cfg.smooth_targets() && self.cfg.target_noise > 0.0;
        let (sigma, clip) = (self.cfg.target_noise, self.cfg.target_clip);
        let base = self.pairs[p].actor_target.forward(&batch.next_states);
        let mut actions = Array2::zeros((n * m, d));
        for i in 0..n {
            for k in 0..m {
                for j in 0..d {
                    let eps = if smooth {
                        let z: f64 = self.rng.sample(StandardNormal);
                        (sigma * z).clamp(-clip, clip)
                    } else {
                        0.0
                    };
                    actions[[i * m + k, j]] = (base[[i, j]] + eps).clamp(-1.0, 1.0);
                }
            }
        }
        let states = if m == 1 { batch.next_states.clone() } else { repeat_rows(&batch.next_states, m) };
        let input = concatenate![Axis(1), states, actions];
        let pair = &self.pairs[p];
        let mut q_min = pair.critic_targets[0].forward(&input).column(0).to_vec();
        for c in &pair.critic_targets[1..] {
            for (a, b) in q_min.iter_mut().zip(c.forward(&input).column(0)) {
                *a = a.min(*b);
            }
        }
        let mut targets = Vec::with_capacity(n);
        let mut q_samples = Vec::with_capacity(n);
        for i in 0..n {
            let qs = q_min[i * m..(i + 1) * m].to_vec();
            let v = softmax_value(&qs, self.cfg.softmax_beta)?;
            let cont = if batch.dones[i] { 0.0 } else { 1.0 };
            targets.push(batch.rewards[i] + cont * self.cfg.gamma * v);
            q_samples.push(qs);
        }
        Ok(TargetLog { targets, q_samples, actions })
    }

    /// One critic regression for every pair; actors and targets move on every
    /// `policy_delay`-th call.
    pub fn train_step(&mut self, buffer: &ReplayBuffer) -> Result<TrainDiagnostics> {
        let batch = buffer.sample(self.cfg.batch_size, &mut self.rng)?;
        self.train_on_batch(&batch)
    }

    pub fn train_on_batch(&mut self, batch: &Batch) -> Result<TrainDiagnostics> {
        if batch.states.ncols() != self.state_dim || batch.actions.ncols() != self.action_dim {
            return Err(Error::invalid("batch dimensions do not match the agent"));
        }
        let logs = self.target_q(batch)?;
        self.train_calls += 1;
        let update_policy = self.train_calls % self.cfg.policy_delay as u64 == 0;
        let n = batch.len() as f64;
        let sa = concatenate![Axis(1), batch.states, batch.actions];
        let mut critic_loss = Vec::with_capacity(self.pairs.len());
        let (mut q_sum, mut q_count, mut q_max) = (0.0, 0usize, f64::NEG_INFINITY);
        for (pair, log) in self.pairs.iter_mut().zip(&logs) {
            let mut losses = Vec::with_capacity(pair.critics.len());
            for (critic, opt) in pair.critics.iter_mut().zip(pair.critic_opts.iter_mut()) {
                let cache = critic.forward_cached(&sa);
                let q = cache.output().column(0).to_owned();
                let mut grad = Array2::zeros((batch.len(), 1));
                let mut loss = 0.0;
                for i in 0..batch.len() {
                    let e = q[i] - log.targets[i];
                    loss += e * e / n;
                    grad[[i, 0]] = 2.0 * e / n;
                    q_sum += q[i];
                    q_max = q_max.max(q[i]);
                }
                q_count += batch.len();
                let (g, _) = critic.backward(&cache, &grad);
                opt.step(critic, &g);
                losses.push(loss);
            }
            critic_loss.push(losses);
        }
        let mut actor_loss = None;
        if update_policy {
            let sd = self.state_dim;
            let rate = self.cfg.soft_update_rate;
            let mut losses = Vec::with_capacity(self.pairs.len());
            for pair in &mut self.pairs {
                let a_cache = pair.actor.forward_cached(&batch.states);
                let input = concatenate(Axis(1), &[batch.states.view(), a_cache.output().view()]).expect("same rows");
                let c_cache = pair.critics[0].forward_cached(&input);
                losses.push(-c_cache.output().mean().unwrap_or(0.0));
                let ones = Array2::from_elem((batch.len(), 1), -1.0 / n);
                let (_, g_in) = pair.critics[0].backward(&c_cache, &ones);
                let g_a = g_in.slice(s![.., sd..]).to_owned();
                let (g, _) = pair.actor.backward(&a_cache, &g_a);
                pair.actor_opt.step(&mut pair.actor, &g);
                soft_update(&mut pair.actor_target, &pair.actor, rate);
                for (t, c) in pair.critic_targets.iter_mut().zip(&pair.critics) {
                    soft_update(t, c, rate);
                }
            }
            actor_loss = Some(losses);
        }
        Ok(TrainDiagnostics { critic_loss, actor_loss, q_mean: q_sum / q_count.max(1) as f64, q_max })
    }

    /// Hash of the configuration and dimensions; checkpoints only load into a matching agent.
    pub fn config_hash(&self) -> String {
        config_hash(&self.cfg, self.state_dim, self.action_dim)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut nets = Vec::new();
        let mut optimizers = Vec::new();
        for p in &self.pairs {
            nets.push(p.actor.flat_params());
            nets.push(p.actor_target.flat_params());
            optimizers.push(OptState::of(&p.actor_opt));
            for (c, t) in p.critics.iter().zip(&p.critic_targets) {
                nets.push(c.flat_params());
                nets.push(t.flat_params());
            }
            optimizers.extend(p.critic_opts.iter().map(OptState::of));
        }
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            config_hash: self.config_hash(),
            config: self.cfg.clone(),
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            train_calls: self.train_calls,
            nets,
            optimizers,
        }
    }

    /// Rebuilds an agent from a checkpoint; the stored hash must match the stored config.
    pub fn from_checkpoint(ck: &Checkpoint, seed: u64) -> Result<Self> {
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {} is not supported (expected {CHECKPOINT_VERSION})",
                ck.format_version
            )));
        }
        let mut agent = Agent::new(ck.config.clone(), ck.state_dim, ck.action_dim, seed)?;
        if agent.config_hash() != ck.config_hash {
            return Err(Error::Checkpoint("config hash mismatch".into()));
        }
        let mut nets = ck.nets.iter();
        let mut opts = ck.optimizers.iter();
        let mut next_net = |m: &mut Mlp| -> Result<()> {
            m.set_flat_params(nets.next().ok_or_else(|| Error::Checkpoint("missing network".into()))?)
        };
        for p in &mut agent.pairs {
            next_net(&mut p.actor)?;
            next_net(&mut p.actor_target)?;
            for (c, t) in p.critics.iter_mut().zip(p.critic_targets.iter_mut()) {
                next_net(c)?;
                next_net(t)?;
            }
        }
        for p in &mut agent.pairs {
            let all = std::iter::once(&mut p.actor_opt).chain(p.critic_opts.iter_mut());
            for opt in all {
                opts.next().ok_or_else(|| Error::Checkpoint("missing optimizer state".into()))?.restore(opt)?;
            }
        }
        agent.train_calls = ck.train_calls;
        Ok(agent)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Loads a checkpoint and rejects it unless it was written for `expected`.
    pub fn load(path: &Path, expected: &AgentConfig, state_dim: usize, action_dim: usize, seed: u64) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.config_hash != config_hash(expected, state_dim, action_dim) {
            return Err(Error::Checkpoint(format!("{} was written for a different configuration", path.display())));
        }
        Agent::from_checkpoint(&ck, seed)
    }

    /// Loads a checkpoint using the configuration stored inside it.
    pub fn load_any(path: &Path, seed: u64) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        Agent::from_checkpoint(&ck, seed)
    }
}

fn repeat_rows(x: &Array2<f64>, m: usize) -> Array2<f64> {
    let (n, d) = x.dim();
    Array2::from_shape_fn((n * m, d), |(r, c)| x[[r / m, c]])
}

pub const CHECKPOINT_VERSION: u32 = 1;

pub fn config_hash(cfg: &AgentConfig, state_dim: usize, action_dim: usize) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg).expect("config serializes"));
    h.update(state_dim.to_le_bytes());
    h.update(action_dim.to_le_bytes());
    hex::encode(h.finalize())
}

/// JSON checkpoint. Networks are stored per pair as actor, target actor, then
/// each critic followed by its target, all flattened layer by layer (weights
/// row-major, then biases). Optimizer states follow the same order without
/// the targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config_hash: String,
    pub config: AgentConfig,
    pub state_dim: usize,
    pub action_dim: usize,
    pub train_calls: u64,
    pub nets: Vec<Vec<f64>>,
    pub optimizers: Vec<OptState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl OptState {
    fn of(a: &Adam) -> Self {
        OptState { t: a.t, m: flatten(&a.m), v: flatten(&a.v) }
    }

    fn restore(&self, a: &mut Adam) -> Result<()> {
        a.t = self.t;
        unflatten_into(&mut a.m, &self.m)?;
        unflatten_into(&mut a.v, &self.v)
    }
}
