//! The three ordering experiments: protocols with and without renewables,
//! algorithms against the coarse-grid oracle, and impairment ablations.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::energy::EhProtocol;
use crate::error::{Error, Result};
use crate::harness::config::{Ablation, ExperimentConfig};
use crate::harness::run::{eval_seeds, evaluate, mean_efficiency, train, Policy, StepRow};
use crate::rl::agent::{Agent, AgentKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReproduceConfig {
    /// Training seeds (a prefix of `train.seeds`) used for the algorithm comparison.
    pub algorithm_seeds: usize,
    /// Training seeds used for the impairment comparison.
    pub impairment_seeds: usize,
    /// Wall-clock limit for the protocol runs with renewables, seconds.
    pub protocol_budget_seconds: f64,
    /// Minimum relative gap of HYBRID over TS.
    pub hybrid_over_ts: f64,
    /// Maximum relative shortfall of DDPG-EH against the grid oracle.
    pub oracle_gap: f64,
}

impl Default for ReproduceConfig {
    fn default() -> Self {
        ReproduceConfig {
            algorithm_seeds: 3,
            impairment_seeds: 3,
            protocol_budget_seconds: 1800.0,
            hybrid_over_ts: 0.10,
            oracle_gap: 0.15,
        }
    }
}

impl ReproduceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.algorithm_seeds == 0 || self.impairment_seeds == 0 {
            return Err(Error::config("reproduce", "seed counts must be >= 1"));
        }
        if !(self.protocol_budget_seconds > 0.0) {
            return Err(Error::config("reproduce.protocol_budget_seconds", "must be > 0"));
        }
        if !(self.hybrid_over_ts >= 0.0 && self.oracle_gap >= 0.0) {
            return Err(Error::config("reproduce", "relative margins must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub criterion: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolRun {
    pub protocol: EhProtocol,
    pub renewable: bool,
    pub seed: u64,
    pub final_reward: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledScores {
    pub label: String,
    /// Mean evaluation efficiency per training seed (one entry for the oracle).
    pub per_seed: Vec<f64>,
}

impl LabeledScores {
    pub fn mean(&self) -> f64 {
        self.per_seed.iter().sum::<f64>() / self.per_seed.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProtocolExperiment {
    pub runs: Vec<ProtocolRun>,
    pub seconds_with_re: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreExperiment {
    pub scores: Vec<LabeledScores>,
    pub slots: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReproduceReport {
    pub protocols: ProtocolExperiment,
    pub algorithms: ScoreExperiment,
    pub impairments: ScoreExperiment,
    pub checks: Vec<Check>,
}

impl ReproduceReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, criterion: u8) -> Option<&Check> {
        self.checks.iter().find(|c| c.criterion == criterion)
    }
}

impl ProtocolExperiment {
    pub fn seed_mean(&self, protocol: EhProtocol, renewable: bool) -> f64 {
        let v: Vec<f64> = self
            .runs
            .iter()
            .filter(|r| r.protocol == protocol && r.renewable == renewable)
            .map(|r| r.final_reward)
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }

    fn reward(&self, protocol: EhProtocol, renewable: bool, seed: u64) -> Option<f64> {
        self.runs
            .iter()
            .find(|r| r.protocol == protocol && r.renewable == renewable && r.seed == seed)
            .map(|r| r.final_reward)
    }
}

/// Relative gap `(a - b) / |b|`; infinite when `b` is zero and `a` exceeds it.
fn relative_gap(a: f64, b: f64) -> f64 {
    if b != 0.0 {
        (a - b) / b.abs()
    } else if a > b {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Names the first adjacent pair of `items` (label, value) that breaks `ok`.
fn first_violation(items: &[(&str, f64)], ok: impl Fn(f64, f64) -> bool, op: &str) -> Option<String> {
    items.windows(2).find(|w| !ok(w[0].1, w[1].1)).map(|w| format!("violated: {} {op} {}", w[0].0, w[1].0))
}

fn fmt_chain(items: &[(&str, f64)], op: &str) -> String {
    items.iter().map(|(l, v)| format!("{l}={v:.4}")).collect::<Vec<_>>().join(&format!(" {op} "))
}

pub fn protocol_checks(exp: &ProtocolExperiment, seeds: &[u64], rc: &ReproduceConfig) -> Vec<Check> {
    let (ts, ps, hy) = (
        exp.seed_mean(EhProtocol::TimeSwitching, true),
        exp.seed_mean(EhProtocol::PowerSplitting, true),
        exp.seed_mean(EhProtocol::Hybrid, true),
    );
    let chain = [("HYBRID", hy), ("PS", ps), ("TS", ts)];
    let gap = relative_gap(hy, ts);
    let mut problems = Vec::new();
    if let Some(v) = first_violation(&chain, |a, b| a > b, ">") {
        problems.push(v);
    }
    if gap < rc.hybrid_over_ts {
        problems.push(format!("HYBRID over TS by {:.1}% < {:.0}%", 100.0 * gap, 100.0 * rc.hybrid_over_ts));
    }
    if exp.seconds_with_re >= rc.protocol_budget_seconds {
        problems.push(format!("took {:.0}s, budget {:.0}s", exp.seconds_with_re, rc.protocol_budget_seconds));
    }
    let c1 = Check {
        criterion: 1,
        name: "protocol ordering".into(),
        passed: problems.is_empty(),
        detail: format!(
            "{}; HYBRID over TS {:+.1}%; {:.0}s{}",
            fmt_chain(&chain, ">"),
            100.0 * gap,
            exp.seconds_with_re,
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    };
    let need = (2 * seeds.len()).div_ceil(3);
    let mut parts = Vec::new();
    let mut ok = true;
    for p in EhProtocol::ALL {
        let wins = seeds
            .iter()
            .filter(|&&s| match (exp.reward(p, true, s), exp.reward(p, false, s)) {
                (Some(a), Some(b)) => a >= b,
                _ => false,
            })
            .count();
        ok &= wins >= need;
        parts.push(format!("{p}: {wins}/{} seeds (RE {:.3} vs {:.3})", seeds.len(), exp.seed_mean(p, true), exp.seed_mean(p, false)));
    }
    let c2 = Check {
        criterion: 2,
        name: "renewable uplift".into(),
        passed: ok,
        detail: format!("need {need}/{}; {}", seeds.len(), parts.join("; ")),
    };
    vec![c1, c2]
}

pub fn algorithm_checks(exp: &ScoreExperiment, rc: &ReproduceConfig) -> Check {
    let get = |l: &str| exp.scores.iter().find(|s| s.label == l).map(|s| s.mean()).unwrap_or(f64::NAN);
    let chain = [("search", get("search")), ("ddpg-eh", get("ddpg-eh")), ("td3", get("td3")), ("ddpg", get("ddpg"))];
    let shortfall = (chain[0].1 - chain[1].1) / chain[0].1.abs().max(f64::MIN_POSITIVE);
    let mut problems = Vec::new();
    if let Some(v) = first_violation(&chain, |a, b| a >= b, ">=") {
        problems.push(v);
    }
    if !(shortfall <= rc.oracle_gap) {
        problems.push(format!("ddpg-eh {:.1}% below search > {:.0}%", 100.0 * shortfall, 100.0 * rc.oracle_gap));
    }
    Check {
        criterion: 3,
        name: "algorithm ordering".into(),
        passed: problems.is_empty(),
        detail: format!(
            "{} over {} slots; ddpg-eh {:.1}% below search{}",
            fmt_chain(&chain, ">="),
            exp.slots,
            100.0 * shortfall,
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    }
}

pub fn impairment_checks(exp: &ScoreExperiment) -> Check {
    let get = |l: &str| exp.scores.iter().find(|s| s.label == l).map(|s| s.mean()).unwrap_or(f64::NAN);
    let chain = [("ideal", get("ideal")), ("zeta", get("zeta")), ("phi", get("phi")), ("both", get("both"))];
    let (d_zeta, d_phi) = (chain[0].1 - chain[1].1, chain[0].1 - chain[2].1);
    let mut problems = Vec::new();
    if let Some(v) = first_violation(&chain, |a, b| a > b, ">") {
        problems.push(v);
    }
    if !(d_zeta < d_phi) {
        problems.push("violated: ideal - zeta < ideal - phi".to_string());
    }
    Check {
        criterion: 4,
        name: "impairment ordering".into(),
        passed: problems.is_empty(),
        detail: format!(
            "{}; drop zeta {:.4} vs phi {:.4}{}",
            fmt_chain(&chain, ">"),
            d_zeta,
            d_phi,
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    }
}

fn with_protocol(cfg: &ExperimentConfig, protocol: EhProtocol, renewable: bool) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.env.protocol = protocol;
    c.ablation.renewable = renewable;
    c
}

fn eval_agent(cfg: &ExperimentConfig, agent: &Agent, seeds: &[u64]) -> Result<Vec<StepRow>> {
    evaluate(&cfg.effective_env(), &Policy::Agent(agent), seeds)
}

/// Runs all three experiments on `cfg` (every seed of `cfg.train.seeds`)
/// and evaluates the ordering criteria. `progress` receives one line per run.
pub fn reproduce(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<ReproduceReport> {
    cfg.validate()?;
    let rc = &cfg.reproduce;
    let seeds = cfg.train.seeds.clone();
    let window = cfg.train.final_window;
    let eval = eval_seeds(cfg.train.eval_episodes.max(1));

    // Protocols with and without renewables. HYBRID agents with renewables are
    // reused below as the DDPG-EH entry and the "both impairments" entry.
    let mut runs = Vec::new();
    let mut hybrid_agents: Vec<Agent> = Vec::new();
    let mut seconds_with_re = 0.0;
    for renewable in [true, false] {
        for protocol in EhProtocol::ALL {
            let c = with_protocol(cfg, protocol, renewable);
            for &seed in &seeds {
                let t0 = Instant::now();
                let out = train(&c, seed)?;
                let secs = t0.elapsed().as_secs_f64();
                if renewable {
                    seconds_with_re += secs;
                }
                let fr = out.final_reward(window);
                progress(&format!("protocol {protocol} re={renewable} seed={seed}: final reward {fr:.4} ({secs:.0}s)"));
                runs.push(ProtocolRun { protocol, renewable, seed, final_reward: fr, seconds: secs });
                if renewable && protocol == EhProtocol::Hybrid {
                    hybrid_agents.push(out.agent);
                }
            }
        }
    }
    let protocols = ProtocolExperiment { runs, seconds_with_re };

    let hybrid = with_protocol(cfg, EhProtocol::Hybrid, true);
    let t0 = Instant::now();
    let n_alg = rc.algorithm_seeds.min(seeds.len());
    let search_rows = evaluate(&hybrid.effective_env(), &Policy::Search(&cfg.search), &eval)?;
    let slots = search_rows.len();
    progress(&format!("search: efficiency {:.4}", mean_efficiency(&search_rows)));
    let mut algorithm_scores = vec![LabeledScores { label: "search".into(), per_seed: vec![mean_efficiency(&search_rows)] }];
    for kind in AgentKind::ALL {
        let mut per_seed = Vec::new();
        for (i, &seed) in seeds.iter().take(n_alg).enumerate() {
            let eff = if kind == AgentKind::DdpgEh {
                mean_efficiency(&eval_agent(&hybrid, &hybrid_agents[i], &eval)?)
            } else {
                let mut c = hybrid.clone();
                c.agent = cfg.agent.with_kind(kind);
                let out = train(&c, seed)?;
                mean_efficiency(&eval_agent(&c, &out.agent, &eval)?)
            };
            progress(&format!("algorithm {kind} seed={seed}: efficiency {eff:.4}"));
            per_seed.push(eff);
        }
        algorithm_scores.push(LabeledScores { label: kind.label().into(), per_seed });
    }
    let algorithms = ScoreExperiment { scores: algorithm_scores, slots, seconds: t0.elapsed().as_secs_f64() };

    let t0 = Instant::now();
    let n_imp = rc.impairment_seeds.min(seeds.len());
    let conditions = [("ideal", false, false), ("zeta", true, false), ("phi", false, true), ("both", true, true)];
    let mut impairment_scores = Vec::new();
    for (label, csi, hw) in conditions {
        let mut c = hybrid.clone();
        c.ablation = Ablation { csi_error: csi, hardware_impairment: hw, ..c.ablation };
        let mut per_seed = Vec::new();
        for (i, &seed) in seeds.iter().take(n_imp).enumerate() {
            let rows = if csi && hw && cfg.ablation.csi_error && cfg.ablation.hardware_impairment {
                eval_agent(&c, &hybrid_agents[i], &eval)?
            } else {
                let out = train(&c, seed)?;
                eval_agent(&c, &out.agent, &eval)?
            };
            let eff = mean_efficiency(&rows);
            progress(&format!("impairment {label} seed={seed}: efficiency {eff:.4}"));
            per_seed.push(eff);
        }
        impairment_scores.push(LabeledScores { label: label.into(), per_seed });
    }
    let impairments = ScoreExperiment { scores: impairment_scores, slots, seconds: t0.elapsed().as_secs_f64() };

    let mut checks = protocol_checks(&protocols, &seeds, rc);
    checks.push(algorithm_checks(&algorithms, rc));
    checks.push(impairment_checks(&impairments));
    Ok(ReproduceReport { protocols, algorithms, impairments, checks })
}

impl fmt::Display for ReproduceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "experiment 1: final-window episode reward (seed mean)")?;
        writeln!(f, "  {:<8} {:>12} {:>12}", "protocol", "with RE", "without RE")?;
        for p in EhProtocol::ALL {
            writeln!(f, "  {:<8} {:>12.4} {:>12.4}", p.label(), self.protocols.seed_mean(p, true), self.protocols.seed_mean(p, false))?;
        }
        for (title, exp) in [("experiment 2: evaluation efficiency by algorithm", &self.algorithms), ("experiment 3: evaluation efficiency by impairment", &self.impairments)] {
            writeln!(f, "{title} ({} slots)", exp.slots)?;
            for s in &exp.scores {
                let per: Vec<String> = s.per_seed.iter().map(|v| format!("{v:.4}")).collect();
                writeln!(f, "  {:<8} {:>8.4}   [{}]", s.label, s.mean(), per.join(", "))?;
            }
        }
        for c in &self.checks {
            writeln!(f, "{} criterion {} ({}): {}", if c.passed { "PASS" } else { "FAILED" }, c.criterion, c.name, c.detail)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(protocol: EhProtocol, renewable: bool, seed: u64, r: f64) -> ProtocolRun {
        ProtocolRun { protocol, renewable, seed, final_reward: r, seconds: 1.0 }
    }

    fn scores(items: &[(&str, f64)]) -> ScoreExperiment {
        ScoreExperiment {
            scores: items.iter().map(|(l, v)| LabeledScores { label: l.to_string(), per_seed: vec![*v] }).collect(),
            slots: 100,
            seconds: 0.0,
        }
    }

    #[test]
    fn protocol_ordering_contract() {
        use EhProtocol::*;
        let rc = ReproduceConfig::default();
        let mut runs = Vec::new();
        for s in 0..3 {
            runs.push(run(TimeSwitching, true, s, 10.0));
            runs.push(run(PowerSplitting, true, s, 11.0));
            runs.push(run(Hybrid, true, s, 12.0));
            runs.push(run(TimeSwitching, false, s, 9.0));
            runs.push(run(PowerSplitting, false, s, if s == 0 { 12.0 } else { 10.0 }));
            runs.push(run(Hybrid, false, s, 13.0));
        }
        let exp = ProtocolExperiment { runs, seconds_with_re: 10.0 };
        let checks = protocol_checks(&exp, &[0, 1, 2], &rc);
        assert!(checks[0].passed, "{}", checks[0].detail);
        assert!(!checks[1].passed);
        assert!(checks[1].detail.contains("HYBRID: 0/3"));
        assert!(checks[1].detail.contains("PS: 2/3"));

        let mut slow = exp.clone();
        slow.seconds_with_re = 4000.0;
        assert!(!protocol_checks(&slow, &[0, 1, 2], &rc)[0].passed);

        let mut bad = exp;
        for r in &mut bad.runs {
            if r.protocol == PowerSplitting {
                r.final_reward = 12.5;
            }
        }
        let c = &protocol_checks(&bad, &[0, 1, 2], &rc)[0];
        assert!(!c.passed);
        assert!(c.detail.contains("violated: HYBRID > PS"), "{}", c.detail);
    }

    #[test]
    fn ten_percent_gap_is_required() {
        use EhProtocol::*;
        let exp = ProtocolExperiment {
            runs: vec![run(TimeSwitching, true, 0, 10.0), run(PowerSplitting, true, 0, 10.5), run(Hybrid, true, 0, 10.9)],
            seconds_with_re: 1.0,
        };
        let c = &protocol_checks(&exp, &[0], &ReproduceConfig::default())[0];
        assert!(!c.passed);
        assert!(c.detail.contains("HYBRID over TS by 9.0%"), "{}", c.detail);
    }

    #[test]
    fn algorithm_contract() {
        let rc = ReproduceConfig::default();
        assert!(algorithm_checks(&scores(&[("search", 0.5), ("ddpg-eh", 0.45), ("td3", 0.4), ("ddpg", 0.4)]), &rc).passed);
        let c = algorithm_checks(&scores(&[("search", 0.5), ("ddpg-eh", 0.4), ("td3", 0.3), ("ddpg", 0.2)]), &rc);
        assert!(!c.passed && c.detail.contains("20.0% below"), "{}", c.detail);
        let c = algorithm_checks(&scores(&[("search", 0.5), ("ddpg-eh", 0.45), ("td3", 0.46), ("ddpg", 0.2)]), &rc);
        assert!(c.detail.contains("violated: ddpg-eh >= td3"), "{}", c.detail);
    }

    #[test]
    fn impairment_contract() {
        assert!(impairment_checks(&scores(&[("ideal", 0.5), ("zeta", 0.49), ("phi", 0.45), ("both", 0.44)])).passed);
        let c = impairment_checks(&scores(&[("ideal", 0.5), ("zeta", 0.51), ("phi", 0.45), ("both", 0.44)]));
        assert!(!c.passed && c.detail.contains("violated: ideal > zeta"));
    }
}
