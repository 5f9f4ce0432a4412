//! RF harvesting protocols, the nonlinear rectifier, solar arrivals and the
//! shared onboard battery.

use std::f64::consts::TAU;

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// RF harvesting protocol. Element splitting is the hybrid protocol with `tau = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EhProtocol {
    #[serde(rename = "TS")]
    TimeSwitching,
    #[serde(rename = "PS")]
    PowerSplitting,
    #[serde(rename = "HYBRID")]
    Hybrid,
}

impl EhProtocol {
    pub const ALL: [EhProtocol; 3] = [EhProtocol::TimeSwitching, EhProtocol::PowerSplitting, EhProtocol::Hybrid];

    pub fn label(self) -> &'static str {
        match self {
            EhProtocol::TimeSwitching => "TS",
            EhProtocol::PowerSplitting => "PS",
            EhProtocol::Hybrid => "HYBRID",
        }
    }
}

impl std::fmt::Display for EhProtocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for EhProtocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TS" => Ok(EhProtocol::TimeSwitching),
            "PS" => Ok(EhProtocol::PowerSplitting),
            "HYBRID" => Ok(EhProtocol::Hybrid),
            other => Err(Error::invalid(format!("unknown protocol `{other}`"))),
        }
    }
}

/// Physical action for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EhAction {
    /// Time-switching fraction (TS and hybrid).
    pub tau: f64,
    /// Power-splitting fraction (PS and hybrid).
    pub rho: f64,
    /// Per-element element-splitting factors; `>= 0.5` means harvest in phase one.
    pub omega: Vec<f64>,
    /// Per-element phase shifts in `[0, 2pi)`.
    pub theta: Vec<f64>,
    /// Per-node BS transmit power, W.
    pub power: Vec<f64>,
}

impl EhAction {
    pub fn validate(&self, elements: usize, nodes: usize, p_max: f64) -> Result<()> {
        let frac = |v: f64| (0.0..=1.0).contains(&v);
        if !frac(self.tau) || !frac(self.rho) || !self.omega.iter().all(|&w| frac(w)) {
            return Err(Error::invalid("tau, rho and omega must lie in [0, 1]"));
        }
        if self.omega.len() != elements || self.theta.len() != elements {
            return Err(Error::invalid(format!(
                "omega/theta need {elements} entries, got {}/{}",
                self.omega.len(),
                self.theta.len()
            )));
        }
        if self.power.len() != nodes {
            return Err(Error::invalid(format!("power needs {nodes} entries, got {}", self.power.len())));
        }
        if !self.theta.iter().all(|&t| (0.0..TAU).contains(&t)) {
            return Err(Error::invalid("theta must lie in [0, 2pi)"));
        }
        if !self.power.iter().all(|&p| p.is_finite() && p >= 0.0) {
            return Err(Error::invalid("power must be finite and non-negative"));
        }
        let total: f64 = self.power.iter().sum();
        if total > p_max * (1.0 + 1e-12) {
            return Err(Error::invalid(format!("total power {total} exceeds p_max {p_max}")));
        }
        Ok(())
    }
}

/// Wraps any finite angle into `[0, 2pi)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EhConfig {
    /// Rectifier saturation power M, W.
    pub rectifier_max_power: f64,
    /// Sigmoid steepness a, 1/W.
    pub rectifier_a: f64,
    /// Sigmoid turn-on point b, W.
    pub rectifier_b: f64,
    /// One rectifier per element instead of a single shared rectifier.
    pub per_element_rectifier: bool,
    /// Mean solar income, J/s.
    pub solar_rate_lambda: f64,
    /// Energy per solar arrival, J.
    pub solar_packet: f64,
    /// Slot length, s.
    pub slot_duration: f64,
    /// Constant platform draw (propulsion, control), W.
    pub hover_drain: f64,
}

impl Default for EhConfig {
    fn default() -> Self {
        EhConfig {
            rectifier_max_power: 24e-6,
            rectifier_a: 150e3,
            rectifier_b: 14e-6,
            per_element_rectifier: false,
            solar_rate_lambda: 2.0,
            solar_packet: 0.5,
            slot_duration: 1.0,
            hover_drain: 5.0,
        }
    }
}

impl EhConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        for (name, v) in [
            ("rectifier_max_power", self.rectifier_max_power),
            ("rectifier_a", self.rectifier_a),
            ("rectifier_b", self.rectifier_b),
            ("solar_packet", self.solar_packet),
            ("slot_duration", self.slot_duration),
        ] {
            if !pos(v) {
                return Err(Error::config(format!("{path}.{name}"), "must be > 0"));
            }
        }
        for (name, v) in [("solar_rate_lambda", self.solar_rate_lambda), ("hover_drain", self.hover_drain)] {
            if !nonneg(v) {
                return Err(Error::config(format!("{path}.{name}"), "must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Normalized logistic rectifier: zero output at zero input, saturating at
/// `M`. Output is capped at the input power since the rectifier is passive.
pub fn rectify(p_in: f64, cfg: &EhConfig) -> f64 {
    if !(p_in > 0.0) {
        return 0.0;
    }
    let m = cfg.rectifier_max_power;
    let (a, b) = (cfg.rectifier_a, cfg.rectifier_b);
    let psi = m / (1.0 + (-a * (p_in - b)).exp());
    let omega = 1.0 / (1.0 + (a * b).exp());
    let out = ((psi - m * omega) / (1.0 - omega)).max(0.0);
    out.min(p_in)
}

/// One interval of a slot with a fixed reflection configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectPhase {
    /// Share of the slot, in `[0, 1]`.
    pub fraction: f64,
    /// Per-element reflection amplitude.
    pub amplitudes: Vec<f64>,
}

/// How one slot's incident RF power is divided between harvesting and reflection.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSplit {
    /// Rectifier input energy, J.
    pub eh_input_energy: f64,
    /// Rectifier output energy, J.
    pub harvested_energy: f64,
    pub phases: Vec<ReflectPhase>,
}

impl SlotSplit {
    /// Reflection amplitudes averaged over the slot.
    pub fn reflect_profile(&self) -> Vec<f64> {
        let l = self.phases.first().map_or(0, |p| p.amplitudes.len());
        (0..l).map(|i| self.phases.iter().map(|p| p.fraction * p.amplitudes[i]).sum()).collect()
    }
}

fn harvest_power(inputs: impl Iterator<Item = f64> + Clone, cfg: &EhConfig) -> (f64, f64) {
    let total: f64 = inputs.clone().sum();
    let out = if cfg.per_element_rectifier { inputs.map(|p| rectify(p, cfg)).sum() } else { rectify(total, cfg) };
    (total, out)
}

/// Splits the slot's per-element incident power according to the protocol.
///
/// - TS: all elements harvest for `tau`, then all reflect at full amplitude.
/// - PS: every element harvests a `rho` share all slot and reflects at `sqrt(1 - rho)`.
/// - Hybrid: for `tau`, elements with `omega >= 0.5` harvest and the others
///   reflect; for the remaining `1 - tau`, PS with `rho` on all elements.
///
/// Every protocol reports two phases so that the hybrid endpoints reproduce
/// TS and PS with identical floating-point operations.
pub fn incident_split(p_inc: &[f64], action: &EhAction, protocol: EhProtocol, cfg: &EhConfig) -> Result<SlotSplit> {
    let l = p_inc.len();
    if action.omega.len() != l || action.theta.len() != l {
        return Err(Error::invalid(format!("action is sized for {} elements, channel has {l}", action.omega.len())));
    }
    if p_inc.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::invalid("incident power must be finite and non-negative"));
    }
    let dt = cfg.slot_duration;
    let (tau, rho) = match protocol {
        EhProtocol::TimeSwitching => (action.tau, 0.0),
        EhProtocol::PowerSplitting => (0.0, action.rho),
        EhProtocol::Hybrid => (action.tau, action.rho),
    };
    // Phase one: element-level harvest mask (all elements for TS).
    let harvest_mask: Vec<bool> = match protocol {
        EhProtocol::TimeSwitching => vec![true; l],
        EhProtocol::PowerSplitting => vec![false; l],
        EhProtocol::Hybrid => action.omega.iter().map(|&w| w >= 0.5).collect(),
    };
    let (in1, out1) = harvest_power(p_inc.iter().zip(&harvest_mask).filter(|(_, &h)| h).map(|(&p, _)| p), cfg);
    let amp1: Vec<f64> = harvest_mask.iter().map(|&h| if h { 0.0 } else { 1.0 }).collect();

    // Phase two: power splitting (rho = 0 for TS, i.e. pure reflection).
    let (in2, out2) = harvest_power(p_inc.iter().map(|&p| rho * p), cfg);
    let amp2 = vec![(1.0 - rho).sqrt(); l];

    let f1 = tau;
    let f2 = 1.0 - tau;
    Ok(SlotSplit {
        eh_input_energy: f1 * dt * in1 + f2 * dt * in2,
        harvested_energy: f1 * dt * out1 + f2 * dt * out2,
        phases: vec![ReflectPhase { fraction: f1, amplitudes: amp1 }, ReflectPhase { fraction: f2, amplitudes: amp2 }],
    })
}

/// Solar income at the start of a slot: Poisson count of fixed-size packets
/// with mean `lambda * dt` joules.
pub fn sample_solar(rng: &mut SimRng, cfg: &EhConfig) -> f64 {
    let mean_packets = cfg.solar_rate_lambda * cfg.slot_duration / cfg.solar_packet;
    if !(mean_packets > 0.0) {
        return 0.0;
    }
    let n: f64 = Poisson::new(mean_packets).expect("positive finite rate").sample(rng);
    n * cfg.solar_packet
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub level: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryStep {
    pub battery: Battery,
    /// Harvested energy lost to a full battery, J.
    pub overflow: f64,
    /// Energy actually drawn, J (capped at what was available).
    pub consumed: f64,
    pub causality_violated: bool,
}

impl Battery {
    pub fn new(capacity: f64, initial_fraction: f64) -> Self {
        Battery { level: capacity * initial_fraction.clamp(0.0, 1.0), capacity }
    }

    pub fn is_empty(&self) -> bool {
        self.level <= 0.0
    }
}

/// Harvest-then-consume battery update.
pub fn battery_step(b: Battery, harvested: f64, consumed: f64) -> BatteryStep {
    let harvested = harvested.max(0.0);
    let consumed = consumed.max(0.0);
    let raw = b.level + harvested;
    let overflow = (raw - b.capacity).max(0.0);
    let available = raw.min(b.capacity);
    let causality_violated = consumed > available;
    let drawn = consumed.min(available);
    let level = (available - drawn).clamp(0.0, b.capacity);
    BatteryStep { battery: Battery { level, capacity: b.capacity }, overflow, consumed: drawn, causality_violated }
}
