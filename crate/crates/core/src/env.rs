//! The Markov decision process: state assembly, action mapping, slot physics,
//! reward with constraint penalties, and the episode lifecycle.
//!
//! Slot `t` is fully sampled (solar arrival, UAV move, fading, CSI estimate)
//! before the agent sees `s_t`, so the channels in the state are the ones the
//! action is applied to. [`Env::evaluate`] runs the slot physics for any
//! action without advancing time; [`Env::step`] commits one action.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, ChannelRealization};
use crate::comms::{incident_power, precode, sinr_and_rate, PrecoderKind};
use crate::energy::{battery_step, incident_split, sample_solar, wrap_phase, Battery, EhAction, EhConfig, EhProtocol};
use crate::error::{Error, Result};
use crate::geometry::{
    advance_nodes, element_world_positions, kmeans, ris_grid, uav_step, AltitudeBand, Bounds, NodeMobility, Position3,
    Scene,
};
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltyWeights {
    /// Applied to the fraction of nodes below the QoS rate.
    pub qos: f64,
    /// Applied to overflow energy as a fraction of capacity.
    pub overflow: f64,
    /// Applied once per slot with a causality violation.
    pub causality: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        PenaltyWeights { qos: 0.5, overflow: 0.25, causality: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    /// Region the IoT nodes roam in.
    pub bounds: Bounds,
    pub bs_position: Position3,
    /// Horizontal start of the UAV; it starts at the service altitude.
    pub uav_start: [f64; 2],
    pub altitude: AltitudeBand,
    /// Max UAV horizontal speed, m/s.
    pub uav_speed: f64,
    pub node_mobility: NodeMobility,
    /// RIS element spacing, m. Defaults to half a carrier wavelength.
    pub element_spacing: Option<f64>,
    pub kmeans_clusters: usize,
    pub kmeans_iters: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            bounds: Bounds::new(Position3::new(0.0, 0.0, 0.0), Position3::new(100.0, 100.0, 0.0)),
            bs_position: Position3::new(-20.0, 50.0, 15.0),
            uav_start: [50.0, 50.0],
            altitude: AltitudeBand { service: 30.0, min: 10.0, max: 120.0 },
            uav_speed: 10.0,
            node_mobility: NodeMobility { speed_min: 0.5, speed_max: 2.0 },
            element_spacing: None,
            kmeans_clusters: 1,
            kmeans_iters: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// BS antennas (Z).
    pub antennas: usize,
    /// RIS elements (L).
    pub elements: usize,
    /// IoT nodes (K).
    pub nodes: usize,
    /// Slots per episode (T).
    pub slots: usize,
    /// Minimum per-node rate, bps.
    pub qos_min: f64,
    /// Total BS transmit power budget, W.
    pub p_max: f64,
    /// J.
    pub battery_capacity: f64,
    pub battery_initial_fraction: f64,
    /// CSI error fraction.
    pub zeta: f64,
    /// Transceiver distortion fraction.
    pub phi: f64,
    pub protocol: EhProtocol,
    pub use_renewable: bool,
    /// End the episode when the battery runs dry; otherwise run all `slots`.
    pub terminate_on_empty: bool,
    pub precoder: PrecoderKind,
    pub penalty: PenaltyWeights,
    pub channel: ChannelConfig,
    pub energy: EhConfig,
    pub scene: SceneConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            antennas: 8,
            elements: 16,
            nodes: 3,
            slots: 100,
            qos_min: 70e6,
            p_max: 10.0,
            battery_capacity: 400.0,
            battery_initial_fraction: 0.5,
            zeta: 0.01,
            phi: 0.08,
            protocol: EhProtocol::Hybrid,
            use_renewable: true,
            terminate_on_empty: true,
            precoder: PrecoderKind::Mrt,
            penalty: PenaltyWeights::default(),
            channel: ChannelConfig::default(),
            energy: EhConfig::default(),
            scene: SceneConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("antennas", self.antennas), ("elements", self.elements), ("nodes", self.nodes), ("slots", self.slots)] {
            if v == 0 {
                return Err(Error::config(format!("env.{name}"), "must be >= 1"));
            }
        }
        if !(self.qos_min.is_finite() && self.qos_min > 0.0) {
            return Err(Error::config("env.qos_min", "must be > 0"));
        }
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            return Err(Error::config("env.p_max", "must be > 0"));
        }
        if !(self.battery_capacity.is_finite() && self.battery_capacity > 0.0) {
            return Err(Error::config("env.battery_capacity", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.battery_initial_fraction) {
            return Err(Error::config("env.battery_initial_fraction", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.zeta) {
            return Err(Error::config("env.zeta", "must lie in [0, 1]"));
        }
        if !(self.phi.is_finite() && self.phi >= 0.0) {
            return Err(Error::config("env.phi", "must be >= 0"));
        }
        let w = self.penalty;
        if [w.qos, w.overflow, w.causality].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::config("env.penalty", "weights must be >= 0"));
        }
        self.channel.validate("env.channel")?;
        self.energy.validate("env.energy")?;
        let s = &self.scene;
        s.bounds.validate("env.scene.bounds")?;
        let a = s.altitude;
        if !(a.min >= 0.0 && a.min <= a.max && a.service.is_finite()) {
            return Err(Error::config("env.scene.altitude", "need 0 <= min <= max"));
        }
        if !(s.uav_speed.is_finite() && s.uav_speed > 0.0) {
            return Err(Error::config("env.scene.uav_speed", "must be > 0"));
        }
        let m = s.node_mobility;
        if !(m.speed_min >= 0.0 && m.speed_min <= m.speed_max && m.speed_max.is_finite()) {
            return Err(Error::config("env.scene.node_mobility", "need 0 <= speed_min <= speed_max"));
        }
        if s.kmeans_clusters == 0 || s.kmeans_clusters > self.nodes {
            return Err(Error::config("env.scene.kmeans_clusters", "must lie in 1..=nodes"));
        }
        if s.kmeans_iters == 0 {
            return Err(Error::config("env.scene.kmeans_iters", "must be >= 1"));
        }
        if let Some(sp) = s.element_spacing {
            if !(sp.is_finite() && sp > 0.0) {
                return Err(Error::config("env.scene.element_spacing", "must be > 0"));
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> ActionLayout {
        ActionLayout { protocol: self.protocol, elements: self.elements, nodes: self.nodes }
    }

    /// `2LZ + 2LK + 3L + 3K + 1 + D`.
    pub fn state_dim(&self) -> usize {
        let (z, l, k) = (self.antennas, self.elements, self.nodes);
        2 * l * z + 2 * l * k + 3 * l + 3 * k + 1 + self.layout().dim()
    }
}

/// Positions of each action component inside the raw `[-1, 1]^D` vector.
///
/// TS/PS: `[alpha, theta_1..L, p_1..K]`; hybrid: `[tau, rho, omega_1..L, theta_1..L, p_1..K]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionLayout {
    pub protocol: EhProtocol,
    pub elements: usize,
    pub nodes: usize,
}

impl ActionLayout {
    pub fn dim(&self) -> usize {
        match self.protocol {
            EhProtocol::Hybrid => 2 + 2 * self.elements + self.nodes,
            _ => 1 + self.elements + self.nodes,
        }
    }

    fn theta_offset(&self) -> usize {
        match self.protocol {
            EhProtocol::Hybrid => 2 + self.elements,
            _ => 1,
        }
    }

    /// Affine map from the raw action box to physical ranges. Powers are
    /// clip-and-rescale onto `{p >= 0, sum p <= p_max}`.
    pub fn map(&self, raw: &[f64], p_max: f64) -> Result<EhAction> {
        if raw.len() != self.dim() {
            return Err(Error::invalid(format!("action has {} entries, expected {}", raw.len(), self.dim())));
        }
        let unit = |x: f64| if x.is_nan() { 0.5 } else { ((x.clamp(-1.0, 1.0) + 1.0) * 0.5).clamp(0.0, 1.0) };
        let l = self.elements;
        let (tau, rho, omega) = match self.protocol {
            EhProtocol::TimeSwitching => (unit(raw[0]), 0.0, vec![0.0; l]),
            EhProtocol::PowerSplitting => (0.0, unit(raw[0]), vec![0.0; l]),
            EhProtocol::Hybrid => (unit(raw[0]), unit(raw[1]), raw[2..2 + l].iter().map(|&x| unit(x)).collect()),
        };
        let t0 = self.theta_offset();
        let theta = raw[t0..t0 + l].iter().map(|&x| wrap_phase(2.0 * PI * unit(x))).collect();
        let shares: Vec<f64> = raw[t0 + l..].iter().map(|&x| unit(x)).collect();
        let total: f64 = shares.iter().sum();
        let norm = if total > 1.0 { total } else { 1.0 };
        let power = shares.iter().map(|s| p_max * (s / norm)).collect();
        Ok(EhAction { tau, rho, omega, theta, power })
    }

    /// Inverse of [`ActionLayout::map`] for actions whose powers sum to at most `p_max`.
    pub fn unmap(&self, action: &EhAction, p_max: f64) -> Vec<f64> {
        let raw = |u: f64| (2.0 * u - 1.0).clamp(-1.0, 1.0);
        let mut v = Vec::with_capacity(self.dim());
        match self.protocol {
            EhProtocol::TimeSwitching => v.push(raw(action.tau)),
            EhProtocol::PowerSplitting => v.push(raw(action.rho)),
            EhProtocol::Hybrid => {
                v.push(raw(action.tau));
                v.push(raw(action.rho));
                v.extend(action.omega.iter().map(|&w| raw(w)));
            }
        }
        v.extend(action.theta.iter().map(|&t| raw(t / (2.0 * PI))));
        v.extend(action.power.iter().map(|&p| raw(p / p_max)));
        v
    }
}

/// Per-slot physical audit record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotReport {
    pub step: usize,
    /// RF energy arriving at the RIS over the slot, J.
    pub incident_rf_energy: f64,
    /// Rectifier input energy, J.
    pub eh_input_energy: f64,
    /// Rectifier output energy, J.
    pub harvested_rf_energy: f64,
    pub harvested_solar_energy: f64,
    /// Energy drawn from the battery, J.
    pub consumed_energy: f64,
    pub overflow: f64,
    pub causality_violated: bool,
    /// Battery level at the end of the slot, J.
    pub battery_level: f64,
    pub battery_capacity: f64,
    pub rates: Vec<f64>,
    pub qos_ok: Vec<bool>,
    pub efficiency: f64,
    pub reward: f64,
    pub precoder_fallback: bool,
}

impl SlotReport {
    pub fn qos_violations(&self) -> usize {
        self.qos_ok.iter().filter(|ok| !**ok).count()
    }
}

/// Harvested RF energy over incident RF energy; zero when nothing arrived.
pub fn efficiency(report: &SlotReport) -> f64 {
    if report.incident_rf_energy > 0.0 {
        report.harvested_rf_energy / report.incident_rf_energy
    } else {
        0.0
    }
}

/// Efficiency minus constraint penalties.
pub fn reward(report: &SlotReport, w: &PenaltyWeights) -> f64 {
    let k = report.qos_ok.len().max(1) as f64;
    let qos = w.qos * report.qos_violations() as f64 / k;
    let ovf = w.overflow * report.overflow / report.battery_capacity;
    let caus = if report.causality_violated { w.causality } else { 0.0 };
    report.efficiency - qos - ovf - caus
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub report: SlotReport,
}

/// Exogenous quantities of the upcoming slot.
#[derive(Debug, Clone)]
struct SlotContext {
    channels: ChannelRealization,
    solar: f64,
}

#[derive(Debug, Clone)]
struct Streams {
    mobility: SimRng,
    fading: SimRng,
    csi: SimRng,
    solar: SimRng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Streams {
            mobility: rng::stream(seed, 1),
            fading: rng::stream(seed, 2),
            csi: rng::stream(seed, 3),
            solar: rng::stream(seed, 4),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Env {
    cfg: EnvConfig,
    layout: ActionLayout,
    seed: u64,
    scene: Scene,
    battery: Battery,
    t: usize,
    done: bool,
    prev_raw: Vec<f64>,
    slot: SlotContext,
    streams: Streams,
}

impl Env {
    /// Validates the configuration and starts an episode with `seed`.
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Env> {
        cfg.validate()?;
        let layout = cfg.layout();
        let mut streams = Streams::new(seed);
        let scene = initial_scene(&cfg, &mut streams.mobility);
        let slot = sample_slot(&cfg, &scene, &mut streams)?;
        Ok(Env {
            battery: Battery::new(cfg.battery_capacity, cfg.battery_initial_fraction),
            prev_raw: vec![0.0; layout.dim()],
            layout,
            seed,
            scene,
            t: 0,
            done: false,
            slot,
            streams,
            cfg,
        })
    }

    /// Restarts with a new seed and returns the first state.
    pub fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        *self = Env::new(self.cfg.clone(), seed)?;
        Ok(self.state())
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn layout(&self) -> ActionLayout {
        self.layout
    }

    pub fn action_dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn state_dim(&self) -> usize {
        self.cfg.state_dim()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn battery(&self) -> Battery {
        self.battery
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn channels(&self) -> &ChannelRealization {
        &self.slot.channels
    }

    /// Solar energy that arrived at the start of the current slot (0 when renewables are off).
    pub fn solar_energy(&self) -> f64 {
        if self.cfg.use_renewable {
            self.slot.solar
        } else {
            0.0
        }
    }

    pub fn map_action(&self, raw: &[f64]) -> Result<EhAction> {
        self.layout.map(raw, self.cfg.p_max)
    }

    /// Normalized flat state: `Re/Im(G1_hat)`, `Re/Im(g_hat_k)`, element
    /// positions, node positions, renewable energy, previous raw action.
    pub fn state(&self) -> Vec<f64> {
        let ch = &self.slot.channels;
        let mut s = Vec::with_capacity(self.state_dim());
        let g1_scale = 1.0 / ch.gain_bs_ris.sqrt().max(f64::MIN_POSITIVE);
        for z in ch.g1_est.as_slice() {
            s.push(z.re * g1_scale);
            s.push(z.im * g1_scale);
        }
        for (g, gain) in ch.g2_est.iter().zip(&ch.gain_ris_node) {
            let sc = 1.0 / gain.sqrt().max(f64::MIN_POSITIVE);
            for z in g {
                s.push(z.re * sc);
                s.push(z.im * sc);
            }
        }
        let b = &self.cfg.scene.bounds;
        let (c, h) = (b.center(), b.half_extent());
        let zmax = self.cfg.scene.altitude.max.max(1.0);
        let mut push_pos = |p: Position3| {
            s.push((p.x - c.x) / h.x);
            s.push((p.y - c.y) / h.y);
            s.push(p.z / zmax);
        };
        for p in element_world_positions(&self.scene) {
            push_pos(p);
        }
        for &p in &self.scene.node_positions {
            push_pos(p);
        }
        let solar_scale = self.cfg.energy.solar_rate_lambda * self.cfg.energy.slot_duration;
        s.push(if solar_scale > 0.0 { self.solar_energy() / solar_scale } else { 0.0 });
        s.extend_from_slice(&self.prev_raw);
        s
    }

    /// Slot physics for `action` on the current slot, without advancing time.
    pub fn evaluate(&self, action: &EhAction) -> Result<SlotReport> {
        let cfg = &self.cfg;
        action.validate(cfg.elements, cfg.nodes, cfg.p_max)?;
        let ch = &self.slot.channels;
        let dt = cfg.energy.slot_duration;
        let unit = vec![1.0; cfg.elements];
        let pre = precode(&ch.g1_est, &ch.g2_est, &action.theta, &unit, &action.power, cfg.precoder)?;
        let p_inc = incident_power(&ch.g1_true, &pre);
        let split = incident_split(&p_inc, action, cfg.protocol, &cfg.energy)?;
        let link = sinr_and_rate(
            &ch.g1_true,
            &ch.g2_true,
            &action.theta,
            &split.phases,
            &pre,
            cfg.phi,
            cfg.channel.noise_power,
            cfg.channel.bandwidth,
        );
        let solar = self.solar_energy();
        let b = battery_step(self.battery, split.harvested_energy + solar, cfg.energy.hover_drain * dt);
        let mut report = SlotReport {
            step: self.t,
            incident_rf_energy: p_inc.iter().sum::<f64>() * dt,
            eh_input_energy: split.eh_input_energy,
            harvested_rf_energy: split.harvested_energy,
            harvested_solar_energy: solar,
            consumed_energy: b.consumed,
            overflow: b.overflow,
            causality_violated: b.causality_violated,
            battery_level: b.battery.level,
            battery_capacity: b.battery.capacity,
            qos_ok: link.rate.iter().map(|&r| r >= cfg.qos_min).collect(),
            rates: link.rate,
            efficiency: 0.0,
            reward: 0.0,
            precoder_fallback: pre.fallback,
        };
        report.efficiency = efficiency(&report);
        report.reward = reward(&report, &cfg.penalty);
        Ok(report)
    }

    pub fn step_raw(&mut self, raw: &[f64]) -> Result<StepOutcome> {
        let action = self.map_action(raw)?;
        self.commit(&action, raw.iter().map(|x| x.clamp(-1.0, 1.0)).collect())
    }

    pub fn step(&mut self, action: &EhAction) -> Result<StepOutcome> {
        let raw = self.layout.unmap(action, self.cfg.p_max);
        self.commit(action, raw)
    }

    fn commit(&mut self, action: &EhAction, raw: Vec<f64>) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let report = self.evaluate(action)?;
        self.battery = Battery { level: report.battery_level, capacity: report.battery_capacity };
        self.prev_raw = raw;
        self.t += 1;
        let drained = report.causality_violated && self.battery.is_empty() && self.cfg.terminate_on_empty;
        self.done = self.t >= self.cfg.slots || drained;
        if !self.done {
            advance_nodes(
                &mut self.scene,
                self.cfg.energy.slot_duration,
                &self.cfg.scene.node_mobility,
                &mut self.streams.mobility,
            );
            self.move_uav()?;
            self.slot = sample_slot(&self.cfg, &self.scene, &mut self.streams)?;
        }
        Ok(StepOutcome { state: self.state(), reward: report.reward, done: self.done, report })
    }

    /// Flies toward the centroid of the largest K-means cluster of the nodes.
    fn move_uav(&mut self) -> Result<()> {
        let sc = &self.cfg.scene;
        let km = kmeans(&self.scene.node_positions, sc.kmeans_clusters, sc.kmeans_iters, rng::mix(self.seed, self.t as u64))?;
        let mut counts = vec![0usize; km.centroids.len()];
        for &a in &km.assignment {
            counts[a] += 1;
        }
        let biggest = (0..counts.len()).fold(0, |best, j| if counts[j] > counts[best] { j } else { best });
        let target = km.centroids[biggest];
        self.scene.uav_position =
            uav_step(self.scene.uav_position, target, sc.uav_speed, self.cfg.energy.slot_duration, &sc.altitude);
        Ok(())
    }
}

fn initial_scene(cfg: &EnvConfig, rng: &mut SimRng) -> Scene {
    let sc = &cfg.scene;
    let spacing = sc.element_spacing.unwrap_or(cfg.channel.carrier_wavelength / 2.0);
    let uav = Position3::new(sc.uav_start[0], sc.uav_start[1], sc.altitude.clamp(sc.altitude.service));
    Scene::random(sc.bs_position, uav, ris_grid(cfg.elements, spacing), cfg.nodes, sc.bounds, &sc.node_mobility, rng)
}

fn sample_slot(cfg: &EnvConfig, scene: &Scene, streams: &mut Streams) -> Result<SlotContext> {
    let solar = sample_solar(&mut streams.solar, &cfg.energy);
    let channels =
        ChannelRealization::sample(scene, cfg.antennas, &cfg.channel, cfg.zeta, &mut streams.fading, &mut streams.csi)?;
    Ok(SlotContext { channels, solar })
}
