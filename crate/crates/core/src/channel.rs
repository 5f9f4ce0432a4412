//! Fading channels for the two hops (BS to RIS, RIS to node), log-distance
//! path loss, and the imperfect CSI seen by the controller.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{element_world_positions, Position3, Scene};
use crate::rng::SimRng;

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!("{rows}x{cols} matrix needs {} entries, got {}", rows * cols, data.len())));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Multiplies every entry by the same complex factor.
    pub fn scaled(&self, by: Complex64) -> Self {
        ComplexMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * by).collect() }
    }
}

/// Large-scale and receiver parameters. Defaults model a 2.4 GHz air-to-ground link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub pathloss_exponent_bs_ris: f64,
    pub pathloss_exponent_ris_node: f64,
    pub ref_loss_db: f64,
    /// Rician K-factor of the RIS-to-node hop (linear).
    pub rician_k: f64,
    /// Receiver noise power, W.
    pub noise_power: f64,
    /// Hz.
    pub bandwidth: f64,
    /// Meters.
    pub carrier_wavelength: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            pathloss_exponent_bs_ris: 2.2,
            pathloss_exponent_ris_node: 2.5,
            ref_loss_db: 30.0,
            rician_k: 3.0,
            noise_power: dbm_to_watts(-96.0),
            bandwidth: 80e6,
            carrier_wavelength: 299_792_458.0 / 2.4e9,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.pathloss_exponent_bs_ris) || !pos(self.pathloss_exponent_ris_node) {
            return Err(Error::config(format!("{path}.pathloss_exponent_*"), "must be positive"));
        }
        if !self.ref_loss_db.is_finite() {
            return Err(Error::config(format!("{path}.ref_loss_db"), "must be finite"));
        }
        if !(self.rician_k.is_finite() && self.rician_k >= 0.0) {
            return Err(Error::config(format!("{path}.rician_k"), "must be >= 0"));
        }
        if !pos(self.noise_power) {
            return Err(Error::config(format!("{path}.noise_power"), "must be > 0"));
        }
        if !pos(self.bandwidth) {
            return Err(Error::config(format!("{path}.bandwidth"), "must be > 0"));
        }
        if !pos(self.carrier_wavelength) {
            return Err(Error::config(format!("{path}.carrier_wavelength"), "must be > 0"));
        }
        Ok(())
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Reference distance of the log-distance model, meters.
pub const REF_DISTANCE: f64 = 1.0;

/// Linear power gain `10^(-ref/10) * (d/d0)^(-exponent)`, with `d` clamped to `d0`.
pub fn path_loss(distance: f64, exponent: f64, ref_loss_db: f64) -> f64 {
    let d = if distance.is_finite() { distance.max(REF_DISTANCE) } else { REF_DISTANCE };
    10f64.powf(-ref_loss_db / 10.0) * (d / REF_DISTANCE).powf(-exponent)
}

/// Unit-power circularly-symmetric complex Gaussian.
pub fn complex_gaussian(rng: &mut SimRng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `L x Z` Rayleigh matrix with per-entry mean power `gain`.
pub fn sample_bs_ris(rng: &mut SimRng, antennas: usize, elements: usize, gain: f64) -> ComplexMatrix {
    let amp = gain.max(0.0).sqrt();
    let data = (0..antennas * elements).map(|_| complex_gaussian(rng) * amp).collect();
    ComplexMatrix { rows: elements, cols: antennas, data }
}

/// Rician RIS-to-node vector: deterministic LoS phase from the exact
/// element-to-node distance plus a scattered Rayleigh part.
pub fn sample_ris_node(
    rng: &mut SimRng,
    element_positions: &[Position3],
    node_position: Position3,
    rician_k: f64,
    gain: f64,
    wavelength: f64,
) -> Vec<Complex64> {
    let amp = gain.max(0.0).sqrt();
    let k = rician_k.max(0.0);
    let los_w = (k / (k + 1.0)).sqrt();
    let nlos_w = (1.0 / (k + 1.0)).sqrt();
    element_positions
        .iter()
        .map(|&e| {
            let d = e.distance(node_position);
            let los = Complex64::from_polar(1.0, -2.0 * PI * d / wavelength);
            (los * los_w + complex_gaussian(rng) * nlos_w) * amp
        })
        .collect()
}

/// Additive-error CSI model `h_hat = sqrt(1 - zeta) h + sqrt(zeta) e` with
/// `e ~ CN(0, mean_power)`. The error is always drawn so the random stream
/// does not depend on `zeta`.
pub fn estimate_csi(truth: &[Complex64], mean_power: f64, zeta: f64, rng: &mut SimRng) -> Result<Vec<Complex64>> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::invalid(format!("zeta must lie in [0, 1], got {zeta}")));
    }
    let err_amp = (zeta * mean_power.max(0.0)).sqrt();
    let keep = (1.0 - zeta).sqrt();
    let est = truth
        .iter()
        .map(|&h| {
            let e = complex_gaussian(rng);
            if zeta == 0.0 {
                h
            } else {
                h * keep + e * err_amp
            }
        })
        .collect();
    Ok(est)
}

/// True and estimated channels for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `L x Z`, BS to RIS.
    pub g1_true: ComplexMatrix,
    /// `K` vectors of length `L`, RIS to node k.
    pub g2_true: Vec<Vec<Complex64>>,
    pub g1_est: ComplexMatrix,
    pub g2_est: Vec<Vec<Complex64>>,
    pub zeta: f64,
    /// Mean per-entry power of `g1`.
    pub gain_bs_ris: f64,
    /// Mean per-entry power of each `g2_k`.
    pub gain_ris_node: Vec<f64>,
}

impl ChannelRealization {
    /// `fading_rng` drives the small-scale fading and `csi_rng` the estimation error.
    pub fn sample(
        scene: &Scene,
        antennas: usize,
        cfg: &ChannelConfig,
        zeta: f64,
        fading_rng: &mut SimRng,
        csi_rng: &mut SimRng,
    ) -> Result<Self> {
        let elements = element_world_positions(scene);
        let l = elements.len();
        let gain_bs_ris =
            path_loss(scene.bs_position.distance(scene.uav_position), cfg.pathloss_exponent_bs_ris, cfg.ref_loss_db);
        let g1_true = sample_bs_ris(fading_rng, antennas, l, gain_bs_ris);
        let mut g2_true = Vec::with_capacity(scene.n_nodes());
        let mut gain_ris_node = Vec::with_capacity(scene.n_nodes());
        for &node in &scene.node_positions {
            let gain = path_loss(scene.uav_position.distance(node), cfg.pathloss_exponent_ris_node, cfg.ref_loss_db);
            g2_true.push(sample_ris_node(fading_rng, &elements, node, cfg.rician_k, gain, cfg.carrier_wavelength));
            gain_ris_node.push(gain);
        }
        let g1_est = ComplexMatrix {
            rows: l,
            cols: antennas,
            data: estimate_csi(g1_true.as_slice(), gain_bs_ris, zeta, csi_rng)?,
        };
        let g2_est = g2_true
            .iter()
            .zip(&gain_ris_node)
            .map(|(g, &gain)| estimate_csi(g, gain, zeta, csi_rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(ChannelRealization { g1_true, g2_true, g1_est, g2_est, zeta, gain_bs_ris, gain_ris_node })
    }

    pub fn antennas(&self) -> usize {
        self.g1_true.cols()
    }

    pub fn elements(&self) -> usize {
        self.g1_true.rows()
    }

    pub fn nodes(&self) -> usize {
        self.g2_true.len()
    }
}
