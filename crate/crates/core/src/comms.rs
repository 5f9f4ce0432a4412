//! Physical-layer arithmetic: cascaded channels, BS precoding, incident power
//! at the RIS, and SINR/rate with transceiver distortion.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ComplexMatrix;
use crate::energy::ReflectPhase;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecoderKind {
    /// Maximum-ratio transmission.
    #[default]
    Mrt,
    ZeroForcing,
}

/// Cascaded BS-to-node channel through the RIS:
/// `h[z] = sum_l g2[l] * amp[l] * e^{j theta[l]} * g1[l][z]`.
pub fn cascade(g1: &ComplexMatrix, g2_k: &[Complex64], theta: &[f64], amplitudes: &[f64]) -> Vec<Complex64> {
    let mut h = vec![Complex64::new(0.0, 0.0); g1.cols()];
    for l in 0..g1.rows() {
        if amplitudes[l] == 0.0 {
            continue;
        }
        let c = g2_k[l] * Complex64::from_polar(amplitudes[l], theta[l]);
        for (hz, gz) in h.iter_mut().zip(g1.row(l)) {
            *hz += c * gz;
        }
    }
    h
}

fn norm_sq(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One column per node, each of length `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoding {
    pub columns: Vec<Vec<Complex64>>,
    /// Set when an estimated cascade was all-zero and the uniform beam was used.
    pub fallback: bool,
}

/// Builds per-node beams from the estimated cascade, each scaled to carry `power[k]`.
pub fn precode(
    g1_est: &ComplexMatrix,
    g2_est: &[Vec<Complex64>],
    theta: &[f64],
    amplitudes: &[f64],
    power: &[f64],
    kind: PrecoderKind,
) -> Result<Precoding> {
    let l = g1_est.rows();
    let z = g1_est.cols();
    if theta.len() != l || amplitudes.len() != l || g2_est.iter().any(|g| g.len() != l) || power.len() != g2_est.len() {
        return Err(Error::invalid("precode: inconsistent channel/action shapes"));
    }
    let h: Vec<Vec<Complex64>> = g2_est.iter().map(|g| cascade(g1_est, g, theta, amplitudes)).collect();
    let directions = match kind {
        PrecoderKind::Mrt => h.iter().map(|hk| hk.iter().map(|x| x.conj()).collect()).collect(),
        PrecoderKind::ZeroForcing => zero_forcing_directions(&h).unwrap_or_else(|| {
            h.iter().map(|hk| hk.iter().map(|x| x.conj()).collect()).collect()
        }),
    };
    let uniform = Complex64::new((1.0 / z as f64).sqrt(), 0.0);
    let mut fallback = false;
    let columns = directions
        .into_iter()
        .zip(power)
        .map(|(dir, &p): (Vec<Complex64>, &f64)| {
            let n = norm_sq(&dir).sqrt();
            let scale = p.max(0.0).sqrt();
            if n > 0.0 && n.is_finite() {
                dir.iter().map(|x| x * (scale / n)).collect()
            } else {
                fallback = true;
                vec![uniform * scale; z]
            }
        })
        .collect();
    Ok(Precoding { columns, fallback })
}

/// `W = H^H (H H^H)^{-1}`, columns unnormalized. `None` if `H H^H` is singular.
fn zero_forcing_directions(h: &[Vec<Complex64>]) -> Option<Vec<Vec<Complex64>>> {
    let k = h.len();
    // Gram matrix A[i][j] = h_i . conj(h_j)
    let mut a: Vec<Vec<Complex64>> =
        (0..k).map(|i| (0..k).map(|j| h[i].iter().zip(&h[j]).map(|(x, y)| x * y.conj()).sum()).collect()).collect();
    let mut inv: Vec<Vec<Complex64>> = (0..k)
        .map(|i| (0..k).map(|j| if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }).collect())
        .collect();
    let scale = (0..k).map(|i| a[i][i].norm()).fold(0.0, f64::max);
    for col in 0..k {
        let pivot = (col..k).max_by(|&x, &y| a[x][col].norm().total_cmp(&a[y][col].norm()))?;
        if a[pivot][col].norm() <= 1e-12 * scale || scale == 0.0 {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for j in 0..k {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for r in 0..k {
            if r != col {
                let f = a[r][col];
                for j in 0..k {
                    let (ac, ic) = (a[col][j], inv[col][j]);
                    a[r][j] -= f * ac;
                    inv[r][j] -= f * ic;
                }
            }
        }
    }
    // Column k of W: sum_i conj(h_i) * inv[i][k]
    let z = h[0].len();
    Some(
        (0..k)
            .map(|col| (0..z).map(|zz| (0..k).map(|i| h[i][zz].conj() * inv[i][col]).sum()).collect())
            .collect(),
    )
}

/// Per-element RF power impinging on the RIS, summed over the node streams.
pub fn incident_power(g1_true: &ComplexMatrix, precoding: &Precoding) -> Vec<f64> {
    (0..g1_true.rows())
        .map(|l| precoding.columns.iter().map(|w| dot(g1_true.row(l), w).norm_sqr()).sum())
        .collect()
}

/// Link quality within one reflection phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseLink {
    pub fraction: f64,
    /// `effective_gain[k][j] = h_k . w_j`.
    pub effective_gain: Vec<Vec<Complex64>>,
    pub sinr: Vec<f64>,
    /// Rate while this phase is active, bps.
    pub rate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    pub p_inc_per_element: Vec<f64>,
    pub phases: Vec<PhaseLink>,
    /// Time-weighted slot rate per node, bps.
    pub rate: Vec<f64>,
}

/// SINR with distortion proportional to the total received power:
/// `S / (I + phi (S + I) + noise)`.
pub fn sinr(signal: f64, interference: f64, phi: f64, noise_power: f64) -> f64 {
    signal / (interference + phi * (signal + interference) + noise_power)
}

pub fn shannon_rate(bandwidth: f64, sinr: f64) -> f64 {
    bandwidth * (1.0 + sinr).log2()
}

/// SINR and rate of every node for one reflection profile, using the true channels.
pub fn phase_link(
    g1_true: &ComplexMatrix,
    g2_true: &[Vec<Complex64>],
    theta: &[f64],
    amplitudes: &[f64],
    precoding: &Precoding,
    phi: f64,
    noise_power: f64,
    bandwidth: f64,
) -> PhaseLink {
    let gains: Vec<Vec<Complex64>> = g2_true
        .iter()
        .map(|g| {
            let h = cascade(g1_true, g, theta, amplitudes);
            precoding.columns.iter().map(|w| dot(&h, w)).collect()
        })
        .collect();
    let mut sinrs = Vec::with_capacity(gains.len());
    let mut rates = Vec::with_capacity(gains.len());
    for (k, row) in gains.iter().enumerate() {
        let s = row[k].norm_sqr();
        let i: f64 = row.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, g)| g.norm_sqr()).sum();
        let q = sinr(s, i, phi, noise_power);
        sinrs.push(q);
        rates.push(shannon_rate(bandwidth, q));
    }
    PhaseLink { fraction: 1.0, effective_gain: gains, sinr: sinrs, rate: rates }
}

/// Rates over a slot made of several reflection phases; the slot rate is the
/// time-weighted sum of the per-phase rates.
#[allow(clippy::too_many_arguments)]
pub fn sinr_and_rate(
    g1_true: &ComplexMatrix,
    g2_true: &[Vec<Complex64>],
    theta: &[f64],
    phases: &[ReflectPhase],
    precoding: &Precoding,
    phi: f64,
    noise_power: f64,
    bandwidth: f64,
) -> LinkBudget {
    let k = g2_true.len();
    let mut rate = vec![0.0; k];
    let mut links = Vec::with_capacity(phases.len());
    for ph in phases {
        let mut link = phase_link(g1_true, g2_true, theta, &ph.amplitudes, precoding, phi, noise_power, bandwidth);
        link.fraction = ph.fraction;
        for (acc, r) in rate.iter_mut().zip(&link.rate) {
            *acc += ph.fraction * r;
        }
        links.push(link);
    }
    LinkBudget { p_inc_per_element: incident_power(g1_true, precoding), phases: links, rate }
}
