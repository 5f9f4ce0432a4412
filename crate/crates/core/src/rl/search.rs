//! Coarse-grid exhaustive search over slot actions.
//!
//! The grid covers the split fractions, one reflection share shared by all
//! elements, and a simplex grid over node powers. Per-element phases come
//! from a greedy coordinate sweep over a uniform codebook, alternated with
//! the grid pass. The result is the best point of that grid, not a global
//! optimum.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::energy::{EhAction, EhProtocol};
use crate::env::{Env, SlotReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GridBest {
    pub index: Vec<usize>,
    pub value: f64,
    pub evaluated: u128,
}

/// Number of points on the grid, saturating.
pub fn grid_size(dims: &[usize]) -> u128 {
    dims.iter().fold(1u128, |acc, &d| acc.saturating_mul(d as u128))
}

/// Lexicographic enumeration (last axis fastest) of a Cartesian grid. The
/// first maximizer wins ties; NaN values are never selected.
pub fn grid_argmax<F>(dims: &[usize], budget: u128, mut f: F) -> Result<GridBest>
where
    F: FnMut(&[usize]) -> Result<f64>,
{
    let size = grid_size(dims);
    if size == 0 {
        return Err(Error::invalid("grid has an empty axis"));
    }
    if size > budget {
        return Err(Error::Budget { size, budget });
    }
    let mut idx = vec![0usize; dims.len()];
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut evaluated = 0u128;
    loop {
        let v = f(&idx)?;
        evaluated += 1;
        if !v.is_nan() && best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((idx.clone(), v));
        }
        let mut axis = dims.len();
        loop {
            if axis == 0 {
                let (index, value) = best.unwrap_or((vec![0; dims.len()], f64::NAN));
                return Ok(GridBest { index, value, evaluated });
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < dims[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
}

/// All integer vectors of length `k` with entries summing to at most `levels`,
/// in lexicographic order.
pub fn simplex_grid(k: usize, levels: usize) -> Vec<Vec<usize>> {
    fn rec(k: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for q in 0..=left {
            cur.push(q);
            rec(k, left - q, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, levels, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Uniform grid on `[0, 1]` with `n` points (a single point sits at 0.5).
pub fn unit_levels(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    /// Grid points per split fraction on `[0, 1]`.
    pub fraction_levels: usize,
    /// Grid points of the shared reflection share (hybrid only).
    pub omega_levels: usize,
    /// Phase codebook size.
    pub phase_levels: usize,
    /// Power quanta distributed over the nodes; each quantum is `p_max / power_levels`.
    pub power_levels: usize,
    /// Grid-then-phase-sweep rounds.
    pub rounds: usize,
    /// Maximum number of slot evaluations.
    pub budget: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { fraction_levels: 6, omega_levels: 6, phase_levels: 8, power_levels: 4, rounds: 2, budget: 1_000_000 }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        for (path, v) in [
            ("fraction_levels", self.fraction_levels),
            ("omega_levels", self.omega_levels),
            ("phase_levels", self.phase_levels),
            ("power_levels", self.power_levels),
            ("rounds", self.rounds),
        ] {
            if v == 0 {
                return Err(Error::config(format!("search.{path}"), "must be >= 1"));
            }
        }
        Ok(())
    }

    /// Fraction axes of the grid for `protocol`.
    fn fraction_dims(&self, protocol: EhProtocol) -> Vec<usize> {
        match protocol {
            EhProtocol::Hybrid => vec![self.fraction_levels, self.fraction_levels, self.omega_levels],
            _ => vec![self.fraction_levels],
        }
    }

    /// Total slot evaluations for one search.
    pub fn evaluations(&self, protocol: EhProtocol, elements: usize, nodes: usize) -> u128 {
        let mut dims = self.fraction_dims(protocol);
        dims.push(simplex_grid(nodes, self.power_levels).len());
        let grid = grid_size(&dims);
        let sweep = (elements as u128).saturating_mul(self.phase_levels as u128);
        (self.rounds as u128).saturating_mul(grid.saturating_add(sweep)).saturating_add(grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub action: EhAction,
    pub report: SlotReport,
    pub evaluations: u128,
}

/// Best slot reward over the coarse grid for the environment's current slot.
pub fn exhaustive_search(env: &Env, cfg: &SearchConfig) -> Result<SearchResult> {
    cfg.validate()?;
    let ec = env.config();
    let (l, k, protocol, p_max) = (ec.elements, ec.nodes, ec.protocol, ec.p_max);
    let total = cfg.evaluations(protocol, l, k);
    if total > cfg.budget as u128 {
        return Err(Error::Budget { size: total, budget: cfg.budget as u128 });
    }
    let fractions = unit_levels(cfg.fraction_levels);
    let omegas = unit_levels(cfg.omega_levels);
    let powers = simplex_grid(k, cfg.power_levels);
    let codebook: Vec<f64> = (0..cfg.phase_levels).map(|i| 2.0 * PI * i as f64 / cfg.phase_levels as f64).collect();
    let mut dims = cfg.fraction_dims(protocol);
    dims.push(powers.len());

    let build = |idx: &[usize], theta: &[f64]| -> EhAction {
        let (tau, rho, omega) = match protocol {
            EhProtocol::TimeSwitching => (fractions[idx[0]], 0.0, 0.0),
            EhProtocol::PowerSplitting => (0.0, fractions[idx[0]], 0.0),
            EhProtocol::Hybrid => (fractions[idx[0]], fractions[idx[1]], omegas[idx[2]]),
        };
        let q = &powers[idx[idx.len() - 1]];
        EhAction {
            tau,
            rho,
            omega: vec![omega; l],
            theta: theta.to_vec(),
            power: q.iter().map(|&q| p_max * q as f64 / cfg.power_levels as f64).collect(),
        }
    };
    let reward = |a: &EhAction| env.evaluate(a).map(|r| r.reward);

    let mut evaluations = 0u128;
    let mut theta = vec![0.0; l];
    let mut best_idx = vec![0; dims.len()];
    let mut best_val = f64::NEG_INFINITY;
    for _ in 0..cfg.rounds {
        let g = grid_argmax(&dims, u128::MAX, |idx| reward(&build(idx, &theta)))?;
        evaluations += g.evaluated;
        if g.value > best_val || best_val == f64::NEG_INFINITY {
            best_idx = g.index;
            best_val = g.value;
        }
        for e in 0..l {
            let mut current = best_val;
            let mut pick = theta[e];
            for &c in &codebook {
                let mut trial = theta.clone();
                trial[e] = c;
                let v = reward(&build(&best_idx, &trial))?;
                evaluations += 1;
                if v > current {
                    current = v;
                    pick = c;
                }
            }
            theta[e] = pick;
            best_val = current;
        }
    }
    let g = grid_argmax(&dims, u128::MAX, |idx| reward(&build(idx, &theta)))?;
    evaluations += g.evaluated;
    if g.value >= best_val {
        best_idx = g.index;
    }
    let action = build(&best_idx, &theta);
    let report = env.evaluate(&action)?;
    Ok(SearchResult { action, report, evaluations })
}
