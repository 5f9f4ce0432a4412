//! Positions and motion of the base station, the UAV-mounted RIS and the IoT nodes.

use std::ops::{Add, Mul, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Point in meters. `z` is height above ground.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3 {
    pub const ORIGIN: Position3 = Position3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Position3 { x, y, z }
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn distance(self, other: Position3) -> f64 {
        (self - other).norm()
    }

    pub fn horizontal_distance(self, other: Position3) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Position3 {
    type Output = Position3;
    fn add(self, rhs: Position3) -> Position3 {
        Position3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Position3 {
    type Output = Position3;
    fn sub(self, rhs: Position3) -> Position3 {
        Position3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Position3 {
    type Output = Position3;
    fn mul(self, rhs: f64) -> Position3 {
        Position3::new(self.x * rhs, self.y * rhs, self.z * rhs)
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: Position3,
    pub max: Position3,
}

impl Bounds {
    pub fn new(min: Position3, max: Position3) -> Self {
        Bounds { min, max }
    }

    pub fn contains(&self, p: Position3) -> bool {
        (self.min.x..=self.max.x).contains(&p.x)
            && (self.min.y..=self.max.y).contains(&p.y)
            && (self.min.z..=self.max.z).contains(&p.z)
    }

    pub fn clamp(&self, p: Position3) -> Position3 {
        Position3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }

    pub fn center(&self) -> Position3 {
        (self.min + self.max) * 0.5
    }

    /// Half-extent per axis; degenerate axes report 1 so that they can be used
    /// as a normalization divisor.
    pub fn half_extent(&self) -> Position3 {
        let h = (self.max - self.min) * 0.5;
        let nz = |v: f64| if v > 0.0 { v } else { 1.0 };
        Position3::new(nz(h.x), nz(h.y), nz(h.z))
    }

    pub fn sample(&self, rng: &mut SimRng) -> Position3 {
        let draw = |rng: &mut SimRng, lo: f64, hi: f64| if hi > lo { rng.random_range(lo..=hi) } else { lo };
        Position3::new(
            draw(rng, self.min.x, self.max.x),
            draw(rng, self.min.y, self.max.y),
            draw(rng, self.min.z, self.max.z),
        )
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        let ok = self.min.is_finite()
            && self.max.is_finite()
            && self.min.x <= self.max.x
            && self.min.y <= self.max.y
            && self.min.z <= self.max.z
            && self.min.z >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(path, "bounds must be finite, ordered, and above ground"))
        }
    }
}

/// Altitude band the UAV is allowed to occupy, plus its service altitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AltitudeBand {
    pub service: f64,
    pub min: f64,
    pub max: f64,
}

impl AltitudeBand {
    pub fn clamp(&self, z: f64) -> f64 {
        z.clamp(self.min, self.max)
    }
}

/// Random-waypoint node speeds, m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeMobility {
    pub speed_min: f64,
    pub speed_max: f64,
}

impl NodeMobility {
    fn draw_speed(&self, rng: &mut SimRng) -> f64 {
        if self.speed_max > self.speed_min {
            rng.random_range(self.speed_min..=self.speed_max)
        } else {
            self.speed_min
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub bs_position: Position3,
    pub uav_position: Position3,
    /// Element offsets relative to the UAV, row-major over the planar grid.
    pub ris_element_offsets: Vec<Position3>,
    pub node_positions: Vec<Position3>,
    pub node_velocities: Vec<Position3>,
    pub node_waypoints: Vec<Position3>,
    pub node_speeds: Vec<f64>,
    pub bounds: Bounds,
}

impl Scene {
    /// Nodes are placed uniformly inside `bounds`, each with a fresh waypoint and speed.
    pub fn random(
        bs_position: Position3,
        uav_position: Position3,
        ris_element_offsets: Vec<Position3>,
        n_nodes: usize,
        bounds: Bounds,
        mobility: &NodeMobility,
        rng: &mut SimRng,
    ) -> Scene {
        let node_positions: Vec<_> = (0..n_nodes).map(|_| bounds.sample(rng)).collect();
        let node_waypoints: Vec<_> = (0..n_nodes).map(|_| bounds.sample(rng)).collect();
        let node_speeds: Vec<_> = (0..n_nodes).map(|_| mobility.draw_speed(rng)).collect();
        let node_velocities = node_positions
            .iter()
            .zip(&node_waypoints)
            .zip(&node_speeds)
            .map(|((&p, &w), &s)| heading(p, w) * s)
            .collect();
        Scene {
            bs_position,
            uav_position,
            ris_element_offsets,
            node_positions,
            node_velocities,
            node_waypoints,
            node_speeds,
            bounds,
        }
    }

    pub fn n_elements(&self) -> usize {
        self.ris_element_offsets.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.node_positions.len()
    }
}

fn heading(from: Position3, to: Position3) -> Position3 {
    let d = to - from;
    let n = d.norm();
    if n > 0.0 {
        d * (1.0 / n)
    } else {
        Position3::ORIGIN
    }
}

/// Planar `rows x cols` grid in the horizontal plane, centered on the UAV.
/// The grid is the most square factorization of `n_elements`.
pub fn ris_grid(n_elements: usize, spacing: f64) -> Vec<Position3> {
    let mut rows = (n_elements as f64).sqrt().floor() as usize;
    while rows > 1 && n_elements % rows != 0 {
        rows -= 1;
    }
    let rows = rows.max(1);
    let cols = n_elements / rows;
    let cx = (cols as f64 - 1.0) * 0.5;
    let cy = (rows as f64 - 1.0) * 0.5;
    (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| Position3::new((c as f64 - cx) * spacing, (r as f64 - cy) * spacing, 0.0))
        .collect()
}

pub fn element_world_positions(scene: &Scene) -> Vec<Position3> {
    scene.ris_element_offsets.iter().map(|&o| scene.uav_position + o).collect()
}

/// Moves horizontally toward `target` by at most `v_max * dt`, holding the
/// service altitude.
pub fn uav_step(current: Position3, target: Position3, v_max: f64, dt: f64, altitude: &AltitudeBand) -> Position3 {
    let z = altitude.clamp(altitude.service);
    let dx = target.x - current.x;
    let dy = target.y - current.y;
    let dist = dx.hypot(dy);
    let reach = (v_max * dt).max(0.0);
    if dist <= reach {
        return Position3::new(target.x, target.y, z);
    }
    let s = reach / dist;
    Position3::new(current.x + dx * s, current.y + dy * s, z)
}

/// One random-waypoint step for every node. A node that reaches its waypoint
/// stops there for the rest of the step and draws a new waypoint and speed.
pub fn node_mobility_step(scene: &Scene, dt: f64, mobility: &NodeMobility, rng: &mut SimRng) -> Scene {
    let mut next = scene.clone();
    advance_nodes(&mut next, dt, mobility, rng);
    next
}

pub(crate) fn advance_nodes(scene: &mut Scene, dt: f64, mobility: &NodeMobility, rng: &mut SimRng) {
    for i in 0..scene.node_positions.len() {
        let pos = scene.node_positions[i];
        let wp = scene.node_waypoints[i];
        let step = scene.node_speeds[i] * dt;
        let remaining = pos.distance(wp);
        let new_pos = if remaining <= step {
            scene.node_waypoints[i] = scene.bounds.sample(rng);
            scene.node_speeds[i] = mobility.draw_speed(rng);
            wp
        } else {
            pos + heading(pos, wp) * step
        };
        let new_pos = scene.bounds.clamp(new_pos);
        scene.node_positions[i] = new_pos;
        scene.node_velocities[i] = heading(new_pos, scene.node_waypoints[i]) * scene.node_speeds[i];
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Position3>,
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squares after every Lloyd iteration.
    pub inertia_history: Vec<f64>,
}

impl KMeans {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().expect("at least one iteration")
    }
}

/// Lloyd's algorithm with farthest-point seeding: the first centroid is a
/// seed-selected point, each next one is the point farthest from the chosen
/// set (ties to the lowest index). Empty clusters keep their centroid.
pub fn kmeans(points: &[Position3], n_clusters: usize, max_iters: usize, seed: u64) -> Result<KMeans> {
    if points.is_empty() {
        return Err(Error::invalid("kmeans needs at least one point"));
    }
    if n_clusters == 0 || n_clusters > points.len() {
        return Err(Error::invalid(format!(
            "n_clusters must be in 1..={}, got {n_clusters}",
            points.len()
        )));
    }
    if max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }

    let mut rng = crate::rng::stream(seed, 0);
    let first = rng.random_range(0..points.len());
    let mut centroids = vec![points[first]];
    let mut nearest: Vec<f64> = points.iter().map(|p| p.distance(points[first]).powi(2)).collect();
    while centroids.len() < n_clusters {
        let mut best = 0;
        for (i, &d) in nearest.iter().enumerate() {
            if d > nearest[best] {
                best = i;
            }
        }
        let c = points[best];
        centroids.push(c);
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(p.distance(c).powi(2));
        }
    }

    let mut assignment = vec![0; points.len()];
    let mut inertia_history = Vec::new();
    for iter in 0..max_iters {
        let mut changed = false;
        for (a, p) in assignment.iter_mut().zip(points) {
            let best = closest(&centroids, *p);
            if best != *a {
                *a = best;
                changed = true;
            }
        }
        let mut sums = vec![Position3::ORIGIN; n_clusters];
        let mut counts = vec![0usize; n_clusters];
        for (&a, &p) in assignment.iter().zip(points) {
            sums[a] = sums[a] + p;
            counts[a] += 1;
        }
        for ((c, s), n) in centroids.iter_mut().zip(&sums).zip(&counts) {
            if *n > 0 {
                *c = *s * (1.0 / *n as f64);
            }
        }
        inertia_history.push(within_cluster_ss(points, &centroids, &assignment));
        if !changed && iter > 0 {
            break;
        }
    }
    Ok(KMeans { centroids, assignment, inertia_history })
}

fn closest(centroids: &[Position3], p: Position3) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = p.distance(*c).powi(2);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

pub fn within_cluster_ss(points: &[Position3], centroids: &[Position3], assignment: &[usize]) -> f64 {
    points.iter().zip(assignment).map(|(p, &a)| p.distance(centroids[a]).powi(2)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    const BAND: AltitudeBand = AltitudeBand { service: 50.0, min: 20.0, max: 120.0 };

    fn p(x: f64, y: f64, z: f64) -> Position3 {
        Position3::new(x, y, z)
    }

    fn close(a: Position3, b: Position3) -> bool {
        a.distance(b) < 1e-12
    }

    #[test]
    fn kmeans_single_cluster_is_mean() {
        let km = kmeans(&[p(0.0, 0.0, 0.0), p(2.0, 0.0, 0.0)], 1, 10, 3).unwrap();
        assert!(close(km.centroids[0], p(1.0, 0.0, 0.0)));
    }

    #[test]
    fn kmeans_two_separated_pairs() {
        let pts = [p(0.0, 0.0, 0.0), p(0.0, 1.0, 0.0), p(10.0, 0.0, 0.0), p(10.0, 1.0, 0.0)];
        let km = kmeans(&pts, 2, 20, 11).unwrap();
        let mut c = km.centroids.clone();
        c.sort_by(|a, b| a.x.total_cmp(&b.x));
        assert!(close(c[0], p(0.0, 0.5, 0.0)));
        assert!(close(c[1], p(10.0, 0.5, 0.0)));
        assert_eq!(km.assignment[0], km.assignment[1]);
        assert_eq!(km.assignment[2], km.assignment[3]);
    }

    #[test]
    fn kmeans_rejects_bad_input() {
        assert!(kmeans(&[], 1, 10, 0).is_err());
        assert!(kmeans(&[p(0.0, 0.0, 0.0)], 2, 10, 0).is_err());
        assert!(kmeans(&[p(0.0, 0.0, 0.0)], 1, 0, 0).is_err());
    }

    /// Brute-force minimum within-cluster sum of squares over every
    /// assignment of the points to `k` labeled clusters.
    fn brute_force_wcss(points: &[Position3], k: usize) -> f64 {
        let n = points.len();
        let total = k.pow(n as u32);
        let mut best = f64::INFINITY;
        let mut labels = vec![0usize; n];
        for code in 0..total {
            let mut c = code;
            for l in labels.iter_mut() {
                *l = c % k;
                c /= k;
            }
            let mut sums = vec![(0.0, 0.0, 0.0, 0usize); k];
            for (&l, q) in labels.iter().zip(points) {
                sums[l].0 += q.x;
                sums[l].1 += q.y;
                sums[l].2 += q.z;
                sums[l].3 += 1;
            }
            if sums.iter().any(|s| s.3 == 0) {
                continue;
            }
            let wcss: f64 = labels
                .iter()
                .zip(points)
                .map(|(&l, q)| {
                    let s = sums[l];
                    let n = s.3 as f64;
                    (q.x - s.0 / n).powi(2) + (q.y - s.1 / n).powi(2) + (q.z - s.2 / n).powi(2)
                })
                .sum();
            best = best.min(wcss);
        }
        best
    }

    #[test]
    fn kmeans_matches_partition_enumeration() {
        let mut rng = stream(2024, 9);
        let centers = [p(0.0, 0.0, 0.0), p(60.0, 10.0, 0.0), p(20.0, 70.0, 5.0)];
        let pts: Vec<_> = (0..12)
            .map(|i| {
                let c = centers[i % 3];
                c + p(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0), rng.random_range(0.0..3.0))
            })
            .collect();
        let km = kmeans(&pts, 3, 100, 5).unwrap();
        let oracle = brute_force_wcss(&pts, 3);
        assert!((km.inertia() - oracle).abs() <= 1e-9 * oracle.max(1.0), "{} vs {}", km.inertia(), oracle);
    }

    #[test]
    fn kmeans_deterministic_given_seed() {
        let mut rng = stream(1, 1);
        let pts: Vec<_> = (0..30).map(|_| p(rng.random(), rng.random(), 0.0)).collect();
        assert_eq!(kmeans(&pts, 4, 50, 9).unwrap(), kmeans(&pts, 4, 50, 9).unwrap());
    }

    #[test]
    fn uav_step_examples() {
        let next = uav_step(p(0.0, 0.0, 50.0), p(100.0, 0.0, 50.0), 10.0, 1.0, &BAND);
        assert!(close(next, p(10.0, 0.0, 50.0)));
        let here = p(3.0, 4.0, 50.0);
        assert_eq!(uav_step(here, here, 10.0, 1.0, &BAND), here);
        let arrive = uav_step(p(0.0, 0.0, 50.0), p(3.0, 0.0, 50.0), 10.0, 1.0, &BAND);
        assert_eq!(arrive, p(3.0, 0.0, 50.0));
    }

    #[test]
    fn uav_altitude_is_clamped() {
        let band = AltitudeBand { service: 500.0, min: 10.0, max: 100.0 };
        assert_eq!(uav_step(p(0.0, 0.0, 0.0), p(0.0, 0.0, 0.0), 1.0, 1.0, &band).z, 100.0);
    }

    #[test]
    fn element_positions_translate_rigidly() {
        let mut rng = stream(3, 0);
        let bounds = Bounds::new(p(0.0, 0.0, 0.0), p(100.0, 100.0, 0.0));
        let mob = NodeMobility { speed_min: 0.5, speed_max: 2.0 };
        let offsets = ris_grid(8, 0.0625);
        let mut scene = Scene::random(p(0.0, 0.0, 10.0), p(5.0, 5.0, 50.0), offsets, 2, bounds, &mob, &mut rng);
        let before = element_world_positions(&scene);
        assert_eq!(before.len(), 8);
        let delta = p(1.5, -2.0, 0.25);
        scene.uav_position = scene.uav_position + delta;
        let after = element_world_positions(&scene);
        for (a, b) in before.iter().zip(&after) {
            assert!(close(*a + delta, *b));
        }
        scene.ris_element_offsets = vec![Position3::ORIGIN];
        assert_eq!(element_world_positions(&scene), vec![scene.uav_position]);
    }

    #[test]
    fn ris_grid_is_uniform_and_centered() {
        let g = ris_grid(16, 0.5);
        assert_eq!(g.len(), 16);
        let c = g.iter().fold(Position3::ORIGIN, |a, &b| a + b) * (1.0 / 16.0);
        assert!(c.norm() < 1e-12);
        assert!((g[1].x - g[0].x - 0.5).abs() < 1e-12);
        let g8 = ris_grid(8, 1.0);
        let ys: std::collections::BTreeSet<i64> = g8.iter().map(|q| (q.y * 10.0) as i64).collect();
        assert_eq!(ys.len(), 2);
    }

    #[test]
    fn zero_speed_nodes_stay_put() {
        let mut rng = stream(4, 0);
        let bounds = Bounds::new(p(0.0, 0.0, 0.0), p(50.0, 50.0, 0.0));
        let mob = NodeMobility { speed_min: 0.0, speed_max: 0.0 };
        let scene = Scene::random(p(0.0, 0.0, 10.0), p(0.0, 0.0, 50.0), ris_grid(4, 0.1), 3, bounds, &mob, &mut rng);
        let next = node_mobility_step(&scene, 1.0, &mob, &mut rng);
        assert_eq!(scene.node_positions, next.node_positions);
    }

    #[test]
    fn node_at_waypoint_draws_new_waypoint_in_bounds() {
        let mut rng = stream(5, 0);
        let bounds = Bounds::new(p(0.0, 0.0, 0.0), p(50.0, 50.0, 0.0));
        let mob = NodeMobility { speed_min: 1.0, speed_max: 1.0 };
        let mut scene = Scene::random(p(0.0, 0.0, 10.0), p(0.0, 0.0, 50.0), ris_grid(4, 0.1), 1, bounds, &mob, &mut rng);
        scene.node_waypoints[0] = scene.node_positions[0];
        let next = node_mobility_step(&scene, 1.0, &mob, &mut rng);
        assert!(bounds.contains(next.node_waypoints[0]));
        assert_ne!(next.node_waypoints[0], scene.node_waypoints[0]);
    }

    #[test]
    fn mobility_monte_carlo_stays_in_bounds_with_expected_leg_speed() {
        let mut rng = stream(6, 0);
        let bounds = Bounds::new(p(0.0, 0.0, 0.0), p(100.0, 100.0, 0.0));
        let mob = NodeMobility { speed_min: 0.5, speed_max: 2.0 };
        let mut scene = Scene::random(p(0.0, 0.0, 10.0), p(0.0, 0.0, 50.0), ris_grid(4, 0.1), 5, bounds, &mob, &mut rng);
        // Mean over the speeds drawn for each leg; the time-average speed of a
        // random-waypoint node is the harmonic mean and is lower by design.
        let mut leg_speeds: Vec<f64> = scene.node_speeds.clone();
        for _ in 0..10_000 {
            let prev = scene.node_waypoints.clone();
            advance_nodes(&mut scene, 1.0, &mob, &mut rng);
            for i in 0..scene.n_nodes() {
                assert!(bounds.contains(scene.node_positions[i]));
                assert!(scene.node_positions[i].is_finite());
                if scene.node_waypoints[i] != prev[i] {
                    leg_speeds.push(scene.node_speeds[i]);
                }
            }
        }
        let mean = leg_speeds.iter().sum::<f64>() / leg_speeds.len() as f64;
        assert!(leg_speeds.len() > 200);
        assert!((mean / 1.25 - 1.0).abs() < 0.05, "mean leg speed {mean}");
    }

    proptest! {
        #[test]
        fn uav_step_never_moves_away(
            cx in -500.0f64..500.0, cy in -500.0f64..500.0,
            tx in -500.0f64..500.0, ty in -500.0f64..500.0,
            v in 0.1f64..30.0, dt in 0.01f64..5.0,
        ) {
            let cur = p(cx, cy, 50.0);
            let tgt = p(tx, ty, 0.0);
            let next = uav_step(cur, tgt, v, dt, &BAND);
            prop_assert!(next.horizontal_distance(tgt) <= cur.horizontal_distance(tgt) + 1e-9);
            prop_assert!(cur.horizontal_distance(next) <= v * dt + 1e-9);
        }

        #[test]
        fn kmeans_objective_never_increases(seed in 0u64..500, k in 1usize..5) {
            let mut rng = stream(seed, 3);
            let pts: Vec<_> = (0..25).map(|_| p(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0), 0.0)).collect();
            let km = kmeans(&pts, k, 50, seed).unwrap();
            for w in km.inertia_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
            for (i, q) in pts.iter().enumerate() {
                let own = q.distance(km.centroids[km.assignment[i]]);
                for c in &km.centroids {
                    prop_assert!(own <= q.distance(*c) + 1e-9);
                }
            }
        }
    }
}
