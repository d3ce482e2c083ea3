// SPDX-License-Identifier: Apache-2.0

//! Binary particle swarm over cluster-to-tile assignments.
//!
//! A position is a |C|×|T| bit matrix with exactly one set bit per cluster
//! row, stored as the chosen tile per cluster. Velocities are real |C|×|T|
//! matrices. Updates are synchronous: all particles move, are evaluated, and
//! only then is the global best refreshed.

use std::error::Error as StdError;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SwarmError {
    #[error("invalid swarm configuration: {0}")]
    InvalidConfig(String),
    #[error("evaluation failed at iteration {iter}, particle {particle}: {source}")]
    Evaluation {
        iter: usize,
        particle: usize,
        source: Box<dyn StdError + Send + Sync>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Fitness {
    /// Maximize minimum effective lifetime.
    #[default]
    Lifetime,
    /// Minimize total energy.
    Energy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwarmConfig {
    pub particles: usize,
    pub iterations: usize,
    pub phi1: f64,
    pub phi2: f64,
    pub v_clamp: f64,
    pub seed: u64,
    pub fitness: Fitness,
    /// Multiply the cognitive and social terms by fresh uniform randoms.
    pub random_scaling: bool,
    /// Set a bit to 0 (not 1) when rand < sigmoid(V).
    pub inverted_binarization: bool,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            particles: 20,
            iterations: 100,
            phi1: 1.5,
            phi2: 1.5,
            v_clamp: 4.0,
            seed: 0,
            fitness: Fitness::Lifetime,
            random_scaling: true,
            inverted_binarization: false,
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<(), SwarmError> {
        let bad = |m: String| Err(SwarmError::InvalidConfig(m));
        if self.particles == 0 {
            return bad("particles must be >= 1".into());
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if !(self.phi1 >= 0.0 && self.phi2 >= 0.0) {
            return bad(format!("phi1 ({}) and phi2 ({}) must be >= 0", self.phi1, self.phi2));
        }
        if !(self.v_clamp > 0.0) || !self.v_clamp.is_finite() {
            return bad(format!("v_clamp = {} must be finite and > 0", self.v_clamp));
        }
        Ok(())
    }
}

/// One-hot cluster-to-tile assignment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mapping {
    pub tiles: usize,
    /// Tile of every cluster.
    pub assignment: Vec<usize>,
}

impl Mapping {
    pub fn clusters(&self) -> usize {
        self.assignment.len()
    }

    pub fn bit(&self, cluster: usize, tile: usize) -> bool {
        self.assignment[cluster] == tile
    }

    pub fn to_matrix(&self) -> Vec<Vec<u8>> {
        self.assignment
            .iter()
            .map(|&t| (0..self.tiles).map(|y| u8::from(y == t)).collect())
            .collect()
    }

    pub fn from_matrix(m: &[Vec<u8>]) -> Option<Self> {
        let tiles = m.first().map_or(0, Vec::len);
        let mut assignment = Vec::with_capacity(m.len());
        for row in m {
            if row.len() != tiles || row.iter().map(|&b| b as usize).sum::<usize>() != 1 {
                return None;
            }
            assignment.push(row.iter().position(|&b| b == 1)?);
        }
        Some(Self { tiles, assignment })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub energy_j: f64,
    pub min_lifetime: f64,
    pub feasible: bool,
    /// Constraint excess of an infeasible mapping; 0 when feasible.
    #[serde(default)]
    pub violation: f64,
}

impl Evaluation {
    pub fn feasible(energy_j: f64, min_lifetime: f64) -> Self {
        Self {
            energy_j,
            min_lifetime,
            feasible: true,
            violation: 0.0,
        }
    }

    /// Infeasible with no measure of how far; scores −∞.
    pub fn infeasible() -> Self {
        Self::violating(f64::INFINITY)
    }

    /// Infeasible by `violation` > 0 units of excess.
    pub fn violating(violation: f64) -> Self {
        Self {
            energy_j: f64::NAN,
            min_lifetime: f64::NAN,
            feasible: false,
            violation,
        }
    }

    /// Larger is better. Infeasible mappings score below every feasible one,
    /// in `[-f64::MAX, -f64::MAX / 2)`, decreasing with their violation.
    pub fn score(&self, fitness: Fitness) -> f64 {
        if !self.feasible {
            let v = self.violation;
            if !(v.is_finite() && v >= 0.0) {
                return f64::NEG_INFINITY;
            }
            return -f64::MAX * (0.5 + 0.5 * v / (1.0 + v));
        }
        match fitness {
            Fitness::Lifetime => self.min_lifetime,
            Fitness::Energy => -self.energy_j,
        }
    }
}

pub trait Evaluator: Sync {
    type Error: StdError + Send + Sync + 'static;

    fn evaluate(&self, mapping: &Mapping) -> Result<Evaluation, Self::Error>;
}

/// Adapts a closure into an [`Evaluator`].
pub struct FnEvaluator<F>(pub F);

impl<F, E> Evaluator for FnEvaluator<F>
where
    F: Fn(&Mapping) -> Result<Evaluation, E> + Sync,
    E: StdError + Send + Sync + 'static,
{
    type Error = E;

    fn evaluate(&self, mapping: &Mapping) -> Result<Evaluation, E> {
        (self.0)(mapping)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter: usize,
    pub particle: usize,
    #[serde(rename = "energy_J")]
    pub energy_j: Option<f64>,
    pub min_lifetime: Option<f64>,
    pub feasible: bool,
    pub accepted_as_gbest: bool,
    pub assignment: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<usize>,
    pub velocity: Vec<f64>,
    pub best_position: Vec<usize>,
    pub best_score: f64,
    pub best_eval: Evaluation,
}

#[derive(Debug, Clone)]
pub struct Swarm {
    pub config: SwarmConfig,
    pub clusters: usize,
    pub tiles: usize,
    pub particles: Vec<Particle>,
    pub g_best: Vec<usize>,
    pub g_best_score: f64,
    pub g_best_eval: Evaluation,
    pub iteration: usize,
    rng: ChaCha8Rng,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn evaluate_all<E: Evaluator>(
    evaluator: &E,
    tiles: usize,
    positions: &[Vec<usize>],
    iter: usize,
) -> Result<Vec<Evaluation>, SwarmError> {
    positions
        .par_iter()
        .enumerate()
        .map(|(p, pos)| {
            let m = Mapping {
                tiles,
                assignment: pos.clone(),
            };
            evaluator.evaluate(&m).map_err(|e| SwarmError::Evaluation {
                iter,
                particle: p,
                source: Box::new(e),
            })
        })
        .collect()
}

fn record(iter: usize, particle: usize, pos: &[usize], ev: &Evaluation) -> LogRecord {
    let keep = |v: f64| (ev.feasible && v.is_finite()).then_some(v);
    LogRecord {
        iter,
        particle,
        energy_j: keep(ev.energy_j),
        min_lifetime: keep(ev.min_lifetime),
        feasible: ev.feasible,
        accepted_as_gbest: false,
        assignment: pos.to_vec(),
    }
}

/// First index with the strictly largest score.
fn best_index(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = k;
        }
    }
    best
}

/// Seeded random positions and velocities; evaluates them as iteration 0.
pub fn init_swarm<E: Evaluator>(
    config: &SwarmConfig,
    clusters: usize,
    tiles: usize,
    evaluator: &E,
    log: &mut Vec<LogRecord>,
) -> Result<Swarm, SwarmError> {
    config.validate()?;
    if clusters == 0 || tiles == 0 {
        return Err(SwarmError::InvalidConfig(format!(
            "need >= 1 cluster and >= 1 tile, got {clusters} and {tiles}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut positions = Vec::with_capacity(config.particles);
    let mut velocities = Vec::with_capacity(config.particles);
    for _ in 0..config.particles {
        positions.push((0..clusters).map(|_| rng.random_range(0..tiles)).collect::<Vec<_>>());
        velocities.push(
            (0..clusters * tiles)
                .map(|_| rng.random_range(-config.v_clamp..=config.v_clamp))
                .collect::<Vec<_>>(),
        );
    }
    let evals = evaluate_all(evaluator, tiles, &positions, 0)?;
    let scores: Vec<f64> = evals.iter().map(|e| e.score(config.fitness)).collect();
    let g = best_index(&scores);
    let start = log.len();
    for (p, (pos, ev)) in positions.iter().zip(&evals).enumerate() {
        log.push(record(0, p, pos, ev));
    }
    log[start + g].accepted_as_gbest = true;
    let particles = positions
        .into_iter()
        .zip(velocities)
        .zip(evals.iter().zip(&scores))
        .map(|((position, velocity), (ev, &score))| Particle {
            best_position: position.clone(),
            position,
            velocity,
            best_score: score,
            best_eval: *ev,
        })
        .collect::<Vec<_>>();
    Ok(Swarm {
        config: config.clone(),
        clusters,
        tiles,
        g_best: particles[g].position.clone(),
        g_best_score: scores[g],
        g_best_eval: evals[g],
        particles,
        iteration: 0,
        rng,
    })
}

impl Swarm {
    pub fn best_mapping(&self) -> Mapping {
        Mapping {
            tiles: self.tiles,
            assignment: self.g_best.clone(),
        }
    }

    /// Moves every particle once, evaluates, then updates personal and global bests.
    pub fn step<E: Evaluator>(
        &mut self,
        evaluator: &E,
        log: &mut Vec<LogRecord>,
    ) -> Result<(), SwarmError> {
        let cfg = &self.config;
        let (nc, nt) = (self.clusters, self.tiles);
        let g_best = self.g_best.clone();
        for particle in &mut self.particles {
            let Particle {
                position,
                velocity,
                best_position,
                ..
            } = particle;
            for x in 0..nc {
                for y in 0..nt {
                    let k = x * nt + y;
                    let theta = f64::from(u8::from(position[x] == y));
                    let pb = f64::from(u8::from(best_position[x] == y));
                    let gb = f64::from(u8::from(g_best[x] == y));
                    let (r1, r2) = if cfg.random_scaling {
                        (self.rng.random::<f64>(), self.rng.random::<f64>())
                    } else {
                        (1.0, 1.0)
                    };
                    let v = velocity[k] + cfg.phi1 * r1 * (pb - theta) + cfg.phi2 * r2 * (gb - theta);
                    velocity[k] = v.clamp(-cfg.v_clamp, cfg.v_clamp);
                }
            }
            for x in 0..nc {
                let row = &velocity[x * nt..(x + 1) * nt];
                let mut ones = Vec::new();
                for (y, &v) in row.iter().enumerate() {
                    let draw = self.rng.random::<f64>() < sigmoid(v);
                    if draw != cfg.inverted_binarization {
                        ones.push(y);
                    }
                }
                let argmax = |cands: &mut dyn Iterator<Item = usize>| {
                    cands.fold(None, |best: Option<usize>, y| match best {
                        Some(b) if row[b] >= row[y] => Some(b),
                        _ => Some(y),
                    })
                };
                position[x] = match ones.len() {
                    1 => ones[0],
                    0 => argmax(&mut (0..nt)).expect("at least one tile"),
                    _ => argmax(&mut ones.into_iter()).expect("non-empty"),
                };
            }
        }

        self.iteration += 1;
        let iter = self.iteration;
        let positions: Vec<Vec<usize>> = self.particles.iter().map(|p| p.position.clone()).collect();
        let evals = evaluate_all(evaluator, nt, &positions, iter)?;
        let scores: Vec<f64> = evals.iter().map(|e| e.score(self.config.fitness)).collect();
        let start = log.len();
        for (p, (pos, ev)) in positions.iter().zip(&evals).enumerate() {
            log.push(record(iter, p, pos, ev));
        }
        for (p, particle) in self.particles.iter_mut().enumerate() {
            if scores[p] > particle.best_score {
                particle.best_score = scores[p];
                particle.best_position = positions[p].clone();
                particle.best_eval = evals[p];
            }
        }
        let g = best_index(&scores);
        if scores[g] > self.g_best_score {
            self.g_best_score = scores[g];
            self.g_best = positions[g].clone();
            self.g_best_eval = evals[g];
            log[start + g].accepted_as_gbest = true;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub best: Mapping,
    pub best_evaluation: Evaluation,
    pub best_score: f64,
    /// Global-best score after initialization and after every iteration.
    pub history: Vec<f64>,
    pub log: Vec<LogRecord>,
}

pub fn run<E: Evaluator>(
    config: &SwarmConfig,
    clusters: usize,
    tiles: usize,
    evaluator: &E,
) -> Result<RunResult, SwarmError> {
    let mut log = Vec::new();
    let mut swarm = init_swarm(config, clusters, tiles, evaluator, &mut log)?;
    let mut history = vec![swarm.g_best_score];
    for _ in 0..config.iterations {
        swarm.step(evaluator, &mut log)?;
        history.push(swarm.g_best_score);
    }
    Ok(RunResult {
        best: swarm.best_mapping(),
        best_evaluation: swarm.g_best_eval,
        best_score: swarm.g_best_score,
        history,
        log,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    /// Position in the input slice.
    pub index: usize,
    pub energy: f64,
    pub lifetime: f64,
}

/// Points not dominated under (lower energy, higher lifetime), by energy ascending.
///
/// Exact duplicates of a front point are all kept. Points with a NaN
/// coordinate are ignored.
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<ParetoPoint> {
    let mut order: Vec<usize> = (0..points.len())
        .filter(|&k| !points[k].0.is_nan() && !points[k].1.is_nan())
        .collect();
    order.sort_by(|&a, &b| {
        points[a]
            .0
            .total_cmp(&points[b].0)
            .then(points[b].1.total_cmp(&points[a].1))
            .then(a.cmp(&b))
    });
    let mut front = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for k in order {
        let (e, l) = points[k];
        let keep = match best {
            None => true,
            Some((be, bl)) => l > bl || (l == bl && e == be),
        };
        if keep {
            if best.is_none_or(|(_, bl)| l > bl) {
                best = Some((e, l));
            }
            front.push(ParetoPoint {
                index: k,
                energy: e,
                lifetime: l,
            });
        }
    }
    front
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn lifetime_table(table: Vec<f64>, tiles: usize) -> impl Fn(&Mapping) -> Result<Evaluation, Infallible> {
        move |m: &Mapping| {
            let idx = m.assignment.iter().fold(0, |acc, &t| acc * tiles + t);
            Ok(Evaluation::feasible(idx as f64, table[idx]))
        }
    }

    #[test]
    fn single_tile_is_all_ones() {
        let ev = FnEvaluator(lifetime_table(vec![3.0], 1));
        let mut log = Vec::new();
        let s = init_swarm(&SwarmConfig::default(), 1, 1, &ev, &mut log).unwrap();
        assert!(s.particles.iter().all(|p| p.position == vec![0]));
        assert!(log.iter().all(|r| r.min_lifetime == Some(3.0)));
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let ev = FnEvaluator(lifetime_table((0..16).map(f64::from).collect(), 4));
        let cfg = SwarmConfig {
            seed: 5,
            ..SwarmConfig::default()
        };
        let a = init_swarm(&cfg, 2, 4, &ev, &mut Vec::new()).unwrap();
        let b = init_swarm(&cfg, 2, 4, &ev, &mut Vec::new()).unwrap();
        assert_eq!(a.particles, b.particles);
        for p in &a.particles {
            assert!(p.velocity.iter().all(|v| v.abs() <= cfg.v_clamp));
        }
    }

    #[test]
    fn zero_acceleration_keeps_zero_velocity() {
        let ev = FnEvaluator(lifetime_table((0..9).map(f64::from).collect(), 3));
        let cfg = SwarmConfig {
            phi1: 0.0,
            phi2: 0.0,
            ..SwarmConfig::default()
        };
        let mut log = Vec::new();
        let mut s = init_swarm(&cfg, 2, 3, &ev, &mut log).unwrap();
        for p in &mut s.particles {
            p.velocity.iter_mut().for_each(|v| *v = 0.0);
        }
        for _ in 0..5 {
            s.step(&ev, &mut log).unwrap();
            assert!(s.particles.iter().all(|p| p.velocity.iter().all(|&v| v == 0.0)));
        }
    }

    #[test]
    fn infeasible_scores_below_feasible() {
        assert_eq!(Evaluation::infeasible().score(Fitness::Lifetime), f64::NEG_INFINITY);
        let (a, b) = (Evaluation::violating(1.0), Evaluation::violating(3.0));
        assert!(a.score(Fitness::Energy) > b.score(Fitness::Energy));
        assert!(a.score(Fitness::Energy) < Evaluation::feasible(1e300, 0.0).score(Fitness::Energy));
        assert!(b.score(Fitness::Lifetime) > Evaluation::infeasible().score(Fitness::Lifetime));
        let e = Evaluation::feasible(2.0, 7.0);
        assert_eq!(e.score(Fitness::Energy), -2.0);
        assert_eq!(e.score(Fitness::Lifetime), 7.0);
    }

    #[test]
    fn matrix_round_trip() {
        let m = Mapping {
            tiles: 3,
            assignment: vec![2, 0, 1],
        };
        assert_eq!(Mapping::from_matrix(&m.to_matrix()), Some(m));
        assert_eq!(Mapping::from_matrix(&[vec![1, 1, 0]]), None);
    }

    #[test]
    fn pareto_small_cases() {
        assert_eq!(pareto_front(&[(1.0, 1.0)]).len(), 1);
        let f = pareto_front(&[(2.0, 1.0), (1.0, 5.0)]);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].index, 1);
        let f = pareto_front(&[(1.0, 1.0), (2.0, 3.0), (1.0, 1.0)]);
        assert_eq!(f.iter().map(|p| p.index).collect::<Vec<_>>(), vec![0, 2, 1]);
    }
}
