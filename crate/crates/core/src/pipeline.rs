// SPDX-License-Identifier: Apache-2.0

//! End-to-end mapping strategies.
//!
//! All strategies share one clustering and one endurance map (tiles are
//! homogeneous). They differ in the swarm fitness and in how synapses are
//! placed inside each tile.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::circuit::{calibrate_drive, CellStateGrid, CrossbarConfig, SolverMode};
use crate::energy::{self, EnergyParams, EnergyReport};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::partition::{mix_seed, Clustering};
use crate::placement::{
    clusters_per_tile, min_eff_life, min_lifetime_fast, tile_demand, LifetimeMode, LifetimeReport,
    PlacementError, PlacementPolicy,
};
use crate::swarm::{self, Evaluation, Evaluator, Fitness, Mapping, RunResult, SwarmConfig};
use crate::thermal::{endurance_map, EnduranceMap, PcmParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "spinemap")]
    Spinemap,
    #[serde(rename = "spinemap++")]
    SpinemapPlusPlus,
    #[serde(rename = "espine")]
    Espine,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Spinemap, Strategy::SpinemapPlusPlus, Strategy::Espine];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Spinemap => "spinemap",
            Strategy::SpinemapPlusPlus => "spinemap++",
            Strategy::Espine => "espine",
        }
    }

    pub fn fitness(self) -> Fitness {
        match self {
            Strategy::Espine => Fitness::Lifetime,
            _ => Fitness::Energy,
        }
    }

    /// Placement on a tile whose lowest hosted cluster id is `anchor`.
    pub fn placement(self, seed: u64, anchor: usize) -> PlacementPolicy {
        match self {
            Strategy::Spinemap => PlacementPolicy::Arbitrary {
                seed: mix_seed(seed, anchor as u64),
            },
            _ => PlacementPolicy::Sorted,
        }
    }

    /// Per-tile policy for `mapping`. Arbitrary seeds follow the hosted
    /// clusters, so relabelling tiles leaves every placement unchanged.
    pub fn policy(self, seed: u64, mapping: &[usize], tiles: usize) -> impl Fn(usize) -> PlacementPolicy + Sync {
        let mut anchor = vec![usize::MAX; tiles];
        for (c, &t) in mapping.iter().enumerate() {
            if t < tiles && anchor[t] == usize::MAX {
                anchor[t] = c;
            }
        }
        move |t: usize| self.placement(seed, anchor.get(t).copied().unwrap_or(usize::MAX))
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}` (expected spinemap, spinemap++ or espine)")))
    }
}

/// Homogeneous tiles with a shared endurance map.
#[derive(Debug, Clone)]
pub struct Platform {
    pub crossbar: CrossbarConfig,
    pub endurance: EnduranceMap,
    pub tiles: usize,
    pub energy: EnergyParams,
    pub mode: LifetimeMode,
}

impl Platform {
    /// Calibrates the drive so the longest-path cell carries `target_a`, then
    /// derives the endurance map from the resulting currents.
    pub fn calibrated(
        crossbar: CrossbarConfig,
        pcm: &PcmParams,
        target_a: f64,
        solver: SolverMode,
        tiles: usize,
        energy: EnergyParams,
        mode: LifetimeMode,
    ) -> Result<Self> {
        if tiles == 0 {
            return Err(Error::Config("tiles must be >= 1".into()));
        }
        energy.validate()?;
        energy.mesh(tiles)?;
        let states = CellStateGrid::all_set(&crossbar);
        let (_, currents) = calibrate_drive(&crossbar, &states, target_a, solver)?;
        let endurance = endurance_map(&currents, crossbar.t_ambient, pcm)?;
        Ok(Self {
            crossbar,
            endurance,
            tiles,
            energy,
            mode,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.crossbar.rows, self.crossbar.cols)
    }

    pub fn endurance_grids(&self) -> Vec<&Grid> {
        vec![&self.endurance.endurance; self.tiles]
    }

    pub fn peak_grids(&self) -> Vec<&Grid> {
        vec![&self.endurance.t_sh_peak; self.tiles]
    }

    /// Rows plus columns demanded beyond capacity, summed over tiles.
    pub fn overflow(&self, mapping: &[usize], clustering: &Clustering) -> Result<usize> {
        let (rows, cols) = self.dims();
        let per_tile = clusters_per_tile(mapping, clustering, self.tiles)?;
        Ok(per_tile
            .iter()
            .map(|cs| {
                let (r, c) = tile_demand(cs);
                r.saturating_sub(rows) + c.saturating_sub(cols)
            })
            .sum())
    }

    /// Lifetime and energy of one mapping with the strategy's placement.
    pub fn assess(
        &self,
        clustering: &Clustering,
        mapping: &[usize],
        strategy: Strategy,
        seed: u64,
    ) -> Result<(LifetimeReport, EnergyReport)> {
        let policy = strategy.policy(seed, mapping, self.tiles);
        let lifetime = min_eff_life(mapping, clustering, &self.endurance_grids(), &policy, self.mode)?;
        let loads = energy::tile_loads(&lifetime);
        let report = energy::report(
            mapping,
            clustering,
            &loads,
            &self.peak_grids(),
            &self.crossbar,
            &self.energy,
        )?;
        Ok((lifetime, report))
    }
}

/// Swarm fitness for one strategy. Energy covers the dynamic and
/// communication terms; static energy depends on placement and is reported
/// separately.
pub struct MappingEvaluator<'a> {
    pub platform: &'a Platform,
    pub clustering: &'a Clustering,
    pub strategy: Strategy,
    pub seed: u64,
    dynamic_j: f64,
}

impl<'a> MappingEvaluator<'a> {
    pub fn new(platform: &'a Platform, clustering: &'a Clustering, strategy: Strategy, seed: u64) -> Self {
        Self {
            platform,
            clustering,
            strategy,
            seed,
            dynamic_j: energy::dynamic_energy(clustering, &platform.energy),
        }
    }
}

impl Evaluator for MappingEvaluator<'_> {
    type Error = Error;

    fn evaluate(&self, mapping: &Mapping) -> Result<Evaluation> {
        let p = self.platform;
        let overflow = p.overflow(&mapping.assignment, self.clustering)?;
        if overflow > 0 {
            return Ok(Evaluation::violating(overflow as f64));
        }
        let policy = self.strategy.policy(self.seed, &mapping.assignment, p.tiles);
        let min_lifetime = match min_lifetime_fast(
            &mapping.assignment,
            self.clustering,
            &p.endurance_grids(),
            &policy,
            p.mode,
        ) {
            Ok(l) => l,
            Err(PlacementError::TileOverflow {
                rows_needed,
                cols_needed,
                rows,
                cols,
                ..
            }) => {
                let excess = rows_needed.saturating_sub(rows) + cols_needed.saturating_sub(cols);
                return Ok(Evaluation::violating(excess.max(1) as f64));
            }
            Err(e) => return Err(e.into()),
        };
        let comm = energy::comm_energy(&mapping.assignment, p.tiles, self.clustering, &p.energy)?;
        Ok(Evaluation::feasible(self.dynamic_j + comm, min_lifetime))
    }
}

#[derive(Debug, Clone)]
pub struct StrategyRun {
    pub strategy: Strategy,
    pub mapping: Mapping,
    pub swarm: RunResult,
    pub lifetime: LifetimeReport,
    pub energy: EnergyReport,
    pub elapsed_s: f64,
}

pub fn run_strategy(
    platform: &Platform,
    clustering: &Clustering,
    strategy: Strategy,
    swarm_cfg: &SwarmConfig,
) -> Result<StrategyRun> {
    let start = Instant::now();
    let cfg = SwarmConfig {
        fitness: strategy.fitness(),
        ..swarm_cfg.clone()
    };
    let evaluator = MappingEvaluator::new(platform, clustering, strategy, cfg.seed);
    let result = swarm::run(&cfg, clustering.len(), platform.tiles, &evaluator)?;
    if !result.best_evaluation.feasible {
        return Err(Error::Infeasible {
            clusters: clustering.len(),
            tiles: platform.tiles,
        });
    }
    let (lifetime, energy) = platform.assess(clustering, &result.best.assignment, strategy, cfg.seed)?;
    Ok(StrategyRun {
        strategy,
        mapping: result.best.clone(),
        swarm: result,
        lifetime,
        energy,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

/// Runs all three strategies on the same clustering.
pub fn compare(platform: &Platform, clustering: &Clustering, swarm_cfg: &SwarmConfig) -> Result<Vec<StrategyRun>> {
    Strategy::ALL
        .into_iter()
        .map(|s| run_strategy(platform, clustering, s, swarm_cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::corner_params;
    use crate::partition::{partition_workload, PartitionOptions};
    use crate::workload::{generate, ActivationDist, GeneratorSpec, Topology};

    fn platform(tiles: usize) -> Platform {
        let xb = corner_params(65, 300.0).unwrap().with_dims(16, 16);
        Platform::calibrated(
            xb,
            &PcmParams::default(),
            200e-6,
            SolverMode::FullNetwork,
            tiles,
            EnergyParams::default(),
            LifetimeMode::Accumulate,
        )
        .unwrap()
    }

    fn clustering() -> Clustering {
        let g = generate(&GeneratorSpec {
            topology: Topology::Feedforward { layers: vec![16, 40] },
            activations: ActivationDist::Zipf { s: 1.2, max: 400 },
            seed: 5,
        })
        .unwrap();
        partition_workload(&g, (16, 16), &PartitionOptions::default()).unwrap()
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
        assert!("spine".parse::<Strategy>().is_err());
    }

    #[test]
    fn spinemap_variants_share_a_mapping() {
        let p = platform(4);
        let c = clustering();
        let cfg = SwarmConfig {
            particles: 6,
            iterations: 8,
            seed: 2,
            ..SwarmConfig::default()
        };
        let runs = compare(&p, &c, &cfg).unwrap();
        assert_eq!(runs[0].mapping, runs[1].mapping);
        assert_eq!(runs[0].energy.comm_j, runs[1].energy.comm_j);
        for r in &runs {
            assert_eq!(r.energy.total_j, r.energy.dynamic_j + r.energy.comm_j + r.energy.static_j);
            assert!(r.lifetime.min_lifetime > 0.0);
        }
    }

    #[test]
    fn one_tile_too_small_is_infeasible() {
        let p = platform(1);
        let c = clustering();
        assert!(c.len() > 1);
        let ev = MappingEvaluator::new(&p, &c, Strategy::Espine, 0);
        let m = Mapping {
            tiles: 1,
            assignment: vec![0; c.len()],
        };
        assert!(!ev.evaluate(&m).unwrap().feasible);
    }
}
