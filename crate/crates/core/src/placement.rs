// SPDX-License-Identifier: Apache-2.0

//! Synapse-to-cell placement and effective lifetime.
//!
//! The effective lifetime of an occupied cell is its endurance divided by the
//! activations it receives per workload run. A tile's lifetime is the minimum
//! over its occupied cells and a mapping's lifetime is the minimum over tiles.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid;
use crate::partition::{Cluster, Clustering};
use crate::workload::NeuronId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlacementError {
    #[error("tile {tile} overflows: needs {rows_needed}x{cols_needed} cells, crossbar is {rows}x{cols}")]
    TileOverflow {
        tile: usize,
        rows_needed: usize,
        cols_needed: usize,
        rows: usize,
        cols: usize,
    },
    #[error("mapping assigns {got} clusters, clustering has {expected}")]
    MappingLength { expected: usize, got: usize },
    #[error("cluster {cluster} mapped to tile {tile}, only {tiles} tiles exist")]
    TileOutOfRange {
        cluster: usize,
        tile: usize,
        tiles: usize,
    },
    #[error("no occupied cell has activations; lifetime is unbounded")]
    NoActivity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementPolicy {
    /// Busiest neurons onto the most durable rows and columns.
    Sorted,
    /// Seeded random injective rows and columns.
    Arbitrary { seed: u64 },
    /// Neuron `k` of the sorted id list onto row/column `k`.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LifetimeMode {
    /// 𝓛 = 𝓔 / Σa over co-located clusters.
    #[default]
    Accumulate,
    /// 𝓛 = Σ 𝓔 / a_k with every cluster placed on its own.
    LiteralSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellLoad {
    pub row: usize,
    pub col: usize,
    pub activations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub clusters: Vec<usize>,
    pub row_of: BTreeMap<NeuronId, usize>,
    pub col_of: BTreeMap<NeuronId, usize>,
    /// Occupied cells in row-major order with summed activations.
    pub cells: Vec<CellLoad>,
}

impl Placement {
    pub fn activation_grid(&self, rows: usize, cols: usize) -> Grid {
        let mut g = Grid::filled(rows, cols, 0.0);
        for c in &self.cells {
            g.set(c.row, c.col, c.activations as f64);
        }
        g
    }

    pub fn max_activation(&self) -> u64 {
        self.cells.iter().map(|c| c.activations).max().unwrap_or(0)
    }
}

/// JSON export shape of one tile's placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementExport {
    pub tile: usize,
    pub rows: BTreeMap<NeuronId, usize>,
    pub cols: BTreeMap<NeuronId, usize>,
}

struct Footprint {
    clusters: Vec<usize>,
    pre_act: BTreeMap<NeuronId, u64>,
    post_act: BTreeMap<NeuronId, u64>,
    synapses: Vec<(NeuronId, NeuronId, u64)>,
}

impl Footprint {
    fn of(clusters: &[&Cluster]) -> Self {
        let mut fp = Footprint {
            clusters: clusters.iter().map(|c| c.id).collect(),
            pre_act: BTreeMap::new(),
            post_act: BTreeMap::new(),
            synapses: Vec::new(),
        };
        for c in clusters {
            for s in &c.synapses {
                let (pre, post) = (c.pre_neurons[s.pre_index], c.post_neurons[s.post_index]);
                let p = fp.pre_act.entry(pre).or_default();
                *p = (*p).max(s.activations);
                let q = fp.post_act.entry(post).or_default();
                *q = (*q).max(s.activations);
                fp.synapses.push((pre, post, s.activations));
            }
            // Neurons without synapses still take a row or column.
            for &pre in &c.pre_neurons {
                fp.pre_act.entry(pre).or_default();
            }
            for &post in &c.post_neurons {
                fp.post_act.entry(post).or_default();
            }
        }
        fp
    }
}

/// Neuron ids by activation descending, ties by id ascending.
fn by_activation(acts: &BTreeMap<NeuronId, u64>) -> Vec<NeuronId> {
    let mut ids: Vec<(NeuronId, u64)> = acts.iter().map(|(&k, &v)| (k, v)).collect();
    ids.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
    ids.into_iter().map(|(id, _)| id).collect()
}

/// Line indices by key descending, ties to the higher index.
fn by_endurance(n: usize, key: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(b.cmp(&a)));
    idx
}

fn lay_out(
    fp: Footprint,
    endurance: &Grid,
    policy: PlacementPolicy,
    tile: usize,
) -> Result<Placement, PlacementError> {
    let (rows, cols) = endurance.dims();
    if fp.pre_act.len() > rows || fp.post_act.len() > cols {
        return Err(PlacementError::TileOverflow {
            tile,
            rows_needed: fp.pre_act.len(),
            cols_needed: fp.post_act.len(),
            rows,
            cols,
        });
    }
    let (pre_order, post_order, row_slots, col_slots): (Vec<NeuronId>, Vec<NeuronId>, Vec<usize>, Vec<usize>) =
        match policy {
            PlacementPolicy::Sorted => (
                by_activation(&fp.pre_act),
                by_activation(&fp.post_act),
                by_endurance(rows, |r| endurance.get(r, cols - 1)),
                by_endurance(cols, |c| endurance.get(rows - 1, c)),
            ),
            PlacementPolicy::Arbitrary { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut r: Vec<usize> = (0..rows).collect();
                let mut c: Vec<usize> = (0..cols).collect();
                r.shuffle(&mut rng);
                c.shuffle(&mut rng);
                (
                    fp.pre_act.keys().copied().collect(),
                    fp.post_act.keys().copied().collect(),
                    r,
                    c,
                )
            }
            PlacementPolicy::Identity => (
                fp.pre_act.keys().copied().collect(),
                fp.post_act.keys().copied().collect(),
                (0..rows).collect(),
                (0..cols).collect(),
            ),
        };
    let row_of: BTreeMap<NeuronId, usize> = pre_order.into_iter().zip(row_slots).collect();
    let col_of: BTreeMap<NeuronId, usize> = post_order.into_iter().zip(col_slots).collect();
    let mut load: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for (pre, post, a) in fp.synapses {
        *load.entry((row_of[&pre], col_of[&post])).or_default() += a;
    }
    Ok(Placement {
        clusters: fp.clusters,
        row_of,
        col_of,
        cells: load
            .into_iter()
            .map(|((row, col), activations)| CellLoad {
                row,
                col,
                activations,
            })
            .collect(),
    })
}

pub fn place_sorted(cluster: &Cluster, endurance: &Grid) -> Result<Placement, PlacementError> {
    lay_out(Footprint::of(&[cluster]), endurance, PlacementPolicy::Sorted, 0)
}

pub fn place_arbitrary(
    cluster: &Cluster,
    endurance: &Grid,
    seed: u64,
) -> Result<Placement, PlacementError> {
    lay_out(
        Footprint::of(&[cluster]),
        endurance,
        PlacementPolicy::Arbitrary { seed },
        0,
    )
}

pub fn place_identity(cluster: &Cluster, endurance: &Grid) -> Result<Placement, PlacementError> {
    lay_out(Footprint::of(&[cluster]), endurance, PlacementPolicy::Identity, 0)
}

/// Places the union of `clusters` on one tile; shared sources share a row.
pub fn place_tile(
    clusters: &[&Cluster],
    endurance: &Grid,
    policy: PlacementPolicy,
    tile: usize,
) -> Result<Placement, PlacementError> {
    lay_out(Footprint::of(clusters), endurance, policy, tile)
}

/// Minimum 𝓔/a over occupied cells with a > 0, and its cell.
pub fn placement_min_lifetime(p: &Placement, endurance: &Grid) -> Option<(f64, (usize, usize))> {
    p.cells
        .iter()
        .filter(|c| c.activations > 0)
        .map(|c| (endurance.get(c.row, c.col) / c.activations as f64, (c.row, c.col)))
        .min_by(|x, y| x.0.total_cmp(&y.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileLifetime {
    pub tile: usize,
    /// `None` when the tile has no active cell.
    pub min_lifetime: Option<f64>,
    pub argmin: Option<(usize, usize)>,
    /// Per-cell lifetime, infinite where no activations land.
    pub lifetime: Grid,
    pub placements: Vec<Placement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeReport {
    pub tiles: Vec<TileLifetime>,
    pub min_lifetime: f64,
    pub min_tile: usize,
}

impl LifetimeReport {
    pub fn export_placements(&self) -> Vec<PlacementExport> {
        self.tiles
            .iter()
            .map(|t| {
                let mut rows = BTreeMap::new();
                let mut cols = BTreeMap::new();
                for p in &t.placements {
                    rows.extend(p.row_of.iter().map(|(&k, &v)| (k, v)));
                    cols.extend(p.col_of.iter().map(|(&k, &v)| (k, v)));
                }
                PlacementExport {
                    tile: t.tile,
                    rows,
                    cols,
                }
            })
            .collect()
    }
}

/// Per-tile placement policy, given the tile index.
pub type PolicyFn<'a> = dyn Fn(usize) -> PlacementPolicy + Sync + 'a;

/// Groups cluster references by tile after checking the mapping.
pub fn clusters_per_tile<'c>(
    mapping: &[usize],
    clustering: &'c Clustering,
    tiles: usize,
) -> Result<Vec<Vec<&'c Cluster>>, PlacementError> {
    if mapping.len() != clustering.clusters.len() {
        return Err(PlacementError::MappingLength {
            expected: clustering.clusters.len(),
            got: mapping.len(),
        });
    }
    let mut per_tile: Vec<Vec<&Cluster>> = vec![Vec::new(); tiles];
    for (c, &t) in mapping.iter().enumerate() {
        if t >= tiles {
            return Err(PlacementError::TileOutOfRange {
                cluster: c,
                tile: t,
                tiles,
            });
        }
        per_tile[t].push(&clustering.clusters[c]);
    }
    Ok(per_tile)
}

/// Places one tile's clusters under `mode`.
pub fn place_clusters(
    clusters: &[&Cluster],
    endurance: &Grid,
    policy: PlacementPolicy,
    mode: LifetimeMode,
    tile: usize,
) -> Result<Vec<Placement>, PlacementError> {
    match mode {
        LifetimeMode::Accumulate => Ok(vec![place_tile(clusters, endurance, policy, tile)?]),
        LifetimeMode::LiteralSum => clusters
            .iter()
            .map(|c| place_tile(&[c], endurance, policy, tile))
            .collect(),
    }
}

fn tile_lifetime_grid(placements: &[Placement], endurance: &Grid, mode: LifetimeMode) -> Grid {
    let (rows, cols) = endurance.dims();
    let mut out = Grid::filled(rows, cols, f64::INFINITY);
    match mode {
        LifetimeMode::Accumulate => {
            let mut acc: BTreeMap<(usize, usize), u64> = BTreeMap::new();
            for p in placements {
                for c in &p.cells {
                    *acc.entry((c.row, c.col)).or_default() += c.activations;
                }
            }
            for ((r, c), a) in acc {
                if a > 0 {
                    out.set(r, c, endurance.get(r, c) / a as f64);
                }
            }
        }
        LifetimeMode::LiteralSum => {
            let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
            for p in placements {
                for c in p.cells.iter().filter(|c| c.activations > 0) {
                    *acc.entry((c.row, c.col)).or_default() +=
                        endurance.get(c.row, c.col) / c.activations as f64;
                }
            }
            for ((r, c), l) in acc {
                out.set(r, c, l);
            }
        }
    }
    out
}

/// Algorithm MinEffLife: places every tile and reports per-cell and minimum lifetime.
pub fn min_eff_life(
    mapping: &[usize],
    clustering: &Clustering,
    endurance: &[&Grid],
    policy: &PolicyFn,
    mode: LifetimeMode,
) -> Result<LifetimeReport, PlacementError> {
    let per_tile = clusters_per_tile(mapping, clustering, endurance.len())?;
    let mut tiles = Vec::with_capacity(per_tile.len());
    for (t, clusters) in per_tile.iter().enumerate() {
        let placements = place_clusters(clusters, endurance[t], policy(t), mode, t)?;
        let lifetime = tile_lifetime_grid(&placements, endurance[t], mode);
        let argmin = lifetime
            .iter()
            .filter(|(_, _, v)| v.is_finite())
            .min_by(|x, y| x.2.total_cmp(&y.2));
        tiles.push(TileLifetime {
            tile: t,
            min_lifetime: argmin.map(|(_, _, v)| v),
            argmin: argmin.map(|(r, c, _)| (r, c)),
            lifetime,
            placements,
        });
    }
    let (min_tile, min_lifetime) = tiles
        .iter()
        .filter_map(|t| t.min_lifetime.map(|m| (t.tile, m)))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .ok_or(PlacementError::NoActivity)?;
    Ok(LifetimeReport {
        tiles,
        min_lifetime,
        min_tile,
    })
}

/// Minimum lifetime only, without per-cell grids.
pub fn min_lifetime_fast(
    mapping: &[usize],
    clustering: &Clustering,
    endurance: &[&Grid],
    policy: &PolicyFn,
    mode: LifetimeMode,
) -> Result<f64, PlacementError> {
    let per_tile = clusters_per_tile(mapping, clustering, endurance.len())?;
    let mut best = f64::INFINITY;
    for (t, clusters) in per_tile.iter().enumerate() {
        if clusters.iter().all(|c| c.is_empty()) {
            let fp = Footprint::of(clusters);
            let (rows, cols) = endurance[t].dims();
            if fp.pre_act.len() > rows || fp.post_act.len() > cols {
                return Err(PlacementError::TileOverflow {
                    tile: t,
                    rows_needed: fp.pre_act.len(),
                    cols_needed: fp.post_act.len(),
                    rows,
                    cols,
                });
            }
            continue;
        }
        let placements = place_clusters(clusters, endurance[t], policy(t), mode, t)?;
        let m = match mode {
            LifetimeMode::Accumulate => placements
                .iter()
                .filter_map(|p| placement_min_lifetime(p, endurance[t]))
                .map(|(v, _)| v)
                .fold(f64::INFINITY, f64::min),
            LifetimeMode::LiteralSum => tile_lifetime_grid(&placements, endurance[t], mode).min(),
        };
        best = best.min(m);
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(PlacementError::NoActivity)
    }
}

/// Ids of the distinct sources and receivers a set of clusters would need on one tile.
pub fn tile_demand(clusters: &[&Cluster]) -> (usize, usize) {
    let pre: BTreeSet<NeuronId> = clusters.iter().flat_map(|c| c.pre_neurons.iter().copied()).collect();
    let post: BTreeSet<NeuronId> =
        clusters.iter().flat_map(|c| c.post_neurons.iter().copied()).collect();
    (pre.len(), post.len())
}
