// SPDX-License-Identifier: Apache-2.0

//! Energy accounting for one workload execution.
//!
//! Dynamic energy counts every synaptic activation once. Communication energy
//! charges each cut activation per mesh hop between its source and
//! destination tiles. Static energy integrates cell leakage at a
//! duty-weighted temperature over the execution time.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::CrossbarConfig;
use crate::grid::Grid;
use crate::partition::Clustering;
use crate::placement::LifetimeReport;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("invalid energy parameters: {0}")]
    InvalidParams(String),
    #[error("mesh {rows}x{cols} cannot hold {tiles} tiles")]
    MeshTooSmall { tiles: usize, rows: usize, cols: usize },
    #[error("mapping assigns {got} clusters, clustering has {expected}")]
    MappingLength { expected: usize, got: usize },
    #[error("cluster {cluster} mapped to tile {tile}, only {tiles} tiles exist")]
    TileOutOfRange {
        cluster: usize,
        tile: usize,
        tiles: usize,
    },
    #[error("tile {tile}: load grid is {load:?}, temperature grid is {temp:?}")]
    GridMismatch {
        tile: usize,
        load: (usize, usize),
        temp: (usize, usize),
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyParams {
    /// Joules per spike.
    pub e_spike: f64,
    /// Joules per spike per mesh hop.
    pub e_route: f64,
    /// Mesh rows and columns; square-ish when absent.
    pub mesh_dims: Option<(usize, usize)>,
    pub exec_time_s: f64,
    pub v_supply: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            e_spike: 50e-12,
            e_route: 147e-12,
            mesh_dims: None,
            exec_time_s: 1.0,
            v_supply: 1.2,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), EnergyError> {
        for (name, v) in [
            ("e_spike", self.e_spike),
            ("e_route", self.e_route),
            ("exec_time_s", self.exec_time_s),
            ("v_supply", self.v_supply),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(EnergyError::InvalidParams(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if let Some((r, c)) = self.mesh_dims {
            if r == 0 || c == 0 {
                return Err(EnergyError::InvalidParams(format!("mesh_dims {r}x{c} must be positive")));
            }
        }
        Ok(())
    }

    /// Mesh shape for `tiles` tiles laid out row-major.
    pub fn mesh(&self, tiles: usize) -> Result<(usize, usize), EnergyError> {
        let (rows, cols) = match self.mesh_dims {
            Some(d) => d,
            None => default_mesh(tiles),
        };
        if rows * cols < tiles {
            return Err(EnergyError::MeshTooSmall { tiles, rows, cols });
        }
        Ok((rows, cols))
    }
}

/// `cols = ceil(sqrt(tiles))`, `rows = ceil(tiles / cols)`.
pub fn default_mesh(tiles: usize) -> (usize, usize) {
    let tiles = tiles.max(1);
    let mut cols = (tiles as f64).sqrt() as usize;
    while cols * cols < tiles {
        cols += 1;
    }
    (tiles.div_ceil(cols), cols)
}

pub fn hops(a: usize, b: usize, mesh_cols: usize) -> usize {
    let (ra, ca) = (a / mesh_cols, a % mesh_cols);
    let (rb, cb) = (b / mesh_cols, b % mesh_cols);
    ra.abs_diff(rb) + ca.abs_diff(cb)
}

pub fn dynamic_energy(clustering: &Clustering, params: &EnergyParams) -> f64 {
    clustering.total_activations() as f64 * params.e_spike
}

fn check_mapping(mapping: &[usize], clustering: &Clustering, tiles: usize) -> Result<(), EnergyError> {
    if mapping.len() != clustering.len() {
        return Err(EnergyError::MappingLength {
            expected: clustering.len(),
            got: mapping.len(),
        });
    }
    match mapping.iter().enumerate().find(|(_, &t)| t >= tiles) {
        Some((cluster, &tile)) => Err(EnergyError::TileOutOfRange { cluster, tile, tiles }),
        None => Ok(()),
    }
}

pub fn comm_energy(
    mapping: &[usize],
    tiles: usize,
    clustering: &Clustering,
    params: &EnergyParams,
) -> Result<f64, EnergyError> {
    check_mapping(mapping, clustering, tiles)?;
    let (_, mesh_cols) = params.mesh(tiles)?;
    let spike_hops: u64 = clustering
        .cut_edges
        .iter()
        .map(|e| e.activations * hops(mapping[e.pre_cluster], mapping[e.post_cluster], mesh_cols) as u64)
        .sum();
    Ok(spike_hops as f64 * params.e_route)
}

/// `t_amb + (a / a_max)(t_peak - t_amb)`, ambient when the tile is idle.
pub fn duty_temperature(activations: f64, max_activations: f64, t_peak: f64, t_amb: f64) -> f64 {
    if max_activations > 0.0 {
        t_amb + activations / max_activations * (t_peak - t_amb)
    } else {
        t_amb
    }
}

/// Summed activations per cell for every tile of a lifetime report.
pub fn tile_loads(report: &LifetimeReport) -> Vec<Grid> {
    report
        .tiles
        .iter()
        .map(|t| {
            let (rows, cols) = t.lifetime.dims();
            let mut g = Grid::filled(rows, cols, 0.0);
            for p in &t.placements {
                for c in &p.cells {
                    g.set(c.row, c.col, g.get(c.row, c.col) + c.activations as f64);
                }
            }
            g
        })
        .collect()
}

/// Leakage over every cell of every tile, idle cells included.
pub fn static_energy(
    loads: &[Grid],
    t_peak: &[&Grid],
    crossbar: &CrossbarConfig,
    params: &EnergyParams,
) -> Result<f64, EnergyError> {
    if loads.len() != t_peak.len() {
        return Err(EnergyError::InvalidParams(format!(
            "{} load grids for {} temperature grids",
            loads.len(),
            t_peak.len()
        )));
    }
    let v2 = params.v_supply * params.v_supply;
    let mut power = 0.0;
    for (tile, (load, temp)) in loads.iter().zip(t_peak).enumerate() {
        if load.dims() != temp.dims() {
            return Err(EnergyError::GridMismatch {
                tile,
                load: load.dims(),
                temp: temp.dims(),
            });
        }
        let max = load.max();
        for (r, c, a) in load.iter() {
            let t = duty_temperature(a, max, temp.get(r, c), crossbar.t_ambient);
            power += v2 * crossbar.leakage_conductance(t);
        }
    }
    Ok(power * params.exec_time_s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyFractions {
    pub dynamic: f64,
    pub comm: f64,
    #[serde(rename = "static")]
    pub static_: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    #[serde(rename = "dynamic_J")]
    pub dynamic_j: f64,
    #[serde(rename = "comm_J")]
    pub comm_j: f64,
    #[serde(rename = "static_J")]
    pub static_j: f64,
    #[serde(rename = "total_J")]
    pub total_j: f64,
    pub fractions: EnergyFractions,
    pub exec_time_s: f64,
}

impl EnergyReport {
    pub fn compose(dynamic_j: f64, comm_j: f64, static_j: f64, exec_time_s: f64) -> Self {
        let total_j = dynamic_j + comm_j + static_j;
        let frac = |x: f64| if total_j > 0.0 { x / total_j } else { 0.0 };
        Self {
            dynamic_j,
            comm_j,
            static_j,
            total_j,
            fractions: EnergyFractions {
                dynamic: frac(dynamic_j),
                comm: frac(comm_j),
                static_: frac(static_j),
            },
            exec_time_s,
        }
    }

    pub const CSV_HEADER: &'static str =
        "dynamic_J,comm_J,static_J,total_J,dynamic_frac,comm_frac,static_frac,exec_time_s";

    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        let f = &self.fractions;
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{}",
            self.dynamic_j, self.comm_j, self.static_j, self.total_j, f.dynamic, f.comm, f.static_, self.exec_time_s
        );
        s
    }
}

pub fn report(
    mapping: &[usize],
    clustering: &Clustering,
    loads: &[Grid],
    t_peak: &[&Grid],
    crossbar: &CrossbarConfig,
    params: &EnergyParams,
) -> Result<EnergyReport, EnergyError> {
    params.validate()?;
    let dynamic = dynamic_energy(clustering, params);
    let comm = comm_energy(mapping, loads.len(), clustering, params)?;
    let stat = static_energy(loads, t_peak, crossbar, params)?;
    Ok(EnergyReport::compose(dynamic, comm, stat, params.exec_time_s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::corner_params;
    use crate::partition::{Cluster, ClusterSynapse, CutEdge};

    fn clustering(n: usize, cut: Vec<CutEdge>, internal: u64) -> Clustering {
        let mut clusters: Vec<Cluster> = (0..n)
            .map(|id| Cluster {
                id,
                members: vec![id as u32],
                pre_neurons: Vec::new(),
                post_neurons: vec![id as u32],
                synapses: Vec::new(),
            })
            .collect();
        let cut_cost = cut.iter().map(|e| e.activations).sum();
        for e in &cut {
            let c = &mut clusters[e.post_cluster];
            c.pre_neurons.push(e.pre);
            c.synapses.push(ClusterSynapse {
                pre_index: c.pre_neurons.len() - 1,
                post_index: 0,
                activations: e.activations,
                weight: 0.0,
            });
        }
        if internal > 0 {
            let c = &mut clusters[0];
            c.pre_neurons.push(0);
            c.synapses.push(ClusterSynapse {
                pre_index: c.pre_neurons.len() - 1,
                post_index: 0,
                activations: internal,
                weight: 0.0,
            });
        }
        Clustering {
            clusters,
            cut_edges: cut,
            cut_cost,
            crossbar: (8, 8),
        }
    }

    fn edge(a: usize, b: usize, act: u64) -> CutEdge {
        CutEdge {
            pre_cluster: a,
            post_cluster: b,
            activations: act,
            pre: a as u32,
            post: b as u32,
        }
    }

    #[test]
    fn mesh_shapes() {
        assert_eq!(default_mesh(1), (1, 1));
        assert_eq!(default_mesh(4), (2, 2));
        assert_eq!(default_mesh(5), (2, 3));
        assert_eq!(default_mesh(16), (4, 4));
        assert_eq!(default_mesh(32), (6, 6));
        assert_eq!(default_mesh(30), (5, 6));
        assert_eq!(hops(0, 3, 2), 2);
        assert_eq!(hops(1, 2, 2), 2);
    }

    #[test]
    fn thousand_spikes_cost_fifty_nanojoules() {
        let cl = clustering(1, Vec::new(), 1000);
        let e = dynamic_energy(&cl, &EnergyParams::default());
        assert!((e - 50e-9).abs() < 1e-21);
    }

    #[test]
    fn one_hop_ten_spikes() {
        let cl = clustering(2, vec![edge(0, 1, 10)], 0);
        let e = comm_energy(&[0, 1], 2, &cl, &EnergyParams::default()).unwrap();
        assert!((e - 1.47e-9).abs() < 1e-21);
        assert_eq!(comm_energy(&[1, 1], 2, &cl, &EnergyParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn hand_placed_two_by_two_mesh() {
        // Tiles 0 1 / 2 3; clusters 0..4 on tiles 3, 0, 1, 2.
        let cl = clustering(4, vec![edge(0, 1, 5), edge(1, 2, 7), edge(2, 3, 11), edge(3, 0, 13)], 0);
        let e = comm_energy(&[3, 0, 1, 2], 4, &cl, &EnergyParams::default()).unwrap();
        let spike_hops = 5 * 2 + 7 + 11 * 2 + 13;
        assert!((e - spike_hops as f64 * 147e-12).abs() < 1e-20);
    }

    #[test]
    fn uniform_temperature_closed_form() {
        let cfg = corner_params(65, 300.0).unwrap().with_dims(4, 4);
        let loads = vec![Grid::filled(4, 4, 3.0), Grid::filled(4, 4, 0.0)];
        let t = Grid::filled(4, 4, 340.0);
        let p = EnergyParams::default();
        let e = static_energy(&loads, &[&t, &t], &cfg, &p).unwrap();
        let idle = 16.0 * 1.44 * cfg.leakage_conductance(300.0);
        let hot = 16.0 * 1.44 * cfg.leakage_conductance(340.0);
        assert!((e / (idle + hot) - 1.0).abs() < 1e-12);
        let p0 = EnergyParams {
            exec_time_s: 0.0,
            ..p
        };
        assert_eq!(static_energy(&loads, &[&t, &t], &cfg, &p0).unwrap(), 0.0);
    }

    #[test]
    fn report_recomposes() {
        let cfg = corner_params(65, 300.0).unwrap().with_dims(2, 2);
        let cl = clustering(2, vec![edge(0, 1, 4)], 6);
        let loads = vec![Grid::from_vec(2, 2, vec![6.0, 0.0, 0.0, 0.0]), Grid::from_vec(2, 2, vec![4.0, 0.0, 0.0, 0.0])];
        let t = Grid::filled(2, 2, 400.0);
        let p = EnergyParams::default();
        let r = report(&[0, 1], &cl, &loads, &[&t, &t], &cfg, &p).unwrap();
        assert_eq!(r.total_j, r.dynamic_j + r.comm_j + r.static_j);
        let f = &r.fractions;
        assert!((f.dynamic + f.comm + f.static_ - 1.0).abs() < 1e-12);
        assert!((r.dynamic_j - 10.0 * 50e-12).abs() < 1e-22);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"total_J\"") && json.contains("\"static\""));
        assert_eq!(r.csv_row().split(',').count(), EnergyReport::CSV_HEADER.split(',').count());
        let single = report(&[0, 0], &cl, &loads[..1], &[&t], &cfg, &p).unwrap();
        assert_eq!(single.comm_j, 0.0);
        assert_eq!(single.fractions.comm, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cl = clustering(2, vec![edge(0, 1, 1)], 0);
        let p = EnergyParams::default();
        assert!(matches!(comm_energy(&[0], 2, &cl, &p), Err(EnergyError::MappingLength { .. })));
        assert!(matches!(comm_energy(&[0, 2], 2, &cl, &p), Err(EnergyError::TileOutOfRange { .. })));
        let small = EnergyParams {
            mesh_dims: Some((1, 1)),
            ..p.clone()
        };
        assert!(matches!(comm_energy(&[0, 1], 2, &cl, &small), Err(EnergyError::MeshTooSmall { .. })));
        let neg = EnergyParams { e_spike: -1.0, ..p };
        assert!(neg.validate().is_err());
    }
}
