// SPDX-License-Identifier: Apache-2.0

//! Resistive-network model of an `rows × cols` 1T1R crossbar.
//!
//! Every wordline is driven from its left end and every bitline is grounded at
//! its bottom end. Cell `(i, j)` sits on wordline `i` and bitline `j`; row 0 is
//! the row nearest the bitline ground and column 0 the column nearest the
//! wordline drivers. The path through `(0, 0)` therefore crosses the fewest
//! parasitic segments (one of each) and the path through `(rows-1, cols-1)`
//! the most.
//!
//! The full-network solve assembles one wordline node and one bitline node per
//! cell. Each cell is the memristor in series with the access transistor's on
//! resistance, shunted by a temperature-dependent leakage conductance.

pub mod skyline;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid;
use skyline::{norm2, CompressedSymmetric, FactorError, SkylineLdl, SymmetricTriplets};

/// Technology nodes with known unit parasitics.
pub const SUPPORTED_NODES_NM: [u32; 4] = [65, 45, 32, 16];

/// Reference temperature of the leakage model.
pub const LEAKAGE_REFERENCE_K: f64 = 298.0;

/// Largest relative residual accepted from the linear solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

const WORD_UNIT_65: f64 = 2.5;
const BIT_UNIT_65: f64 = 1.0;
const WORD_UNIT_16: f64 = 10.0;
const BIT_UNIT_16: f64 = 3.8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("unsupported technology node {node} nm (supported: {supported:?})")]
    UnsupportedNode { node: u32, supported: [u32; 4] },
    #[error("invalid crossbar configuration: {0}")]
    InvalidConfig(String),
    #[error("cell state grid is {got_rows}x{got_cols}, crossbar is {rows}x{cols}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("cell ({row}, {col}) resistance {value} ohm outside [{r_set}, {r_reset}]")]
    StateOutOfRange {
        row: usize,
        col: usize,
        value: f64,
        r_set: f64,
        r_reset: f64,
    },
    #[error("drive voltage must be positive, got {0} V")]
    NonPositiveDrive(f64),
    #[error("calibration target must be positive, got {0} A")]
    NonPositiveTarget(f64),
    #[error("singular network: {0}")]
    Singular(FactorError),
    #[error("linear solve did not converge: relative residual {residual:e}")]
    NotConverged { residual: f64 },
    #[error(
        "target {target:e} A unreachable: longest-path current is {achieved:e} A at the {v_max} V bound"
    )]
    Unreachable {
        target: f64,
        achieved: f64,
        v_max: f64,
    },
}

/// Geometry, technology corner and electrical parameters of one crossbar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossbarConfig {
    pub rows: usize,
    pub cols: usize,
    pub node_nm: u32,
    /// Ohms per wordline segment.
    pub r_word_unit: f64,
    /// Ohms per bitline segment.
    pub r_bit_unit: f64,
    pub r_set: f64,
    pub r_reset: f64,
    pub r_access_on: f64,
    /// Per-cell leakage conductance (S) at 298 K.
    pub g_leak_ref: f64,
    /// Kelvin per doubling of the leakage conductance.
    pub leak_doubling_k: f64,
    pub t_ambient: f64,
}

/// Unit wordline and bitline resistance for a supported node.
///
/// 65 nm and 16 nm carry reference values; 45 nm and 32 nm are
/// interpolated geometrically in node size between them.
pub fn unit_resistances(node_nm: u32) -> Result<(f64, f64), CircuitError> {
    if !SUPPORTED_NODES_NM.contains(&node_nm) {
        return Err(CircuitError::UnsupportedNode {
            node: node_nm,
            supported: SUPPORTED_NODES_NM,
        });
    }
    let frac = (65.0 / node_nm as f64).ln() / (65.0f64 / 16.0).ln();
    let interp = |at65: f64, at16: f64| at65 * (at16 / at65).powf(frac);
    Ok((
        interp(WORD_UNIT_65, WORD_UNIT_16),
        interp(BIT_UNIT_65, BIT_UNIT_16),
    ))
}

/// Default crossbar parameters at a technology corner (128×128 geometry).
pub fn corner_params(node_nm: u32, t_ambient: f64) -> Result<CrossbarConfig, CircuitError> {
    let (r_word_unit, r_bit_unit) = unit_resistances(node_nm)?;
    Ok(CrossbarConfig {
        rows: 128,
        cols: 128,
        node_nm,
        r_word_unit,
        r_bit_unit,
        r_set: 10e3,
        r_reset: 200e3,
        r_access_on: 1e3,
        g_leak_ref: 10e-9,
        leak_doubling_k: 20.0,
        t_ambient,
    })
}

impl CrossbarConfig {
    pub fn with_dims(mut self, rows: usize, cols: usize) -> Self {
        self.rows = rows;
        self.cols = cols;
        self
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        let bad = |msg: String| Err(CircuitError::InvalidConfig(msg));
        if self.rows == 0 || self.cols == 0 {
            return bad(format!("dimensions {}x{} must be >= 1", self.rows, self.cols));
        }
        if !SUPPORTED_NODES_NM.contains(&self.node_nm) {
            return Err(CircuitError::UnsupportedNode {
                node: self.node_nm,
                supported: SUPPORTED_NODES_NM,
            });
        }
        // Zero wire resistance is an ideal line; cell-path resistances must be positive.
        for (name, v) in [
            ("r_word_unit", self.r_word_unit),
            ("r_bit_unit", self.r_bit_unit),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} = {v} must be finite and >= 0"));
            }
        }
        for (name, v) in [
            ("r_set", self.r_set),
            ("r_reset", self.r_reset),
            ("r_access_on", self.r_access_on),
            ("leak_doubling_k", self.leak_doubling_k),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} = {v} must be finite and > 0"));
            }
        }
        if !(self.g_leak_ref >= 0.0) {
            return bad(format!("g_leak_ref = {} must be >= 0", self.g_leak_ref));
        }
        if self.r_reset <= self.r_set {
            return bad(format!(
                "r_reset ({}) must exceed r_set ({})",
                self.r_reset, self.r_set
            ));
        }
        if !(self.t_ambient >= 200.0) {
            return bad(format!("t_ambient = {} K must be >= 200 K", self.t_ambient));
        }
        Ok(())
    }

    /// Leakage conductance of one cell at temperature `t_k`.
    pub fn leakage_conductance(&self, t_k: f64) -> f64 {
        self.g_leak_ref * ((t_k - LEAKAGE_REFERENCE_K) / self.leak_doubling_k).exp2()
    }

    pub fn shortest_path_cell(&self) -> (usize, usize) {
        (0, 0)
    }

    pub fn longest_path_cell(&self) -> (usize, usize) {
        (self.rows - 1, self.cols - 1)
    }

    /// Wordline segments between the driver and cell `(i, j)`.
    pub fn wordline_segments(&self, _row: usize, col: usize) -> usize {
        col + 1
    }

    /// Bitline segments between cell `(i, j)` and ground.
    pub fn bitline_segments(&self, row: usize, _col: usize) -> usize {
        row + 1
    }
}

/// Programmed resistance of every cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStateGrid(Grid);

impl CellStateGrid {
    pub fn uniform(config: &CrossbarConfig, resistance: f64) -> Self {
        Self(Grid::filled(config.rows, config.cols, resistance))
    }

    /// All cells crystalline (SET).
    pub fn all_set(config: &CrossbarConfig) -> Self {
        Self::uniform(config, config.r_set)
    }

    pub fn from_grid(grid: Grid) -> Self {
        Self(grid)
    }

    pub fn grid(&self) -> &Grid {
        &self.0
    }

    pub fn validate(&self, config: &CrossbarConfig) -> Result<(), CircuitError> {
        let (got_rows, got_cols) = self.0.dims();
        if (got_rows, got_cols) != (config.rows, config.cols) {
            return Err(CircuitError::DimensionMismatch {
                rows: config.rows,
                cols: config.cols,
                got_rows,
                got_cols,
            });
        }
        for (row, col, value) in self.0.iter() {
            if !(value >= config.r_set && value <= config.r_reset) {
                return Err(CircuitError::StateOutOfRange {
                    row,
                    col,
                    value,
                    r_set: config.r_set,
                    r_reset: config.r_reset,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMode {
    /// Every cell conducts; line currents accumulate along wordlines and bitlines.
    FullNetwork,
    /// Analytic series current with only the addressed cell conducting.
    IsolatedCell,
}

/// Per-cell programming current (A) at a given drive voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentMap {
    pub currents: Grid,
    pub drive_voltage: f64,
    pub mode: SolverMode,
    pub shortest_cell: (usize, usize),
    pub longest_cell: (usize, usize),
}

impl CurrentMap {
    pub fn i_short(&self) -> f64 {
        self.currents.get(self.shortest_cell.0, self.shortest_cell.1)
    }

    pub fn i_long(&self) -> f64 {
        self.currents.get(self.longest_cell.0, self.longest_cell.1)
    }

    pub fn summary(&self) -> CalibrationSummary {
        CalibrationSummary {
            v_in: self.drive_voltage,
            i_short: self.i_short(),
            i_long: self.i_long(),
            asymmetry: current_asymmetry(self).fraction,
            mode: self.mode,
        }
    }
}

/// JSON record written next to a calibrated current map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub v_in: f64,
    pub i_short: f64,
    pub i_long: f64,
    pub asymmetry: f64,
    pub mode: SolverMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Asymmetry {
    /// (I_short − I_long) / I_short.
    pub fraction: f64,
    pub shortest_cell: (usize, usize),
    pub longest_cell: (usize, usize),
}

pub fn current_asymmetry(map: &CurrentMap) -> Asymmetry {
    let short = map.i_short();
    let long = map.i_long();
    Asymmetry {
        fraction: (short - long) / short,
        shortest_cell: map.shortest_cell,
        longest_cell: map.longest_cell,
    }
}

/// How a cell's wordline/bitline terminal is represented in the linear system.
#[derive(Debug, Clone, Copy)]
enum Terminal {
    Unknown(usize),
    /// Tied to the drive (multiplied by `v_in`) when true, to ground when false.
    Fixed { driven: bool },
}

/// Assembled and factored crossbar network, reusable across drive voltages.
#[derive(Debug, Clone)]
pub struct CrossbarNetwork {
    config: CrossbarConfig,
    series: Grid,
    mode: SolverMode,
    full: Option<FullSystem>,
}

#[derive(Debug, Clone)]
struct FullSystem {
    word: Vec<Terminal>,
    bit: Vec<Terminal>,
    matrix: Option<CompressedSymmetric>,
    factor: Option<SkylineLdl>,
    /// Right-hand side for a 1 V drive.
    unit_rhs: Vec<f64>,
}

impl CrossbarNetwork {
    pub fn new(
        config: &CrossbarConfig,
        states: &CellStateGrid,
        mode: SolverMode,
    ) -> Result<Self, CircuitError> {
        config.validate()?;
        states.validate(config)?;
        let series = states.grid().map(|r| r + config.r_access_on);
        let full = match mode {
            SolverMode::IsolatedCell => None,
            SolverMode::FullNetwork => Some(FullSystem::assemble(config, &series)?),
        };
        Ok(Self {
            config: config.clone(),
            series,
            mode,
            full,
        })
    }

    pub fn config(&self) -> &CrossbarConfig {
        &self.config
    }

    pub fn mode(&self) -> SolverMode {
        self.mode
    }

    pub fn solve(&self, v_in: f64) -> Result<CurrentMap, CircuitError> {
        if !(v_in > 0.0) || !v_in.is_finite() {
            return Err(CircuitError::NonPositiveDrive(v_in));
        }
        let cfg = &self.config;
        let currents = match &self.full {
            None => Grid::from_fn(cfg.rows, cfg.cols, |i, j| {
                let wire = cfg.r_word_unit * cfg.wordline_segments(i, j) as f64
                    + cfg.r_bit_unit * cfg.bitline_segments(i, j) as f64;
                v_in / (wire + self.series.get(i, j))
            }),
            Some(full) => full.currents(cfg, &self.series, v_in)?,
        };
        Ok(CurrentMap {
            currents,
            drive_voltage: v_in,
            mode: self.mode,
            shortest_cell: cfg.shortest_path_cell(),
            longest_cell: cfg.longest_path_cell(),
        })
    }

    /// Longest-path current at `v_in`.
    pub fn longest_path_current(&self, v_in: f64) -> Result<f64, CircuitError> {
        Ok(self.solve(v_in)?.i_long())
    }
}

impl FullSystem {
    fn assemble(config: &CrossbarConfig, series: &Grid) -> Result<Self, CircuitError> {
        let (rows, cols) = (config.rows, config.cols);
        let cells = rows * cols;
        let ideal_word = config.r_word_unit == 0.0;
        let ideal_bit = config.r_bit_unit == 0.0;

        // Interleave the two nodes of each cell so the envelope stays ~2·cols wide.
        let mut next = 0usize;
        let mut word = Vec::with_capacity(cells);
        let mut bit = Vec::with_capacity(cells);
        for _ in 0..cells {
            if ideal_word {
                word.push(Terminal::Fixed { driven: true });
            } else {
                word.push(Terminal::Unknown(next));
                next += 1;
            }
            if ideal_bit {
                bit.push(Terminal::Fixed { driven: false });
            } else {
                bit.push(Terminal::Unknown(next));
                next += 1;
            }
        }
        if next == 0 {
            return Ok(Self {
                word,
                bit,
                matrix: None,
                factor: None,
                unit_rhs: Vec::new(),
            });
        }

        let mut triplets = SymmetricTriplets::new(next);
        let mut unit_rhs = vec![0.0; next];
        let mut stamp = |a: Terminal, b: Terminal, g: f64, rhs: &mut Vec<f64>| match (a, b) {
            (Terminal::Unknown(x), Terminal::Unknown(y)) => triplets.stamp_pair(x, y, g),
            (Terminal::Unknown(x), Terminal::Fixed { driven })
            | (Terminal::Fixed { driven }, Terminal::Unknown(x)) => {
                triplets.add(x, x, g);
                if driven {
                    rhs[x] += g;
                }
            }
            (Terminal::Fixed { .. }, Terminal::Fixed { .. }) => {}
        };

        let g_leak = config.leakage_conductance(config.t_ambient);
        let drive = Terminal::Fixed { driven: true };
        let ground = Terminal::Fixed { driven: false };
        for i in 0..rows {
            for j in 0..cols {
                let k = i * cols + j;
                if !ideal_word {
                    let g = 1.0 / config.r_word_unit;
                    let left = if j == 0 { drive } else { word[k - 1] };
                    stamp(left, word[k], g, &mut unit_rhs);
                }
                if !ideal_bit {
                    let g = 1.0 / config.r_bit_unit;
                    let below = if i == 0 { ground } else { bit[k - cols] };
                    stamp(below, bit[k], g, &mut unit_rhs);
                }
                let g_cell = 1.0 / series.get(i, j) + g_leak;
                stamp(word[k], bit[k], g_cell, &mut unit_rhs);
            }
        }
        let matrix = triplets.compress();
        let factor = matrix.factor().map_err(CircuitError::Singular)?;
        Ok(Self {
            word,
            bit,
            matrix: Some(matrix),
            factor: Some(factor),
            unit_rhs,
        })
    }

    fn node_voltages(&self, v_in: f64) -> Result<Vec<f64>, CircuitError> {
        let (Some(matrix), Some(factor)) = (&self.matrix, &self.factor) else {
            return Ok(Vec::new());
        };
        let rhs: Vec<f64> = self.unit_rhs.iter().map(|b| b * v_in).collect();
        let rhs_norm = norm2(&rhs).max(f64::MIN_POSITIVE);
        let mut x = factor.solve(&rhs);
        let mut residual = f64::INFINITY;
        // Iterative refinement on the cached factor.
        for _ in 0..4 {
            let ax = matrix.mul_vec(&x);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            residual = norm2(&r) / rhs_norm;
            if residual <= RESIDUAL_TOLERANCE {
                return Ok(x);
            }
            let dx = factor.solve(&r);
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += d;
            }
        }
        Err(CircuitError::NotConverged { residual })
    }

    fn currents(
        &self,
        config: &CrossbarConfig,
        series: &Grid,
        v_in: f64,
    ) -> Result<Grid, CircuitError> {
        let x = self.node_voltages(v_in)?;
        let potential = |t: Terminal| match t {
            Terminal::Unknown(idx) => x[idx],
            Terminal::Fixed { driven: true } => v_in,
            Terminal::Fixed { driven: false } => 0.0,
        };
        Ok(Grid::from_fn(config.rows, config.cols, |i, j| {
            let k = i * config.cols + j;
            (potential(self.word[k]) - potential(self.bit[k])) / series.get(i, j)
        }))
    }
}

/// Solves the crossbar at drive voltage `v_in`.
pub fn solve_currents(
    config: &CrossbarConfig,
    states: &CellStateGrid,
    v_in: f64,
    mode: SolverMode,
) -> Result<CurrentMap, CircuitError> {
    if !(v_in > 0.0) || !v_in.is_finite() {
        return Err(CircuitError::NonPositiveDrive(v_in));
    }
    CrossbarNetwork::new(config, states, mode)?.solve(v_in)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub rel_tolerance: f64,
    pub v_max: f64,
    pub max_iterations: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            rel_tolerance: 1e-6,
            v_max: 20.0,
            max_iterations: 200,
        }
    }
}

/// Bisects the drive voltage until the longest-path current equals `target`.
pub fn calibrate_drive(
    config: &CrossbarConfig,
    states: &CellStateGrid,
    target: f64,
    mode: SolverMode,
) -> Result<(f64, CurrentMap), CircuitError> {
    let network = CrossbarNetwork::new(config, states, mode)?;
    calibrate_network(&network, target, CalibrationOptions::default())
}

pub fn calibrate_network(
    network: &CrossbarNetwork,
    target: f64,
    opts: CalibrationOptions,
) -> Result<(f64, CurrentMap), CircuitError> {
    if !(target > 0.0) || !target.is_finite() {
        return Err(CircuitError::NonPositiveTarget(target));
    }
    let top = network.solve(opts.v_max)?;
    if top.i_long() < target * (1.0 - opts.rel_tolerance) {
        return Err(CircuitError::Unreachable {
            target,
            achieved: top.i_long(),
            v_max: opts.v_max,
        });
    }
    let (mut lo, mut hi) = (0.0, opts.v_max);
    let mut best = top;
    for _ in 0..opts.max_iterations {
        if ((best.i_long() - target) / target).abs() <= opts.rel_tolerance {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let map = network.solve(mid)?;
        if map.i_long() < target {
            lo = mid;
        } else {
            hi = mid;
        }
        best = map;
    }
    Ok((best.drive_voltage, best))
}
