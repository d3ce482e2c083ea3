// SPDX-License-Identifier: Apache-2.0

//! PCM RESET self-heating and endurance.
//!
//! A RESET pulse is integrated in fixed steps. Each step updates the
//! crystalline fraction, thermal conductivity, cell resistance, Joule heat,
//! self-heating temperature and dissipated heat, in that order, until the
//! crystalline fraction falls below a cutoff. The peak temperature then sets
//! the cell's endurance through thermally activated ion motion.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::CurrentMap;
use crate::grid::Grid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThermalError {
    #[error("invalid PCM parameters: {0}")]
    InvalidParams(String),
    #[error("programming current must be positive, got {0} A")]
    NonPositiveCurrent(f64),
    #[error("peak temperature must be positive, got {0} K")]
    NonPositiveTemperature(f64),
    #[error("cell did not amorphize within {steps} steps (final V_c = {final_vc})")]
    NotAmorphized { steps: u64, final_vc: f64 },
    #[error("cell ({row}, {col}): {source}")]
    Cell {
        row: usize,
        col: usize,
        source: Box<ThermalError>,
    },
}

/// Which conductivity interpolation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ConductivityForm {
    /// k = (k_c − k_a)·V_c + k_a, so k(1) = k_c and k(0) = k_a.
    #[default]
    Corrected,
    /// k = (k_a − k_c)·V_c + k_a. Negative while mostly crystalline; debugging only.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EnduranceModel {
    /// t_f / t_s = exp((U_f − U_s) / (k_B·T)).
    #[default]
    Ratio,
    /// exp(γ / T).
    Gamma,
}

/// GST material constants and integration controls. Lengths in cm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcmParams {
    pub t_melt: f64,
    pub alpha: f64,
    pub k_amorphous: f64,
    pub k_crystalline: f64,
    pub r_set: f64,
    pub r_reset: f64,
    pub thickness_cm: f64,
    pub volume_cm3: f64,
    pub heat_capacity: f64,
    pub hop_distance_cm: f64,
    pub hop_length_cm: f64,
    pub attempt_freq: f64,
    pub u_switch_ev: f64,
    pub u_fail_ev: f64,
    pub gamma_fit: f64,
    pub boltzmann_ev: f64,
    pub charge_q: f64,
    pub dt_s: f64,
    pub vc_threshold: f64,
    /// Seconds per unit of `t` in the JMA exponent.
    pub jma_time_unit_s: f64,
    pub max_steps: u64,
    pub conductivity: ConductivityForm,
    pub endurance_model: EnduranceModel,
}

impl Default for PcmParams {
    fn default() -> Self {
        Self {
            t_melt: 810.0,
            alpha: 2.25,
            k_amorphous: 0.002,
            k_crystalline: 0.005,
            r_set: 10e3,
            r_reset: 200e3,
            thickness_cm: 120e-7,
            volume_cm3: 4e-14,
            heat_capacity: 1.25,
            hop_distance_cm: 10e-7,
            hop_length_cm: 0.2e-7,
            attempt_freq: 1e13,
            u_switch_ev: 2.0,
            u_fail_ev: 3.0,
            gamma_fit: 1000.0,
            boltzmann_ev: 8.617e-5,
            charge_q: 1.602_176_634e-19,
            dt_s: 1e-12,
            vc_threshold: 0.01,
            jma_time_unit_s: 1e-9,
            max_steps: 1_000_000,
            conductivity: ConductivityForm::Corrected,
            endurance_model: EnduranceModel::Ratio,
        }
    }
}

impl PcmParams {
    pub fn validate(&self) -> Result<(), ThermalError> {
        let positive = [
            ("t_melt", self.t_melt),
            ("alpha", self.alpha),
            ("k_amorphous", self.k_amorphous),
            ("k_crystalline", self.k_crystalline),
            ("r_set", self.r_set),
            ("r_reset", self.r_reset),
            ("thickness_cm", self.thickness_cm),
            ("volume_cm3", self.volume_cm3),
            ("heat_capacity", self.heat_capacity),
            ("hop_distance_cm", self.hop_distance_cm),
            ("hop_length_cm", self.hop_length_cm),
            ("attempt_freq", self.attempt_freq),
            ("u_switch_ev", self.u_switch_ev),
            ("u_fail_ev", self.u_fail_ev),
            ("gamma_fit", self.gamma_fit),
            ("boltzmann_ev", self.boltzmann_ev),
            ("charge_q", self.charge_q),
            ("dt_s", self.dt_s),
            ("jma_time_unit_s", self.jma_time_unit_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ThermalError::InvalidParams(format!(
                    "{name} = {v} must be finite and > 0"
                )));
            }
        }
        if self.u_fail_ev <= self.u_switch_ev {
            return Err(ThermalError::InvalidParams(format!(
                "u_fail_ev ({}) must exceed u_switch_ev ({})",
                self.u_fail_ev, self.u_switch_ev
            )));
        }
        if self.r_reset <= self.r_set {
            return Err(ThermalError::InvalidParams(format!(
                "r_reset ({}) must exceed r_set ({})",
                self.r_reset, self.r_set
            )));
        }
        if !(self.vc_threshold > 0.0 && self.vc_threshold < 1.0) {
            return Err(ThermalError::InvalidParams(format!(
                "vc_threshold = {} must lie in (0, 1)",
                self.vc_threshold
            )));
        }
        if self.max_steps == 0 {
            return Err(ThermalError::InvalidParams("max_steps must be >= 1".into()));
        }
        Ok(())
    }

    pub fn conductivity_at(&self, v_c: f64) -> f64 {
        match self.conductivity {
            ConductivityForm::Corrected => {
                (self.k_crystalline - self.k_amorphous) * v_c + self.k_amorphous
            }
            ConductivityForm::Printed => {
                (self.k_amorphous - self.k_crystalline) * v_c + self.k_amorphous
            }
        }
    }

    pub fn resistance_at(&self, v_c: f64) -> f64 {
        self.r_set + (1.0 - v_c) * (self.r_reset - self.r_set)
    }

    /// Self-heating temperature after `t` seconds at constant `k` and `r_pcm`.
    pub fn self_heating(&self, i_prog: f64, r_pcm: f64, k: f64, t: f64, t_amb: f64) -> f64 {
        let l2 = self.thickness_cm * self.thickness_cm;
        let steady = i_prog * i_prog * r_pcm * l2 / (k * self.volume_cm3);
        steady * (1.0 - (-k * t / (l2 * self.heat_capacity)).exp()) + t_amb
    }

    pub fn dissipated(&self, k: f64, t_sh: f64, t_amb: f64) -> f64 {
        k * self.volume_cm3 / (self.thickness_cm * self.thickness_cm) * (t_sh - t_amb)
    }

    fn crystalline_fraction(&self, t_sh: f64, t_amb: f64, t: f64) -> f64 {
        (-self.alpha * (t_sh - t_amb) / self.t_melt * (t / self.jma_time_unit_s)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: f64,
    pub v_c: f64,
    pub k: f64,
    pub r_pcm: f64,
    pub w_d: f64,
    pub w_j: f64,
    pub t_sh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmorphizationTrace {
    pub steps: Vec<TraceStep>,
    pub i_prog: f64,
    pub t_amb: f64,
    pub amorphization_time: f64,
    pub t_sh_peak: f64,
    /// Index into `steps` of the peak temperature.
    pub peak_index: usize,
}

impl AmorphizationTrace {
    pub fn peak(&self) -> &TraceStep {
        &self.steps[self.peak_index]
    }

    /// Columns `t,v_c,r_pcm,t_sh`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,v_c,r_pcm,t_sh")?;
        for s in &self.steps {
            writeln!(out, "{},{},{},{}", s.t, s.v_c, s.r_pcm, s.t_sh)?;
        }
        Ok(())
    }
}

/// Result of a RESET simulation without the stored trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResetOutcome {
    pub t_sh_peak: f64,
    pub r_pcm_at_peak: f64,
    pub amorphization_time: f64,
    pub steps: u64,
}

fn integrate(
    i_prog: f64,
    t_amb: f64,
    params: &PcmParams,
    mut record: Option<&mut Vec<TraceStep>>,
) -> Result<ResetOutcome, ThermalError> {
    if !(i_prog > 0.0) || !i_prog.is_finite() {
        return Err(ThermalError::NonPositiveCurrent(i_prog));
    }
    params.validate()?;
    let i2 = i_prog * i_prog;

    let mut v_c = 1.0;
    let mut t_sh = t_amb;
    let mut peak = (t_sh, params.r_set);
    if let Some(trace) = record.as_deref_mut() {
        let k = params.conductivity_at(1.0);
        trace.push(TraceStep {
            t: 0.0,
            v_c,
            k,
            r_pcm: params.r_set,
            w_d: 0.0,
            w_j: i2 * params.r_set,
            t_sh,
        });
    }

    for n in 1..=params.max_steps {
        let t = n as f64 * params.dt_s;
        v_c = v_c.min(params.crystalline_fraction(t_sh, t_amb, t));
        let k = params.conductivity_at(v_c);
        let r_pcm = params.resistance_at(v_c);
        let w_j = i2 * r_pcm;
        t_sh = params.self_heating(i_prog, r_pcm, k, t, t_amb);
        if t_sh > peak.0 {
            peak = (t_sh, r_pcm);
        }
        if let Some(trace) = record.as_deref_mut() {
            let w_d = params.dissipated(k, t_sh, t_amb);
            trace.push(TraceStep {
                t,
                v_c,
                k,
                r_pcm,
                w_d,
                w_j,
                t_sh,
            });
        }
        if v_c < params.vc_threshold {
            return Ok(ResetOutcome {
                t_sh_peak: peak.0,
                r_pcm_at_peak: peak.1,
                amorphization_time: t,
                steps: n,
            });
        }
    }
    Err(ThermalError::NotAmorphized {
        steps: params.max_steps,
        final_vc: v_c,
    })
}

/// Integrates one RESET pulse at constant current, keeping the full trace.
pub fn simulate_reset(
    i_prog: f64,
    t_amb: f64,
    params: &PcmParams,
) -> Result<AmorphizationTrace, ThermalError> {
    let mut steps = Vec::new();
    let out = integrate(i_prog, t_amb, params, Some(&mut steps))?;
    let peak_index = steps
        .iter()
        .enumerate()
        .fold(0, |best, (k, s)| if s.t_sh > steps[best].t_sh { k } else { best });
    Ok(AmorphizationTrace {
        steps,
        i_prog,
        t_amb,
        amorphization_time: out.amorphization_time,
        t_sh_peak: out.t_sh_peak,
        peak_index,
    })
}

/// Same integration as [`simulate_reset`] without storing the trace.
pub fn simulate_peak(
    i_prog: f64,
    t_amb: f64,
    params: &PcmParams,
) -> Result<ResetOutcome, ThermalError> {
    integrate(i_prog, t_amb, params, None)
}

fn ion_prefactor(params: &PcmParams, t_sh: f64, write_voltage: f64) -> f64 {
    let kb_joule = params.boltzmann_ev * params.charge_q;
    let field = params.charge_q * write_voltage / (2.0 * kb_joule * t_sh)
        * (params.hop_length_cm / params.hop_distance_cm);
    2.0 * params.hop_distance_cm / (params.attempt_freq * params.hop_length_cm) * (-field).exp()
}

/// Time for an ion to cross the switching distance.
pub fn switching_time(params: &PcmParams, t_sh: f64, write_voltage: f64) -> f64 {
    ion_prefactor(params, t_sh, write_voltage)
        * (params.u_switch_ev / (params.boltzmann_ev * t_sh)).exp()
}

/// Mean time to endurance failure.
pub fn failure_time(params: &PcmParams, t_sh: f64, write_voltage: f64) -> f64 {
    ion_prefactor(params, t_sh, write_voltage)
        * (params.u_fail_ev / (params.boltzmann_ev * t_sh)).exp()
}

/// Endurance in cycles at peak self-heating temperature `t_sh_peak`.
pub fn endurance_from_temp(
    t_sh_peak: f64,
    params: &PcmParams,
    model: EnduranceModel,
) -> Result<f64, ThermalError> {
    if !(t_sh_peak > 0.0) || !t_sh_peak.is_finite() {
        return Err(ThermalError::NonPositiveTemperature(t_sh_peak));
    }
    Ok(match model {
        EnduranceModel::Ratio => {
            ((params.u_fail_ev - params.u_switch_ev) / (params.boltzmann_ev * t_sh_peak)).exp()
        }
        EnduranceModel::Gamma => (params.gamma_fit / t_sh_peak).exp(),
    })
}

/// Per-cell peak temperature and endurance derived from a current map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnduranceMap {
    pub t_sh_peak: Grid,
    pub endurance: Grid,
    pub amorphization_time: Grid,
    pub model: EnduranceModel,
    pub t_ambient: f64,
    pub source: CurrentMap,
    /// Number of distinct RESET simulations actually run.
    pub unique_simulations: usize,
}

impl EnduranceMap {
    pub fn rows(&self) -> usize {
        self.endurance.rows()
    }

    pub fn cols(&self) -> usize {
        self.endurance.cols()
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.endurance.get(row, col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MapOptions {
    /// Currents are rounded to a multiple of this before memoization; 0 keys on exact bits.
    pub current_quantum: f64,
}

pub fn endurance_map(
    currents: &CurrentMap,
    t_amb: f64,
    params: &PcmParams,
) -> Result<EnduranceMap, ThermalError> {
    endurance_map_with(currents, t_amb, params, MapOptions::default())
}

pub fn endurance_map_with(
    currents: &CurrentMap,
    t_amb: f64,
    params: &PcmParams,
    opts: MapOptions,
) -> Result<EnduranceMap, ThermalError> {
    params.validate()?;
    let key = |i: f64| {
        if opts.current_quantum > 0.0 {
            ((i / opts.current_quantum).round() * opts.current_quantum).to_bits()
        } else {
            i.to_bits()
        }
    };
    let mut first_cell: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
    for (row, col, i) in currents.currents.iter() {
        first_cell.entry(key(i)).or_insert((row, col));
    }
    let unique: Vec<(u64, (usize, usize))> = first_cell.into_iter().collect();
    let solved: Vec<(u64, ResetOutcome)> = unique
        .par_iter()
        .map(|&(k, (row, col))| {
            simulate_peak(f64::from_bits(k), t_amb, params)
                .map(|out| (k, out))
                .map_err(|e| ThermalError::Cell {
                    row,
                    col,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_, _>>()?;
    let memo: BTreeMap<u64, ResetOutcome> = solved.into_iter().collect();

    let (rows, cols) = currents.currents.dims();
    let lookup = |i: usize, j: usize| memo[&key(currents.currents.get(i, j))];
    let t_sh_peak = Grid::from_fn(rows, cols, |i, j| lookup(i, j).t_sh_peak);
    let amorphization_time = Grid::from_fn(rows, cols, |i, j| lookup(i, j).amorphization_time);
    let mut endurance = Grid::filled(rows, cols, 0.0);
    for (i, j, t) in t_sh_peak.iter() {
        endurance.set(i, j, endurance_from_temp(t, params, params.endurance_model)?);
    }
    Ok(EnduranceMap {
        t_sh_peak,
        endurance,
        amorphization_time,
        model: params.endurance_model,
        t_ambient: t_amb,
        source: currents.clone(),
        unique_simulations: memo.len(),
    })
}
