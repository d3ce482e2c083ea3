// SPDX-License-Identifier: Apache-2.0

//! Run configuration, read from TOML with dotted section keys.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::circuit::{corner_params, CrossbarConfig, SolverMode};
use crate::energy::EnergyParams;
use crate::error::{Error, Result};
use crate::partition::PartitionOptions;
use crate::pipeline::{Platform, Strategy};
use crate::placement::LifetimeMode;
use crate::swarm::SwarmConfig;
use crate::thermal::PcmParams;
use crate::workload::GeneratorSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossbarSection {
    pub rows: usize,
    pub cols: usize,
    pub node_nm: u32,
    pub t_ambient: f64,
    /// Longest-path current the drive is calibrated to.
    pub calibration_target_a: f64,
    pub solver: SolverMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_word_unit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_bit_unit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_set: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_reset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_access_on: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_leak_ref: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leak_doubling_k: Option<f64>,
}

impl Default for CrossbarSection {
    fn default() -> Self {
        Self {
            rows: 128,
            cols: 128,
            node_nm: 65,
            t_ambient: 298.0,
            calibration_target_a: 200e-6,
            solver: SolverMode::FullNetwork,
            r_word_unit: None,
            r_bit_unit: None,
            r_set: None,
            r_reset: None,
            r_access_on: None,
            g_leak_ref: None,
            leak_doubling_k: None,
        }
    }
}

impl CrossbarSection {
    pub fn to_config(&self) -> Result<CrossbarConfig> {
        let mut c = corner_params(self.node_nm, self.t_ambient)?.with_dims(self.rows, self.cols);
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut c.r_word_unit, self.r_word_unit);
        set(&mut c.r_bit_unit, self.r_bit_unit);
        set(&mut c.r_set, self.r_set);
        set(&mut c.r_reset, self.r_reset);
        set(&mut c.r_access_on, self.r_access_on);
        set(&mut c.g_leak_ref, self.g_leak_ref);
        set(&mut c.leak_doubling_k, self.leak_doubling_k);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub tiles: usize,
    pub lifetime_mode: LifetimeMode,
    pub crossbar: CrossbarSection,
    pub pcm: PcmParams,
    pub pso: SwarmConfig,
    pub energy: EnergyParams,
    pub partition: PartitionOptions,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workload: Option<GeneratorSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Espine,
            tiles: 4,
            lifetime_mode: LifetimeMode::Accumulate,
            crossbar: CrossbarSection::default(),
            pcm: PcmParams::default(),
            pso: SwarmConfig::default(),
            energy: EnergyParams::default(),
            partition: PartitionOptions::default(),
            workload: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_owned() + &location(text, e.span())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration is always representable in TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.tiles == 0 {
            return Err(Error::Config("tiles must be >= 1".into()));
        }
        self.crossbar.to_config()?;
        self.pcm.validate()?;
        self.pso.validate()?;
        self.energy.validate()?;
        self.energy.mesh(self.tiles)?;
        self.partition.validate()?;
        if let Some(w) = &self.workload {
            w.validate()?;
        }
        Ok(())
    }

    pub fn crossbar_config(&self) -> Result<CrossbarConfig> {
        self.crossbar.to_config()
    }

    /// Calibrates the crossbar and builds the shared endurance map.
    pub fn platform(&self) -> Result<Platform> {
        Platform::calibrated(
            self.crossbar_config()?,
            &self.pcm,
            self.crossbar.calibration_target_a,
            self.crossbar.solver,
            self.tiles,
            self.energy.clone(),
            self.lifetime_mode,
        )
    }
}

fn location(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => {
            let line = text[..r.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let d = RunConfig::default();
        let text = d.to_toml();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), d);
        assert!(text.contains("phi1") && text.contains("e_route"));
    }

    #[test]
    fn dotted_keys_and_sections_agree() {
        let dotted = "tiles = 16\npso.iterations = 7\ncrossbar.rows = 64\nstrategy = \"spinemap++\"\n";
        let table = "tiles = 16\nstrategy = \"spinemap++\"\n[pso]\niterations = 7\n[crossbar]\nrows = 64\n";
        let a = RunConfig::from_toml_str(dotted).unwrap();
        assert_eq!(a, RunConfig::from_toml_str(table).unwrap());
        assert_eq!(a.pso.iterations, 7);
        assert_eq!(a.strategy, Strategy::SpinemapPlusPlus);
        assert_eq!(a.pso.particles, 20);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for bad in ["pso.inertia = 0.7", "colour = 1", "crossbar.nodes = 65", "energy.e_spk = 1.0"] {
            let e = RunConfig::from_toml_str(bad).unwrap_err();
            assert!(matches!(e, Error::Config(_)), "{bad}: {e}");
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_toml_str("tiles = 0").is_err());
        assert!(RunConfig::from_toml_str("crossbar.node_nm = 22").is_err());
        assert!(RunConfig::from_toml_str("pso.v_clamp = -1.0").is_err());
        assert!(RunConfig::from_toml_str("energy.mesh_dims = [1, 2]\ntiles = 4").is_err());
    }

    #[test]
    fn overrides_reach_the_crossbar() {
        let c = RunConfig::from_toml_str("crossbar.r_word_unit = 0.0\ncrossbar.r_access_on = 2000.0")
            .unwrap()
            .crossbar_config()
            .unwrap();
        assert_eq!(c.r_word_unit, 0.0);
        assert_eq!(c.r_access_on, 2000.0);
    }

    #[test]
    fn workload_section_parses() {
        let text = "[workload]\nseed = 3\n[workload.topology]\nkind = \"feedforward\"\nlayers = [8, 4]\n[workload.activations]\nkind = \"zipf\"\ns = 1.2\nmax = 50\n";
        let c = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(c.workload.unwrap().seed, 3);
    }
}
