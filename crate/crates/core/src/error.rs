// SPDX-License-Identifier: Apache-2.0

//! Crate-level error and its process exit class.

use thiserror::Error;

use crate::circuit::CircuitError;
use crate::energy::EnergyError;
use crate::partition::PartitionError;
use crate::placement::PlacementError;
use crate::swarm::SwarmError;
use crate::thermal::ThermalError;
use crate::workload::WorkloadError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    Internal = 1,
    Config = 2,
    Infeasible = 3,
    Solver = 4,
}

impl ExitClass {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn label(self) -> &'static str {
        match self {
            ExitClass::Internal => "internal",
            ExitClass::Config => "config",
            ExitClass::Infeasible => "infeasible",
            ExitClass::Solver => "solver",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("circuit: {0}")]
    Circuit(#[from] CircuitError),
    #[error("thermal: {0}")]
    Thermal(#[from] ThermalError),
    #[error("workload: {0}")]
    Workload(#[from] WorkloadError),
    #[error("partition: {0}")]
    Partition(#[from] PartitionError),
    #[error("placement: {0}")]
    Placement(#[from] PlacementError),
    #[error("swarm: {0}")]
    Swarm(#[from] SwarmError),
    #[error("energy: {0}")]
    Energy(#[from] EnergyError),
    #[error("no feasible mapping of {clusters} clusters onto {tiles} tiles was found")]
    Infeasible { clusters: usize, tiles: usize },
}

impl Error {
    pub fn exit_class(&self) -> ExitClass {
        match self {
            Error::Config(_) | Error::Energy(_) => ExitClass::Config,
            Error::Circuit(e) => match e {
                CircuitError::UnsupportedNode { .. }
                | CircuitError::InvalidConfig(_)
                | CircuitError::DimensionMismatch { .. }
                | CircuitError::StateOutOfRange { .. }
                | CircuitError::NonPositiveDrive(_)
                | CircuitError::NonPositiveTarget(_) => ExitClass::Config,
                _ => ExitClass::Solver,
            },
            Error::Thermal(e) => match e {
                ThermalError::InvalidParams(_) => ExitClass::Config,
                _ => ExitClass::Solver,
            },
            Error::Workload(_) => ExitClass::Config,
            Error::Partition(e) => match e {
                PartitionError::FanInExceedsRows { .. } => ExitClass::Infeasible,
                PartitionError::Invalid(_) => ExitClass::Internal,
                _ => ExitClass::Config,
            },
            Error::Placement(e) => match e {
                PlacementError::TileOverflow { .. } | PlacementError::NoActivity => ExitClass::Infeasible,
                _ => ExitClass::Config,
            },
            Error::Swarm(e) => match e {
                SwarmError::InvalidConfig(_) => ExitClass::Config,
                SwarmError::Evaluation { source, .. } => source
                    .downcast_ref::<Error>()
                    .map_or(ExitClass::Internal, Error::exit_class),
            },
            Error::Infeasible { .. } => ExitClass::Infeasible,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
