// SPDX-License-Identifier: Apache-2.0

//! Endurance-aware mapping of spiking neural networks onto memristive crossbars.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod config;
pub mod energy;
pub mod error;
pub mod grid;
pub mod partition;
pub mod pipeline;
pub mod placement;
pub mod swarm;
pub mod thermal;
pub mod workload;
