//! Synthetic labelled data from a small switchable feeder.
//!
//! [`feeder`] holds the description file, [`flow`] the linearized per-phase
//! power flow, and [`scenario`] the Monte Carlo sampling of loads, DER output
//! and measurement noise.

pub mod feeder;
pub mod flow;
pub mod scenario;

pub use feeder::{
    Branch, Bus, Der, FeederModel, Load, LoadType, LoadVariant, Phase, PhaseLoad, PhaseSet, ProtectiveDevice,
    Substation, SwitchConfig,
};
pub use flow::{sequence_components, solve_linearized_flow, FlowSolution, PreparedNetwork};
pub use scenario::{
    generate_dataset, sample_scenario, scenario_rng, truncated_normal, GeneratedData, SamplingParams, Scenario,
};

use crate::error::Result;
use crate::schema::TopologyLabel;

/// Admissible topologies of `feeder`, configuration-major.
pub fn enumerate_topologies(feeder: &FeederModel) -> Result<Vec<TopologyLabel>> {
    Ok(PreparedNetwork::new(feeder)?.topologies().to_vec())
}
