//! Analytical cost model of a tiled in-memory-computing accelerator.

mod arch;
mod calibration;
mod energy;
mod mapping;
mod variation;

pub use arch::{ArchConfig, EnergyCoefficients};
pub use calibration::{
    calibrate, static_breakdown, ActivityTrace, CalibrationTargets, BASE_COEFFICIENTS, DEFAULT_COEFFICIENTS,
};
pub use energy::{
    cost_of_inference, edp, energy_per_timestep, latency, sigma_e_energy, Breakdown, CostModel, CostReport,
    DatasetCost, NormalizedCost,
};
pub use mapping::{map_layer, map_network, LayerMapping, NetworkMapping};
pub use variation::{apply_device_variation, variation_factors};
