//! LIF neurons, network descriptions and the per-timestep forward pass.

mod instance;
mod lif;
mod model;
mod spec;

pub use instance::SnnInstance;
pub use lif::{lif_step, LifConfig, LifState};
pub use model::{LayerParams, Model};
pub use spec::{LayerSpec, NetworkSpec, WeightedLayer};
