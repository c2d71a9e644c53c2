//! Entropy-thresholded early exit over timesteps.

mod entropy;
mod eval;
mod policy;

pub use entropy::{argmax, normalized_entropy, softmax, softmax_row, PROB_FLOOR};
pub use eval::{
    default_theta_grid, evaluate_policy, policy_cost, record_trajectories, replay_policy, static_point, sweep_csv,
    threshold_sweep, PolicySummary, SweepRow,
};
pub use policy::{dynamic_infer, should_exit, ExitPolicy, ExitTrace, Trajectory};
