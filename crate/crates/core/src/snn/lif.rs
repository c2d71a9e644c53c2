use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Leak factor and firing threshold of a leaky integrate-and-fire layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifConfig {
    #[serde(default = "LifConfig::default_tau")]
    pub tau: f32,
    #[serde(default = "LifConfig::default_v_th")]
    pub v_th: f32,
}

impl LifConfig {
    fn default_tau() -> f32 {
        0.5
    }

    fn default_v_th() -> f32 {
        1.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!(
                "lif.tau = {} violates the invariant tau in (0, 1]",
                self.tau
            )));
        }
        if !(self.v_th > 0.0 && self.v_th.is_finite()) {
            return Err(Error::Config(format!(
                "lif.v_th = {} violates the invariant v_th > 0",
                self.v_th
            )));
        }
        Ok(())
    }
}

impl Default for LifConfig {
    fn default() -> Self {
        Self {
            tau: Self::default_tau(),
            v_th: Self::default_v_th(),
        }
    }
}

/// Membrane potentials and last emitted spikes of one LIF layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LifState {
    pub u: Tensor,
    pub last_spikes: Tensor,
}

impl LifState {
    pub fn new(shape: &[usize]) -> Self {
        Self {
            u: Tensor::zeros(shape),
            last_spikes: Tensor::zeros(shape),
        }
    }

    pub fn reset(&mut self) {
        self.u.fill(0.0);
        self.last_spikes.fill(0.0);
    }
}

/// One LIF update: `u = tau * u + I`, fire where `u > v_th`, hard reset to 0.
///
/// Returns the spikes; `state` holds the post-reset potentials afterwards.
pub fn lif_step(state: &mut LifState, input_current: &Tensor, cfg: &LifConfig) -> Result<Tensor> {
    if state.u.shape() != input_current.shape() {
        return Err(Error::dim(format!(
            "input current {:?} does not match membrane {:?}",
            input_current.shape(),
            state.u.shape()
        )));
    }
    let u = state.u.data_mut();
    let s = state.last_spikes.data_mut();
    for ((u, s), &i) in u.iter_mut().zip(s.iter_mut()).zip(input_current.data()) {
        let v = cfg.tau * *u + i;
        if v > cfg.v_th {
            *s = 1.0;
            *u = 0.0;
        } else {
            *s = 0.0;
            *u = v;
        }
    }
    debug_assert!(state.last_spikes.data().iter().all(|&v| v == 0.0 || v == 1.0));
    Ok(state.last_spikes.clone())
}
