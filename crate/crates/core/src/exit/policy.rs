use serde::{Deserialize, Serialize};

use super::entropy::{argmax, normalized_entropy, softmax_row};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::snn::SnnInstance;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitPolicy {
    pub theta: f64,
    pub t_max: usize,
}

impl ExitPolicy {
    pub fn new(theta: f64, t_max: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::arg(format!("theta = {theta} violates 0 <= theta <= 1")));
        }
        if t_max == 0 {
            return Err(Error::arg("t_max must be >= 1"));
        }
        Ok(Self { theta, t_max })
    }
}

/// Strict threshold test; an entropy equal to `theta` keeps going.
pub fn should_exit(entropy: f64, policy: &ExitPolicy) -> bool {
    entropy < policy.theta
}

/// Record of one dynamic inference.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExitTrace {
    /// Normalized entropy of the accumulated output after each executed timestep.
    pub entropies: Vec<f64>,
    pub t_hat: usize,
    pub prediction: usize,
    pub probabilities: Vec<f64>,
    /// Mean logits over the executed timesteps.
    pub mean_logits: Vec<f32>,
    /// Nonzero inputs per weighted layer, one entry per executed timestep.
    pub activities: Vec<Vec<f64>>,
}

fn check_single(x: &Tensor) -> Result<()> {
    if x.rank() != 4 || x.batch() != 1 {
        return Err(Error::dim(format!(
            "exit decisions are per sample; expected a (1, C, H, W) input, got {:?}",
            x.shape()
        )));
    }
    Ok(())
}

fn check_policy(inst: &SnnInstance, policy: &ExitPolicy) -> Result<()> {
    let t_max = inst.model().spec().t_max;
    if policy.t_max > t_max {
        return Err(Error::arg(format!("policy t_max {} exceeds the network t_max {t_max}", policy.t_max)));
    }
    Ok(())
}

/// Runs timesteps on one sample until the entropy of the running mean
/// output drops below `theta`, or `t_max` is reached.
pub fn dynamic_infer(inst: &mut SnnInstance, x: &Tensor, policy: &ExitPolicy) -> Result<ExitTrace> {
    check_single(x)?;
    check_policy(inst, policy)?;
    inst.reset();
    let mut entropies = Vec::with_capacity(policy.t_max);
    let mut activities = Vec::with_capacity(policy.t_max);
    loop {
        inst.forward_timestep(x)?;
        activities.push(inst.last_activity().to_vec());
        let mean = inst.mean_output()?;
        let probabilities = softmax_row(mean.data());
        let e = normalized_entropy(&probabilities)?;
        entropies.push(e);
        let t = inst.timestep();
        if should_exit(e, policy) || t == policy.t_max {
            return Ok(ExitTrace {
                entropies,
                t_hat: t,
                prediction: argmax(&probabilities),
                probabilities,
                mean_logits: mean.into_data(),
                activities,
            });
        }
    }
}

/// Everything an exit decision can depend on, recorded for all timesteps
/// of one sample so that many thresholds can be replayed cheaply.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub mean_logits: Vec<Vec<f32>>,
    pub probabilities: Vec<Vec<f64>>,
    pub entropies: Vec<f64>,
    pub activities: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn record(inst: &mut SnnInstance, x: &Tensor, t_max: usize) -> Result<Trajectory> {
        check_single(x)?;
        check_policy(inst, &ExitPolicy::new(0.0, t_max)?)?;
        inst.reset();
        let mut tr = Trajectory {
            mean_logits: Vec::with_capacity(t_max),
            probabilities: Vec::with_capacity(t_max),
            entropies: Vec::with_capacity(t_max),
            activities: Vec::with_capacity(t_max),
        };
        for _ in 0..t_max {
            inst.forward_timestep(x)?;
            tr.activities.push(inst.last_activity().to_vec());
            let mean = inst.mean_output()?;
            let p = softmax_row(mean.data());
            tr.entropies.push(normalized_entropy(&p)?);
            tr.probabilities.push(p);
            tr.mean_logits.push(mean.into_data());
        }
        Ok(tr)
    }

    pub fn t_max(&self) -> usize {
        self.entropies.len()
    }

    /// The exit timestep `policy` would choose.
    pub fn t_hat(&self, policy: &ExitPolicy) -> Result<usize> {
        if policy.t_max > self.t_max() {
            return Err(Error::arg(format!(
                "policy t_max {} exceeds the {} recorded timesteps",
                policy.t_max,
                self.t_max()
            )));
        }
        Ok(self.entropies[..policy.t_max]
            .iter()
            .position(|&e| should_exit(e, policy))
            .map_or(policy.t_max, |i| i + 1))
    }

    /// The trace [`dynamic_infer`] would produce under `policy`.
    pub fn replay(&self, policy: &ExitPolicy) -> Result<ExitTrace> {
        let t = self.t_hat(policy)?;
        let probabilities = self.probabilities[t - 1].clone();
        Ok(ExitTrace {
            entropies: self.entropies[..t].to_vec(),
            t_hat: t,
            prediction: argmax(&probabilities),
            probabilities,
            mean_logits: self.mean_logits[t - 1].clone(),
            activities: self.activities[..t].to_vec(),
        })
    }
}
