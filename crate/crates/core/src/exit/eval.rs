use std::fmt::Write as _;

use serde::Serialize;

use super::policy::{dynamic_infer, ExitPolicy, ExitTrace, Trajectory};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::imc::{CostModel, DatasetCost};
use crate::snn::{Model, SnnInstance};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicySummary {
    pub theta: f64,
    pub t_max: usize,
    pub accuracy: f64,
    pub mean_t_hat: f64,
    /// Sample count for each exit timestep `1..=t_max`.
    pub histogram: Vec<usize>,
    pub traces: Vec<ExitTrace>,
}

impl PolicySummary {
    fn from_traces(policy: &ExitPolicy, traces: Vec<ExitTrace>, labels: &[usize]) -> Result<Self> {
        if traces.is_empty() {
            return Err(Error::arg("cannot evaluate a policy on an empty dataset"));
        }
        let mut histogram = vec![0; policy.t_max];
        let mut correct = 0;
        let mut t_sum = 0usize;
        for (tr, &l) in traces.iter().zip(labels) {
            histogram[tr.t_hat - 1] += 1;
            t_sum += tr.t_hat;
            correct += usize::from(tr.prediction == l);
        }
        let n = traces.len() as f64;
        Ok(Self {
            theta: policy.theta,
            t_max: policy.t_max,
            accuracy: correct as f64 / n,
            mean_t_hat: t_sum as f64 / n,
            histogram,
            traces,
        })
    }

    /// Per-sample CSV: `sample_id,label,prediction,t_hat,E_1..E_T`; entropies
    /// past `t_hat` are left empty.
    pub fn traces_csv(&self, labels: &[usize]) -> String {
        let mut out = String::from("sample_id,label,prediction,t_hat");
        for t in 1..=self.t_max {
            let _ = write!(out, ",E_{t}");
        }
        out.push('\n');
        for (i, (tr, l)) in self.traces.iter().zip(labels).enumerate() {
            let _ = write!(out, "{i},{l},{},{}", tr.prediction, tr.t_hat);
            for t in 0..self.t_max {
                match tr.entropies.get(t) {
                    Some(e) => {
                        let _ = write!(out, ",{e:.8}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Dynamic inference on every sample, one at a time.
pub fn evaluate_policy(model: &Model, data: &Dataset, policy: &ExitPolicy) -> Result<PolicySummary> {
    if data.is_empty() {
        return Err(Error::arg("cannot evaluate a policy on an empty dataset"));
    }
    let mut inst = SnnInstance::new(model);
    let traces = (0..data.len())
        .map(|i| dynamic_infer(&mut inst, &data.sample(i)?, policy))
        .collect::<Result<Vec<_>>>()?;
    PolicySummary::from_traces(policy, traces, data.labels())
}

/// Records `t_max` timesteps of every sample for later replay.
pub fn record_trajectories(model: &Model, data: &Dataset, t_max: usize) -> Result<Vec<Trajectory>> {
    let mut inst = SnnInstance::new(model);
    (0..data.len())
        .map(|i| Trajectory::record(&mut inst, &data.sample(i)?, t_max))
        .collect()
}

/// [`evaluate_policy`] computed from recorded trajectories.
pub fn replay_policy(trajectories: &[Trajectory], labels: &[usize], policy: &ExitPolicy) -> Result<PolicySummary> {
    if trajectories.len() != labels.len() {
        return Err(Error::Consistency(format!(
            "{} trajectories for {} labels",
            trajectories.len(),
            labels.len()
        )));
    }
    let traces = trajectories
        .iter()
        .map(|t| t.replay(policy))
        .collect::<Result<Vec<_>>>()?;
    PolicySummary::from_traces(policy, traces, labels)
}

/// Accuracy and mean cost of a static run of `t` timesteps.
pub fn static_point(
    trajectories: &[Trajectory],
    labels: &[usize],
    t: usize,
    cost: &CostModel,
) -> Result<(f64, DatasetCost)> {
    if trajectories.is_empty() {
        return Err(Error::arg("no trajectories"));
    }
    let mut correct = 0;
    let mut reports = Vec::with_capacity(trajectories.len());
    for (tr, &l) in trajectories.iter().zip(labels) {
        if t == 0 || t > tr.t_max() {
            return Err(Error::arg(format!("static run of {t} timesteps outside 1..={}", tr.t_max())));
        }
        correct += usize::from(super::entropy::argmax(&tr.probabilities[t - 1]) == l);
        reports.push(cost.static_run(&tr.activities[..t])?);
    }
    Ok((correct as f64 / trajectories.len() as f64, DatasetCost::from_reports(&reports)?))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub theta: f64,
    pub accuracy: f64,
    pub mean_t_hat: f64,
    pub energy: f64,
    pub latency: f64,
    pub edp: f64,
}

/// Dataset cost of the dynamic traces in `summary`.
pub fn policy_cost(summary: &PolicySummary, cost: &CostModel) -> Result<DatasetCost> {
    let reports = summary
        .traces
        .iter()
        .map(|t| cost.dynamic(&t.activities))
        .collect::<Result<Vec<_>>>()?;
    DatasetCost::from_reports(&reports)
}

/// One row per threshold, in the order given.
pub fn threshold_sweep(
    trajectories: &[Trajectory],
    labels: &[usize],
    thetas: &[f64],
    t_max: usize,
    cost: &CostModel,
) -> Result<Vec<SweepRow>> {
    if thetas.is_empty() {
        return Err(Error::arg("the threshold grid is empty"));
    }
    thetas
        .iter()
        .map(|&theta| {
            let policy = ExitPolicy::new(theta, t_max)?;
            let s = replay_policy(trajectories, labels, &policy)?;
            let c = policy_cost(&s, cost)?;
            Ok(SweepRow {
                theta,
                accuracy: s.accuracy,
                mean_t_hat: s.mean_t_hat,
                energy: c.mean_energy,
                latency: c.mean_latency,
                edp: c.edp,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("theta,accuracy,mean_t_hat,energy,latency,edp\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6e},{:.6e},{:.6e}",
            r.theta, r.accuracy, r.mean_t_hat, r.energy, r.latency, r.edp
        );
    }
    out
}

/// Ten thresholds from 0 to 0.9, inclusive.
pub fn default_theta_grid() -> Vec<f64> {
    (0..10).map(|i| i as f64 / 10.0).collect()
}
