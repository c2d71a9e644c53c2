use std::ops::{Add, AddAssign};

use serde::Serialize;

use super::arch::ArchConfig;
use super::mapping::{map_network, LayerMapping, NetworkMapping};
use crate::error::{Error, Result};
use crate::snn::NetworkSpec;

/// Energy split into the reported component groups.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Breakdown {
    pub crossbar_adc: f64,
    /// Switch matrices, shift-and-add, accumulators and LIF units.
    pub peripherals: f64,
    /// Buffers, interconnect and per-timestep control.
    pub buffers_interconnect: f64,
    pub sigma_e: f64,
}

impl Breakdown {
    pub fn total(&self) -> f64 {
        self.crossbar_adc + self.peripherals + self.buffers_interconnect + self.sigma_e
    }

    pub fn scaled(&self, k: f64) -> Breakdown {
        Breakdown {
            crossbar_adc: self.crossbar_adc * k,
            peripherals: self.peripherals * k,
            buffers_interconnect: self.buffers_interconnect * k,
            sigma_e: self.sigma_e * k,
        }
    }

    /// Fractions of the total, in field order.
    pub fn shares(&self) -> [f64; 4] {
        let t = self.total();
        [
            self.crossbar_adc / t,
            self.peripherals / t,
            self.buffers_interconnect / t,
            self.sigma_e / t,
        ]
    }
}

impl Add for Breakdown {
    type Output = Breakdown;

    fn add(mut self, rhs: Breakdown) -> Breakdown {
        self += rhs;
        self
    }
}

impl AddAssign for Breakdown {
    fn add_assign(&mut self, rhs: Breakdown) {
        self.crossbar_adc += rhs.crossbar_adc;
        self.peripherals += rhs.peripherals;
        self.buffers_interconnect += rhs.buffers_interconnect;
        self.sigma_e += rhs.sigma_e;
    }
}

fn layer_energy(l: &LayerMapping, activity: f64, timestep: usize, arch: &ArchConfig) -> Breakdown {
    let e = &arch.energy;
    let lif = e.lif * l.lif_neurons as f64;
    if l.encoding {
        if timestep > 1 && arch.reuse_encoding_layer {
            // the buffered pre-activations are read back instead of recomputed
            return Breakdown {
                peripherals: lif,
                buffers_interconnect: e.buffer * l.positions as f64,
                ..Default::default()
            };
        }
        let bits = arch.input_bits as f64 * e.bit_plane;
        let rows = l.dense_row_activations as f64 * bits;
        let reads = l.crossbar_reads() * bits;
        let conv = l.adc_conversions() * bits;
        return Breakdown {
            crossbar_adc: e.crossbar_read * reads + e.mac * rows * l.cols_needed as f64 + e.adc * conv,
            peripherals: e.switch * rows + e.shift_add * conv + lif,
            buffers_interconnect: e.buffer * reads + e.interconnect * l.input_elements as f64,
            sigma_e: 0.0,
        };
    }
    let rows = activity * l.dense_row_activations as f64 / l.input_elements as f64;
    let reads = l.crossbar_reads();
    let conv = l.adc_conversions();
    Breakdown {
        crossbar_adc: e.crossbar_read * reads + e.mac * rows * l.cols_needed as f64 + e.adc * conv,
        peripherals: e.switch * rows + e.shift_add * conv + lif,
        buffers_interconnect: e.buffer * reads + e.interconnect * activity,
        sigma_e: 0.0,
    }
}

/// Energy of one timestep (1-based `timestep`) given the nonzero inputs
/// presented to each mapped layer.
pub fn energy_per_timestep(
    mapping: &NetworkMapping,
    activity: &[f64],
    timestep: usize,
    arch: &ArchConfig,
) -> Result<Breakdown> {
    if activity.len() != mapping.layers.len() {
        return Err(Error::arg(format!(
            "activity has {} entries for {} mapped layers",
            activity.len(),
            mapping.layers.len()
        )));
    }
    if timestep == 0 {
        return Err(Error::arg("timesteps are numbered from 1"));
    }
    let mut total = Breakdown {
        buffers_interconnect: arch.energy.control,
        ..Default::default()
    };
    for (l, &a) in mapping.layers.iter().zip(activity) {
        if !(a >= 0.0) {
            return Err(Error::arg(format!("activity {a} is negative")));
        }
        total += layer_energy(l, a, timestep, arch);
    }
    Ok(total)
}

/// Timesteps run back to back without pipelining.
pub fn latency(timesteps: usize, arch: &ArchConfig) -> f64 {
    timesteps as f64 * arch.latency_per_timestep
}

/// Energy of `invocations` exit-module evaluations.
pub fn sigma_e_energy(e_one_timestep: f64, invocations: usize, ratio: f64) -> f64 {
    invocations as f64 * ratio * e_one_timestep
}

pub fn edp(energy: f64, latency: f64) -> f64 {
    energy * latency
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostReport {
    pub timesteps_used: usize,
    pub step_energies: Vec<f64>,
    /// Summed over the executed timesteps, including the exit module.
    pub breakdown: Breakdown,
    pub sigma_e_energy: f64,
    pub energy: f64,
    pub latency: f64,
    pub edp: f64,
}

/// Ratios of a report to a baseline report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormalizedCost {
    pub energy: f64,
    pub latency: f64,
    pub edp: f64,
}

impl CostReport {
    pub fn normalized(&self, baseline: &CostReport) -> NormalizedCost {
        NormalizedCost {
            energy: self.energy / baseline.energy,
            latency: self.latency / baseline.latency,
            edp: self.edp / baseline.edp,
        }
    }
}

/// Prices one inference from its per-timestep activity log.
/// `exit_invocations` is the number of exit-module evaluations (one per
/// executed timestep for dynamic inference, zero for a static run).
pub fn cost_of_inference(
    mapping: &NetworkMapping,
    activities: &[Vec<f64>],
    exit_invocations: usize,
    arch: &ArchConfig,
) -> Result<CostReport> {
    if activities.is_empty() {
        return Err(Error::arg("missing activity log: at least one timestep is required"));
    }
    let mut breakdown = Breakdown::default();
    let mut step_energies = Vec::with_capacity(activities.len());
    for (t, a) in activities.iter().enumerate() {
        let b = energy_per_timestep(mapping, a, t + 1, arch)?;
        step_energies.push(b.total());
        breakdown += b;
    }
    let sigma = sigma_e_energy(step_energies[0], exit_invocations, arch.sigma_e_ratio);
    breakdown.sigma_e = sigma;
    let energy = step_energies.iter().sum::<f64>() + sigma;
    let latency = latency(activities.len(), arch);
    Ok(CostReport {
        timesteps_used: activities.len(),
        step_energies,
        breakdown,
        sigma_e_energy: sigma,
        energy,
        latency,
        edp: edp(energy, latency),
    })
}

/// Mean cost over a set of inferences. The dataset EDP is the product of
/// the mean energy and the mean latency.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetCost {
    pub samples: usize,
    pub mean_timesteps: f64,
    pub mean_energy: f64,
    pub mean_latency: f64,
    pub edp: f64,
    pub mean_breakdown: Breakdown,
}

impl DatasetCost {
    pub fn from_reports(reports: &[CostReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::arg("no reports to summarize"));
        }
        let n = reports.len() as f64;
        let mut b = Breakdown::default();
        for r in reports {
            b += r.breakdown;
        }
        let mean_energy = reports.iter().map(|r| r.energy).sum::<f64>() / n;
        let mean_latency = reports.iter().map(|r| r.latency).sum::<f64>() / n;
        Ok(Self {
            samples: reports.len(),
            mean_timesteps: reports.iter().map(|r| r.timesteps_used as f64).sum::<f64>() / n,
            mean_energy,
            mean_latency,
            edp: edp(mean_energy, mean_latency),
            mean_breakdown: b.scaled(1.0 / n),
        })
    }

    pub fn normalized(&self, baseline: &DatasetCost) -> NormalizedCost {
        NormalizedCost {
            energy: self.mean_energy / baseline.mean_energy,
            latency: self.mean_latency / baseline.mean_latency,
            edp: self.edp / baseline.edp,
        }
    }
}

/// A network mapped onto one chip configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct CostModel {
    pub arch: ArchConfig,
    pub mapping: NetworkMapping,
}

impl CostModel {
    pub fn new(spec: &NetworkSpec, arch: ArchConfig) -> Result<Self> {
        let mapping = map_network(spec, &arch)?;
        Ok(Self { arch, mapping })
    }

    pub fn step(&self, activity: &[f64], timestep: usize) -> Result<Breakdown> {
        energy_per_timestep(&self.mapping, activity, timestep, &self.arch)
    }

    pub fn dynamic(&self, activities: &[Vec<f64>]) -> Result<CostReport> {
        cost_of_inference(&self.mapping, activities, activities.len(), &self.arch)
    }

    pub fn static_run(&self, activities: &[Vec<f64>]) -> Result<CostReport> {
        cost_of_inference(&self.mapping, activities, 0, &self.arch)
    }
}
