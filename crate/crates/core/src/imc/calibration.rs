//! Fitting the default energy coefficients to published component shares
//! and timestep scaling.

use std::fmt::Write as _;

use super::arch::{ArchConfig, EnergyCoefficients};
use super::energy::{energy_per_timestep, Breakdown};
use super::mapping::NetworkMapping;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::snn::{Model, SnnInstance};

/// Relative per-event weights before group scaling.
pub const BASE_COEFFICIENTS: EnergyCoefficients = EnergyCoefficients {
    crossbar_read: 1.0,
    mac: 0.01,
    adc: 0.5,
    switch: 0.05,
    shift_add: 0.1,
    lif: 0.2,
    buffer: 0.5,
    interconnect: 0.1,
    control: 0.0,
    bit_plane: 1.0,
};

/// Output of `examples/calibrate.rs` on the shipped reference trace.
pub const DEFAULT_COEFFICIENTS: EnergyCoefficients = EnergyCoefficients {
    crossbar_read: 4.342991162390603e-6,
    mac: 4.342991162390603e-8,
    adc: 2.1714955811953015e-6,
    switch: 1.1879431407425585e-6,
    shift_add: 2.375886281485117e-6,
    lif: 4.751772562970234e-6,
    buffer: 4.477169026943064e-5,
    interconnect: 8.954338053886128e-6,
    control: 0.0,
    bit_plane: 0.23202930669341065,
};

const REFERENCE_CSV: &str = include_str!("../../assets/reference_activity.csv");

/// Mean nonzero inputs per mapped layer at each timestep of a static run.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivityTrace {
    pub steps: Vec<Vec<f64>>,
}

impl ActivityTrace {
    /// The trace the default coefficients were fitted on: the desk network
    /// run for 8 timesteps, averaged over test images.
    pub fn reference() -> ActivityTrace {
        Self::parse_csv(REFERENCE_CSV).expect("shipped reference trace parses")
    }

    pub fn parse_csv(text: &str) -> Result<ActivityTrace> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Consistency("empty activity trace".into()))?;
        let width = header.split(',').count();
        if width < 2 || !header.starts_with("timestep") {
            return Err(Error::Consistency(format!("bad activity trace header {header:?}")));
        }
        let mut steps = Vec::new();
        for (i, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != width {
                return Err(Error::Consistency(format!("trace row {} has {} cells, expected {width}", i + 1, cells.len())));
            }
            if cells[0] != (i + 1).to_string() {
                return Err(Error::Consistency(format!("trace row {} is labeled timestep {}", i + 1, cells[0])));
            }
            let row = cells[1..]
                .iter()
                .map(|c| c.parse::<f64>().map_err(|e| Error::Consistency(format!("bad trace value {c:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            steps.push(row);
        }
        if steps.is_empty() {
            return Err(Error::Consistency("activity trace has no rows".into()));
        }
        Ok(ActivityTrace { steps })
    }

    /// Mean activity of `model` over `data` for `t_steps` timesteps. The
    /// network may be run past its trained `t_max`.
    pub fn record(model: &Model, data: &Dataset, t_steps: usize, batch_size: usize) -> Result<ActivityTrace> {
        if t_steps == 0 || data.is_empty() {
            return Err(Error::arg("a trace needs at least one timestep and one sample"));
        }
        let (mut spec, params) = model.clone().into_parts();
        spec.t_max = spec.t_max.max(t_steps);
        let model = Model::from_parts(spec, params)?;
        let layers = model.spec().weighted_layers()?.len();
        let mut steps = vec![vec![0.0; layers]; t_steps];
        let mut inst = SnnInstance::new(&model);
        let mut start = 0;
        while start < data.len() {
            let count = batch_size.max(1).min(data.len() - start);
            let x = data.images().slice_batch(start, count)?;
            inst.reset();
            for row in steps.iter_mut() {
                inst.forward_timestep(&x)?;
                for (acc, a) in row.iter_mut().zip(inst.last_activity()) {
                    *acc += a;
                }
            }
            start += count;
        }
        let n = data.len() as f64;
        steps.iter_mut().flatten().for_each(|v| *v /= n);
        Ok(ActivityTrace { steps })
    }

    pub fn to_csv(&self) -> String {
        let layers = self.steps.first().map_or(0, Vec::len);
        let mut out = String::from("timestep");
        for l in 0..layers {
            let _ = write!(out, ",layer_{l}");
        }
        out.push('\n');
        for (t, row) in self.steps.iter().enumerate() {
            let _ = write!(out, "{}", t + 1);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Anchors the fit aims for.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationTargets {
    /// Timesteps at which the component shares are measured.
    pub share_timesteps: usize,
    pub crossbar_adc_share: f64,
    pub peripherals_share: f64,
    /// `energy(ratio_timesteps) / energy(1)`.
    pub energy_ratio: f64,
    pub ratio_timesteps: usize,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        Self {
            share_timesteps: 4,
            crossbar_adc_share: 0.25,
            peripherals_share: 0.45,
            energy_ratio: 4.9,
            ratio_timesteps: 8,
        }
    }
}

/// Static-run energy breakdown over the first `t` timesteps of `trace`.
pub fn static_breakdown(mapping: &NetworkMapping, trace: &ActivityTrace, t: usize, arch: &ArchConfig) -> Result<Breakdown> {
    if t == 0 || t > trace.steps.len() {
        return Err(Error::arg(format!("trace covers {} timesteps, asked for {t}", trace.steps.len())));
    }
    let mut b = Breakdown::default();
    for (i, a) in trace.steps[..t].iter().enumerate() {
        b += energy_per_timestep(mapping, a, i + 1, arch)?;
    }
    Ok(b)
}

/// Scales the three component groups of `base` so the static run of
/// `trace` meets the share targets with the `share_timesteps` energy
/// normalized to 1, and bisects the encoding bit-plane weight until the
/// energy ratio target is met. `base.control` is kept as given.
pub fn calibrate(
    base: &EnergyCoefficients,
    mapping: &NetworkMapping,
    trace: &ActivityTrace,
    arch: &ArchConfig,
    targets: &CalibrationTargets,
) -> Result<EnergyCoefficients> {
    let rest_share = 1.0 - targets.crossbar_adc_share - targets.peripherals_share;
    if !(targets.crossbar_adc_share > 0.0 && targets.peripherals_share > 0.0 && rest_share > 0.0) {
        return Err(Error::Consistency("share targets must be positive and sum below 1".into()));
    }
    // group-scaled coefficients and the resulting energy ratio for one bit-plane weight
    let fit = |bit_plane: f64| -> Result<(EnergyCoefficients, f64)> {
        let mut a = arch.clone();
        a.energy = EnergyCoefficients { bit_plane, ..base.clone() };
        let bs = static_breakdown(mapping, trace, targets.share_timesteps, &a)?;
        let control = base.control * targets.share_timesteps as f64;
        if bs.crossbar_adc <= 0.0 || bs.peripherals <= 0.0 || bs.buffers_interconnect <= control {
            return Err(Error::Consistency("a component group has no energy to scale".into()));
        }
        let sx = targets.crossbar_adc_share / bs.crossbar_adc;
        let sp = targets.peripherals_share / bs.peripherals;
        let sb = rest_share / (bs.buffers_interconnect - control);
        let b = base;
        a.energy = EnergyCoefficients {
            crossbar_read: b.crossbar_read * sx,
            mac: b.mac * sx,
            adc: b.adc * sx,
            switch: b.switch * sp,
            shift_add: b.shift_add * sp,
            lif: b.lif * sp,
            buffer: b.buffer * sb,
            interconnect: b.interconnect * sb,
            control: b.control * sb,
            bit_plane,
        };
        let e1 = static_breakdown(mapping, trace, 1, &a)?.total();
        let er = static_breakdown(mapping, trace, targets.ratio_timesteps, &a)?.total();
        Ok((a.energy, er / e1))
    };
    // the ratio falls as the one-off encoding pass gets heavier
    let k = targets.energy_ratio;
    let (mut lo, mut hi) = (0.0, 1.0);
    if fit(lo)?.1 < k {
        return Err(Error::Consistency(format!(
            "targets are unreachable with this trace: even a free encoding pass gives a ratio of {:.3} < {k}",
            fit(lo)?.1
        )));
    }
    while fit(hi)?.1 > k {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::Consistency("energy ratio target is below what the trace can reach".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if fit(mid)?.1 > k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(fit(0.5 * (lo + hi))?.0)
}
