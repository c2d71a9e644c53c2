use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-event energies in normalized units, grouped as the breakdown reports
/// them. Defaults come from the calibration against the shipped reference
/// activity trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyCoefficients {
    /// One activation of a whole crossbar (word lines and bit lines).
    pub crossbar_read: f64,
    /// One active row driving one column.
    pub mac: f64,
    /// One ADC conversion.
    pub adc: f64,
    /// Input switch matrix, per active row.
    pub switch: f64,
    /// Shift-and-add plus accumulation, per ADC conversion.
    pub shift_add: f64,
    /// One LIF neuron update.
    pub lif: f64,
    /// Buffer access per crossbar read.
    pub buffer: f64,
    /// Moving one nonzero input element over the interconnect.
    pub interconnect: f64,
    /// Control and clocking, once per timestep.
    pub control: f64,
    /// Weight of one input bit-plane pass through the encoding layer,
    /// relative to an ordinary spike-driven pass.
    pub bit_plane: f64,
}

impl Default for EnergyCoefficients {
    fn default() -> Self {
        super::calibration::DEFAULT_COEFFICIENTS
    }
}

impl EnergyCoefficients {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("crossbar_read", self.crossbar_read),
            ("mac", self.mac),
            ("adc", self.adc),
            ("switch", self.switch),
            ("shift_add", self.shift_add),
            ("lif", self.lif),
            ("buffer", self.buffer),
            ("interconnect", self.interconnect),
            ("control", self.control),
            ("bit_plane", self.bit_plane),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("hardware.energy.{name} = {v} violates coefficient >= 0")));
            }
        }
        Ok(())
    }
}

/// Tiled IMC chip parameters. Electrical and buffer fields are carried for
/// reporting; the cost model uses the geometry, precision and energy terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub technology_nm: u32,
    pub crossbar_size: usize,
    pub crossbars_per_tile: usize,
    pub crossbars_per_pe: usize,
    pub device_bits: u32,
    pub weight_bits: u32,
    pub sigma_over_mu: f64,
    pub r_on_ohms: f64,
    pub r_off_ratio: f64,
    pub v_dd: f64,
    pub v_read: f64,
    pub global_buffer_bytes: usize,
    pub tile_buffer_bytes: usize,
    pub pe_buffer_bytes: usize,
    pub sigma_lut_bytes: usize,
    pub entropy_lut_bytes: usize,
    /// Crossbar columns sharing one ADC through a multiplexer.
    pub adc_mux_columns: usize,
    /// Bit-serial precision of the analog input fed to the first layer.
    pub input_bits: u32,
    /// The first layer sees the same input every timestep; when set its
    /// output is computed once and buffered.
    pub reuse_encoding_layer: bool,
    pub latency_per_timestep: f64,
    /// Energy of one exit-module invocation relative to one timestep.
    pub sigma_e_ratio: f64,
    pub energy: EnergyCoefficients,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            technology_nm: 32,
            crossbar_size: 64,
            crossbars_per_tile: 64,
            crossbars_per_pe: 16,
            device_bits: 4,
            weight_bits: 8,
            sigma_over_mu: 0.2,
            r_on_ohms: 20e3,
            r_off_ratio: 10.0,
            v_dd: 0.9,
            v_read: 0.1,
            global_buffer_bytes: 20 * 1024,
            tile_buffer_bytes: 10 * 1024,
            pe_buffer_bytes: 5 * 1024,
            sigma_lut_bytes: 3 * 1024,
            entropy_lut_bytes: 3 * 1024,
            adc_mux_columns: 8,
            input_bits: 8,
            reuse_encoding_layer: true,
            latency_per_timestep: 1.0,
            sigma_e_ratio: 2e-5,
            energy: EnergyCoefficients::default(),
        }
    }
}

impl ArchConfig {
    pub fn bit_slices(&self) -> usize {
        (self.weight_bits / self.device_bits) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("hardware: {m}")));
        let sizes = [
            ("crossbar_size", self.crossbar_size),
            ("crossbars_per_tile", self.crossbars_per_tile),
            ("crossbars_per_pe", self.crossbars_per_pe),
            ("global_buffer_bytes", self.global_buffer_bytes),
            ("tile_buffer_bytes", self.tile_buffer_bytes),
            ("pe_buffer_bytes", self.pe_buffer_bytes),
            ("sigma_lut_bytes", self.sigma_lut_bytes),
            ("entropy_lut_bytes", self.entropy_lut_bytes),
            ("adc_mux_columns", self.adc_mux_columns),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return fail(format!("{name} = 0 violates all sizes positive"));
            }
        }
        if self.device_bits == 0 || self.weight_bits == 0 || self.input_bits == 0 || self.technology_nm == 0 {
            return fail("bit widths and technology node must be positive".into());
        }
        if self.weight_bits % self.device_bits != 0 {
            return fail(format!(
                "weight_bits = {} is not divisible by device_bits = {}",
                self.weight_bits, self.device_bits
            ));
        }
        if self.crossbars_per_pe > self.crossbars_per_tile {
            return fail("crossbars_per_pe must not exceed crossbars_per_tile".into());
        }
        let positive = [
            ("r_on_ohms", self.r_on_ohms),
            ("r_off_ratio", self.r_off_ratio),
            ("v_dd", self.v_dd),
            ("v_read", self.v_read),
            ("latency_per_timestep", self.latency_per_timestep),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} = {v} violates {name} > 0"));
            }
        }
        if !(self.sigma_over_mu >= 0.0 && self.sigma_over_mu.is_finite()) {
            return fail(format!("sigma_over_mu = {} violates sigma_over_mu >= 0", self.sigma_over_mu));
        }
        if !(self.sigma_e_ratio >= 0.0 && self.sigma_e_ratio.is_finite()) {
            return fail(format!("sigma_e_ratio = {} violates sigma_e_ratio >= 0", self.sigma_e_ratio));
        }
        self.energy.validate()
    }
}
