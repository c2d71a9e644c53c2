use serde::Serialize;

use super::arch::ArchConfig;
use crate::error::{Error, Result};
use crate::snn::{NetworkSpec, WeightedLayer};

/// Crossbar allocation of one weighted layer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerMapping {
    pub layer_index: usize,
    pub fan_in: usize,
    pub fan_out: usize,
    pub bit_slices: usize,
    /// Crossbar rows the unrolled weight matrix needs (`fan_in`).
    pub rows_needed: usize,
    /// Crossbar columns the sliced weight matrix needs (`fan_out * slices`).
    pub cols_needed: usize,
    pub row_blocks: usize,
    pub col_blocks: usize,
    pub crossbar_count: usize,
    pub pe_count: usize,
    pub tile_count: usize,
    pub positions: usize,
    pub input_elements: usize,
    pub dense_row_activations: usize,
    pub lif_neurons: usize,
    pub encoding: bool,
}

impl LayerMapping {
    /// Crossbar reads in one timestep: every crossbar fires once per
    /// output position.
    pub fn crossbar_reads(&self) -> f64 {
        (self.positions * self.crossbar_count) as f64
    }

    /// ADC conversions in one timestep.
    pub fn adc_conversions(&self) -> f64 {
        (self.positions * self.row_blocks * self.cols_needed) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetworkMapping {
    pub layers: Vec<LayerMapping>,
}

impl NetworkMapping {
    pub fn crossbars(&self) -> usize {
        self.layers.iter().map(|l| l.crossbar_count).sum()
    }

    pub fn tiles(&self) -> usize {
        self.layers.iter().map(|l| l.tile_count).sum()
    }
}

/// Maps a `fan_in x fan_out` weight matrix onto square crossbars, slicing
/// each weight across `weight_bits / device_bits` adjacent columns.
pub fn map_layer(fan_in: usize, fan_out: usize, arch: &ArchConfig) -> Result<LayerMapping> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::arg(format!("cannot map a {fan_in}x{fan_out} layer")));
    }
    let slices = arch.bit_slices();
    let x = arch.crossbar_size;
    let cols = fan_out * slices;
    let row_blocks = fan_in.div_ceil(x);
    let col_blocks = cols.div_ceil(x);
    let crossbars = row_blocks * col_blocks;
    Ok(LayerMapping {
        layer_index: 0,
        fan_in,
        fan_out,
        bit_slices: slices,
        rows_needed: fan_in,
        cols_needed: cols,
        row_blocks,
        col_blocks,
        crossbar_count: crossbars,
        pe_count: crossbars.div_ceil(arch.crossbars_per_pe),
        tile_count: crossbars.div_ceil(arch.crossbars_per_tile),
        positions: 1,
        input_elements: fan_in,
        dense_row_activations: fan_in,
        lif_neurons: 0,
        encoding: false,
    })
}

fn map_weighted(w: &WeightedLayer, arch: &ArchConfig) -> Result<LayerMapping> {
    let base = map_layer(w.fan_in, w.fan_out, arch)?;
    Ok(LayerMapping {
        layer_index: w.layer_index,
        positions: w.positions,
        input_elements: w.input_elements,
        dense_row_activations: w.dense_row_activations,
        lif_neurons: w.lif_neurons,
        encoding: w.encoding,
        ..base
    })
}

/// Maps every conv, fc and classifier layer; convolutions use the
/// im2col view (`fan_in = C_in * k * k`, `fan_out = C_out`).
pub fn map_network(spec: &NetworkSpec, arch: &ArchConfig) -> Result<NetworkMapping> {
    arch.validate()?;
    let layers = spec
        .weighted_layers()?
        .iter()
        .map(|w| map_weighted(w, arch))
        .collect::<Result<Vec<_>>>()?;
    Ok(NetworkMapping { layers })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        let arch = ArchConfig::default();
        let m = map_layer(128, 10, &arch).unwrap();
        assert_eq!((m.bit_slices, m.row_blocks, m.col_blocks, m.crossbar_count, m.tile_count), (2, 2, 1, 2, 1));
        assert_eq!(map_layer(64, 32, &arch).unwrap().crossbar_count, 1);
        let conv = map_layer(27, 16, &arch).unwrap();
        assert_eq!(conv.crossbar_count, 1);
    }

    #[test]
    fn zero_size_is_rejected() {
        assert!(map_layer(0, 4, &ArchConfig::default()).is_err());
    }

    #[test]
    fn desk_network_maps() {
        let m = map_network(&NetworkSpec::desk_mnist(), &ArchConfig::default()).unwrap();
        assert_eq!(m.layers.len(), 4);
        assert!(m.layers[0].encoding);
        assert_eq!(m.layers[3].row_blocks, (16 * 49usize).div_ceil(64));
    }
}
