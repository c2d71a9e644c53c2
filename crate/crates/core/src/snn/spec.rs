use serde::{Deserialize, Serialize};

use super::lif::LifConfig;
use crate::error::{Error, Result};
use crate::numerics::{tap_count, ConvParams};

fn one() -> usize {
    1
}

/// One layer of a feed-forward spiking network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    Fc {
        in_features: usize,
        out_features: usize,
    },
    Norm,
    Lif,
    Pool {
        window: usize,
    },
    Classifier {
        in_features: usize,
        num_classes: usize,
    },
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, padding: usize) -> Self {
        LayerSpec::Conv {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            padding,
        }
    }

    pub fn conv_params(&self) -> Option<ConvParams> {
        match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => Some(ConvParams::square(in_channels, out_channels, kernel, stride, padding)),
            _ => None,
        }
    }

    /// Conv, fc and classifier layers hold crossbar-mapped weights.
    pub fn is_weighted(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Fc { .. } | LayerSpec::Classifier { .. })
    }

    fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Fc { .. } => "fc",
            LayerSpec::Norm => "norm",
            LayerSpec::Lif => "lif",
            LayerSpec::Pool { .. } => "pool",
            LayerSpec::Classifier { .. } => "classifier",
        }
    }
}

/// Geometry of a weighted layer, as seen by the crossbar mapper.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedLayer {
    pub layer_index: usize,
    pub fan_in: usize,
    pub fan_out: usize,
    /// Output positions evaluated per timestep (1 for fc layers).
    pub positions: usize,
    /// Input elements of one sample.
    pub input_elements: usize,
    /// Crossbar row activations caused by one fully dense input sample.
    pub dense_row_activations: usize,
    /// LIF neurons fed by this layer (0 for the classifier).
    pub lif_neurons: usize,
    /// The first layer, which sees the analog input.
    pub encoding: bool,
}

/// Architecture of a feed-forward SNN with direct input encoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    /// `(C, H, W)` of one input sample.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
    pub t_max: usize,
    #[serde(default)]
    pub lif: LifConfig,
}

impl NetworkSpec {
    /// Three conv blocks (conv, norm, LIF, with 2x2 pooling after the first
    /// two) followed by a linear classifier.
    pub fn conv3(input_shape: [usize; 3], channels: [usize; 3], num_classes: usize, t_max: usize) -> Self {
        let [c, h, w] = input_shape;
        let mut layers = Vec::new();
        let mut in_c = c;
        for (i, &out_c) in channels.iter().enumerate() {
            layers.push(LayerSpec::conv(in_c, out_c, 3, 1));
            layers.push(LayerSpec::Norm);
            layers.push(LayerSpec::Lif);
            if i < 2 {
                layers.push(LayerSpec::Pool { window: 2 });
            }
            in_c = out_c;
        }
        layers.push(LayerSpec::Classifier {
            in_features: channels[2] * (h / 4) * (w / 4),
            num_classes,
        });
        Self {
            input_shape: input_shape.to_vec(),
            layers,
            num_classes,
            t_max,
            lif: LifConfig::default(),
        }
    }

    /// The default 28x28 single-channel, 10-class network.
    pub fn desk_mnist() -> Self {
        Self::conv3([1, 28, 28], [8, 16, 16], 10, 4)
    }

    /// Per-sample output shape of every layer.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.len() != 3 || self.input_shape.contains(&0) {
            return Err(Error::Config(format!(
                "input_shape must be a non-empty (C, H, W), got {:?}",
                self.input_shape
            )));
        }
        let mut cur = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let ctx = |msg: String| Error::Config(format!("layer {i} ({}): {msg}", layer.name()));
            cur = match *layer {
                LayerSpec::Conv { .. } => {
                    let p = layer.conv_params().expect("conv");
                    if cur.len() != 3 {
                        return Err(ctx(format!("expects a (C, H, W) input, got {cur:?}")));
                    }
                    if cur[0] != p.in_channels {
                        return Err(ctx(format!("in_channels = {} but the incoming shape is {cur:?}", p.in_channels)));
                    }
                    let (oh, ow) = p.output_hw(cur[1], cur[2]).map_err(|e| ctx(e.to_string()))?;
                    vec![p.out_channels, oh, ow]
                }
                LayerSpec::Fc { in_features, out_features } => {
                    let flat: usize = cur.iter().product();
                    if flat != in_features || out_features == 0 {
                        return Err(ctx(format!("in_features = {in_features} but the incoming shape {cur:?} flattens to {flat}")));
                    }
                    vec![out_features]
                }
                LayerSpec::Classifier { in_features, num_classes } => {
                    let flat: usize = cur.iter().product();
                    if flat != in_features {
                        return Err(ctx(format!("in_features = {in_features} but the incoming shape {cur:?} flattens to {flat}")));
                    }
                    vec![num_classes]
                }
                LayerSpec::Norm | LayerSpec::Lif => cur,
                LayerSpec::Pool { window } => {
                    if cur.len() != 3 || window == 0 || cur[1] % window != 0 || cur[2] % window != 0 {
                        return Err(ctx(format!("window {window} does not tile the incoming shape {cur:?}")));
                    }
                    vec![cur[0], cur[1] / window, cur[2] / window]
                }
            };
            out.push(cur.clone());
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.lif.validate()?;
        if self.t_max == 0 {
            return Err(Error::Config("t_max must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be >= 2".into()));
        }
        let classifiers = self
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Classifier { .. }))
            .count();
        match self.layers.last() {
            Some(LayerSpec::Classifier { num_classes, .. }) if classifiers == 1 => {
                if *num_classes != self.num_classes {
                    return Err(Error::Config(format!(
                        "classifier emits {num_classes} classes but num_classes = {}",
                        self.num_classes
                    )));
                }
            }
            _ => return Err(Error::Config("the network needs exactly one classifier layer, placed last".into())),
        }
        // direct encoding: weighted layer, optional norm, then LIF
        let encoder_ok = match self.layers.as_slice() {
            [LayerSpec::Conv { .. } | LayerSpec::Fc { .. }, LayerSpec::Lif, ..] => true,
            [LayerSpec::Conv { .. } | LayerSpec::Fc { .. }, LayerSpec::Norm, LayerSpec::Lif, ..] => true,
            _ => false,
        };
        if !encoder_ok {
            return Err(Error::Config(
                "the first block must be conv|fc, optional norm, then lif (direct encoding)".into(),
            ));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if matches!(pair[1], LayerSpec::Norm) && !matches!(pair[0], LayerSpec::Conv { .. } | LayerSpec::Fc { .. }) {
                return Err(Error::Config(format!("layer {}: norm must directly follow a conv or fc layer", i + 1)));
            }
        }
        self.shapes()?;
        Ok(())
    }

    /// Flattened per-sample input size.
    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn weighted_layers(&self) -> Result<Vec<WeightedLayer>> {
        let shapes = self.shapes()?;
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if !layer.is_weighted() {
                continue;
            }
            let input_shape: &[usize] = if i == 0 { &self.input_shape } else { &shapes[i - 1] };
            let input_elements: usize = input_shape.iter().product();
            let output_elements: usize = shapes[i].iter().product();
            let feeds_lif = self.layers[i + 1..]
                .iter()
                .take_while(|l| matches!(l, LayerSpec::Norm | LayerSpec::Lif))
                .any(|l| matches!(l, LayerSpec::Lif));
            let (fan_in, fan_out, positions, dense) = match layer {
                LayerSpec::Conv { .. } => {
                    let p = layer.conv_params().expect("conv");
                    let positions = shapes[i][1] * shapes[i][2];
                    let taps = tap_count(&p, input_shape[1], input_shape[2])?;
                    (p.patch_len(), p.out_channels, positions, taps)
                }
                LayerSpec::Fc { in_features, out_features } => (*in_features, *out_features, 1, *in_features),
                LayerSpec::Classifier { in_features, num_classes } => (*in_features, *num_classes, 1, *in_features),
                _ => unreachable!(),
            };
            out.push(WeightedLayer {
                layer_index: i,
                fan_in,
                fan_out,
                positions,
                input_elements,
                dense_row_activations: dense,
                lif_neurons: if feeds_lif { output_elements } else { 0 },
                encoding: i == 0,
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_network_is_valid() {
        let spec = NetworkSpec::desk_mnist();
        spec.validate().unwrap();
        let shapes = spec.shapes().unwrap();
        assert_eq!(shapes.last().unwrap(), &vec![10]);
        let wl = spec.weighted_layers().unwrap();
        assert_eq!(wl.len(), 4);
        assert!(wl[0].encoding);
        assert_eq!(wl[0].fan_in, 9);
        assert_eq!(wl[0].positions, 784);
        assert_eq!(wl[3].lif_neurons, 0);
        assert_eq!(wl[1].lif_neurons, 16 * 14 * 14);
    }

    #[test]
    fn rejects_misplaced_classifier() {
        let mut spec = NetworkSpec::desk_mnist();
        spec.layers.swap(0, 11);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut spec = NetworkSpec::desk_mnist();
        spec.layers[4] = LayerSpec::conv(4, 16, 3, 1);
        let err = spec.validate().unwrap_err().to_string();
        assert!(err.contains("in_channels"), "{err}");
    }

    #[test]
    fn requires_direct_encoding_block() {
        let spec = NetworkSpec {
            input_shape: vec![1, 4, 4],
            layers: vec![
                LayerSpec::Pool { window: 2 },
                LayerSpec::Classifier { in_features: 4, num_classes: 2 },
            ],
            num_classes: 2,
            t_max: 2,
            lif: LifConfig::default(),
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn serde_round_trip() {
        let spec = NetworkSpec::desk_mnist();
        let text = serde_json::to_string(&spec).unwrap();
        let back: NetworkSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }
}
