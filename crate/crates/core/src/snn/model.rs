use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{LayerSpec, NetworkSpec};
use crate::error::{Error, Result};
use crate::numerics::{NormParams, Tensor};

/// Trainable state of one layer.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    Conv { weight: Tensor },
    Fc { weight: Tensor, bias: Tensor },
    Norm(NormParams),
    Classifier { weight: Tensor, bias: Tensor },
    Stateless,
}

impl LayerParams {
    /// Crossbar-mapped weight matrix, if any.
    pub fn weight(&self) -> Option<&Tensor> {
        match self {
            LayerParams::Conv { weight } | LayerParams::Fc { weight, .. } | LayerParams::Classifier { weight, .. } => {
                Some(weight)
            }
            _ => None,
        }
    }

    pub fn weight_mut(&mut self) -> Option<&mut Tensor> {
        match self {
            LayerParams::Conv { weight } | LayerParams::Fc { weight, .. } | LayerParams::Classifier { weight, .. } => {
                Some(weight)
            }
            _ => None,
        }
    }
}

/// A network architecture together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: NetworkSpec,
    params: Vec<LayerParams>,
}

fn uniform(shape: &[usize], bound: f32, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-bound..=bound))
}

impl Model {
    /// Uniform `+-1/sqrt(fan_in)` initialization, deterministic under `seed`.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(spec.layers.len());
        for (i, layer) in spec.layers.iter().enumerate() {
            let p = match *layer {
                LayerSpec::Conv { .. } => {
                    let cp = layer.conv_params().expect("conv");
                    let bound = 1.0 / (cp.patch_len() as f32).sqrt();
                    LayerParams::Conv {
                        weight: uniform(&[cp.out_channels, cp.in_channels, cp.kernel_h, cp.kernel_w], bound, &mut rng),
                    }
                }
                LayerSpec::Fc { in_features, out_features } => {
                    let bound = 1.0 / (in_features as f32).sqrt();
                    LayerParams::Fc {
                        weight: uniform(&[out_features, in_features], bound, &mut rng),
                        bias: uniform(&[out_features], bound, &mut rng),
                    }
                }
                LayerSpec::Classifier { in_features, num_classes } => {
                    let bound = 1.0 / (in_features as f32).sqrt();
                    LayerParams::Classifier {
                        weight: uniform(&[num_classes, in_features], bound, &mut rng),
                        bias: uniform(&[num_classes], bound, &mut rng),
                    }
                }
                LayerSpec::Norm => LayerParams::Norm(NormParams::new(shapes[i][0])),
                LayerSpec::Lif | LayerSpec::Pool { .. } => LayerParams::Stateless,
            };
            params.push(p);
        }
        Ok(Self { spec, params })
    }

    /// Every weight and bias zero; norm layers at their identity defaults.
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        let mut m = Self::init(spec, 0)?;
        for p in &mut m.params {
            match p {
                LayerParams::Conv { weight } => weight.fill(0.0),
                LayerParams::Fc { weight, bias } | LayerParams::Classifier { weight, bias } => {
                    weight.fill(0.0);
                    bias.fill(0.0);
                }
                _ => {}
            }
        }
        Ok(m)
    }

    /// Assembles a model from stored parameters, checking every shape.
    pub fn from_parts(spec: NetworkSpec, params: Vec<LayerParams>) -> Result<Self> {
        let template = Self::init(spec, 0)?;
        if params.len() != template.params.len() {
            return Err(Error::Consistency(format!(
                "{} parameter records for {} layers",
                params.len(),
                template.params.len()
            )));
        }
        for (i, (got, want)) in params.iter().zip(&template.params).enumerate() {
            let same = match (got, want) {
                (LayerParams::Conv { weight: a }, LayerParams::Conv { weight: b }) => a.shape() == b.shape(),
                (LayerParams::Fc { weight: a, bias: ab }, LayerParams::Fc { weight: b, bias: bb })
                | (LayerParams::Classifier { weight: a, bias: ab }, LayerParams::Classifier { weight: b, bias: bb }) => {
                    a.shape() == b.shape() && ab.shape() == bb.shape()
                }
                (LayerParams::Norm(a), LayerParams::Norm(b)) => {
                    a.channels() == b.channels()
                        && a.beta.len() == b.channels()
                        && a.running_mean.len() == b.channels()
                        && a.running_var.len() == b.channels()
                }
                (LayerParams::Stateless, LayerParams::Stateless) => true,
                _ => false,
            };
            if !same {
                return Err(Error::Consistency(format!("parameters of layer {i} do not match the architecture")));
            }
        }
        Ok(Self {
            spec: template.spec,
            params,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams] {
        &mut self.params
    }

    pub fn into_parts(self) -> (NetworkSpec, Vec<LayerParams>) {
        (self.spec, self.params)
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| match p {
            LayerParams::Conv { weight } => weight.is_finite(),
            LayerParams::Fc { weight, bias } | LayerParams::Classifier { weight, bias } => {
                weight.is_finite() && bias.is_finite()
            }
            LayerParams::Norm(n) => n
                .gamma
                .iter()
                .chain(&n.beta)
                .chain(&n.running_mean)
                .chain(&n.running_var)
                .all(|v| v.is_finite()),
            LayerParams::Stateless => true,
        })
    }
}
