use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Per-channel affine parameters and running statistics of a batch-norm layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub momentum: f32,
    pub eps: f32,
}

impl NormParams {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    Train,
    Eval,
}

/// Values the backward pass needs from a training-mode forward.
#[derive(Clone, Debug)]
pub struct NormCache {
    pub inv_std: Vec<f32>,
    pub normalized: Tensor,
}

#[derive(Clone, Debug)]
pub struct NormOutput {
    pub output: Tensor,
    /// Statistics after this call: blended in train mode, unchanged in eval.
    pub stats: NormParams,
    pub cache: Option<NormCache>,
}

fn layout(input: &Tensor, params: &NormParams) -> Result<(usize, usize, usize)> {
    if input.rank() < 2 {
        return Err(Error::dim(format!(
            "batch norm needs at least (N, C), got {:?}",
            input.shape()
        )));
    }
    let n = input.shape()[0];
    let c = input.shape()[1];
    if c != params.channels() || params.beta.len() != c || params.running_mean.len() != c || params.running_var.len() != c {
        return Err(Error::dim(format!(
            "channel axis is {c} but norm parameters are sized {}",
            params.channels()
        )));
    }
    let spatial = input.shape()[2..].iter().product();
    Ok((n, c, spatial))
}

/// Per-channel batch normalization over every axis except the channel axis.
///
/// Train mode normalizes with the biased batch variance and blends the
/// unbiased variance into the running statistics:
/// `running = (1 - momentum) * running + momentum * batch`.
pub fn batch_norm(input: &Tensor, params: &NormParams, mode: NormMode) -> Result<NormOutput> {
    let (n, c, spatial) = layout(input, params)?;
    let x = input.data();
    let mut out = vec![0.0f32; x.len()];
    let mut stats = params.clone();
    match mode {
        NormMode::Eval => {
            for ch in 0..c {
                let inv = 1.0 / (params.running_var[ch] + params.eps).sqrt();
                let scale = params.gamma[ch] * inv;
                let shift = params.beta[ch] - params.running_mean[ch] * scale;
                for b in 0..n {
                    let off = (b * c + ch) * spatial;
                    for i in off..off + spatial {
                        out[i] = x[i] * scale + shift;
                    }
                }
            }
            Ok(NormOutput {
                output: Tensor::new(input.shape().to_vec(), out)?,
                stats,
                cache: None,
            })
        }
        NormMode::Train => {
            let count = n * spatial;
            if count == 0 {
                return Err(Error::arg("batch norm over an empty batch"));
            }
            let mut normalized = vec![0.0f32; x.len()];
            let mut inv_std = vec![0.0f32; c];
            for ch in 0..c {
                let mut sum = 0.0f64;
                for b in 0..n {
                    let off = (b * c + ch) * spatial;
                    sum += x[off..off + spatial].iter().map(|&v| v as f64).sum::<f64>();
                }
                let mean = sum / count as f64;
                let mut sq = 0.0f64;
                for b in 0..n {
                    let off = (b * c + ch) * spatial;
                    sq += x[off..off + spatial]
                        .iter()
                        .map(|&v| {
                            let d = v as f64 - mean;
                            d * d
                        })
                        .sum::<f64>();
                }
                let var = sq / count as f64;
                let inv = 1.0 / (var + params.eps as f64).sqrt();
                inv_std[ch] = inv as f32;
                let (g, be) = (params.gamma[ch], params.beta[ch]);
                for b in 0..n {
                    let off = (b * c + ch) * spatial;
                    for i in off..off + spatial {
                        let xh = ((x[i] as f64 - mean) * inv) as f32;
                        normalized[i] = xh;
                        out[i] = g * xh + be;
                    }
                }
                let unbiased = if count > 1 { var * count as f64 / (count - 1) as f64 } else { var };
                let m = params.momentum;
                stats.running_mean[ch] = (1.0 - m) * params.running_mean[ch] + m * mean as f32;
                stats.running_var[ch] = (1.0 - m) * params.running_var[ch] + m * unbiased as f32;
            }
            Ok(NormOutput {
                output: Tensor::new(input.shape().to_vec(), out)?,
                stats,
                cache: Some(NormCache {
                    inv_std,
                    normalized: Tensor::new(input.shape().to_vec(), normalized)?,
                }),
            })
        }
    }
}

/// Train-mode gradients: `(dX, dgamma, dbeta)`.
pub fn batch_norm_backward(grad_out: &Tensor, cache: &NormCache, params: &NormParams) -> Result<(Tensor, Vec<f32>, Vec<f32>)> {
    if grad_out.shape() != cache.normalized.shape() {
        return Err(Error::dim(format!(
            "norm gradient {:?} does not match forward {:?}",
            grad_out.shape(),
            cache.normalized.shape()
        )));
    }
    let (n, c, spatial) = layout(grad_out, params)?;
    let count = (n * spatial) as f64;
    let dy = grad_out.data();
    let xh = cache.normalized.data();
    let mut dx = vec![0.0f32; dy.len()];
    let mut dgamma = vec![0.0f32; c];
    let mut dbeta = vec![0.0f32; c];
    for ch in 0..c {
        let mut sum_dy = 0.0f64;
        let mut sum_dy_xh = 0.0f64;
        for b in 0..n {
            let off = (b * c + ch) * spatial;
            for i in off..off + spatial {
                sum_dy += dy[i] as f64;
                sum_dy_xh += dy[i] as f64 * xh[i] as f64;
            }
        }
        dgamma[ch] = sum_dy_xh as f32;
        dbeta[ch] = sum_dy as f32;
        let g = params.gamma[ch] as f64;
        let k = g * cache.inv_std[ch] as f64 / count;
        for b in 0..n {
            let off = (b * c + ch) * spatial;
            for i in off..off + spatial {
                dx[i] = (k * (count * dy[i] as f64 - sum_dy - xh[i] as f64 * sum_dy_xh)) as f32;
            }
        }
    }
    Ok((Tensor::new(grad_out.shape().to_vec(), dx)?, dgamma, dbeta))
}
