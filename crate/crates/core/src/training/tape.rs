//! Layer-major forward recording and backpropagation through time.
//!
//! Training runs every timestep of one layer before moving to the next.
//! Activations are stored as `(T * B, ...)` tensors, timestep-major, which
//! lets normalization layers pool statistics over batch and time and lets
//! each LIF layer unroll its own recurrence.

use super::loss::{loss_and_step_grads, LossMode, TimestepTarget};
use super::surrogate::surrogate;
use crate::error::{Error, Result};
use crate::numerics::{
    avg_pool2d, avg_pool2d_backward, batch_norm, batch_norm_backward, conv2d, conv2d_backward, fully_connected,
    fully_connected_backward, NormCache, NormMode, NormParams, Tensor,
};
use crate::snn::{LayerParams, LayerSpec, Model, NetworkSpec};

#[derive(Clone, Debug)]
enum LayerCache {
    /// `encoded` marks the first layer: `input` then holds the `B` analog
    /// samples and the output was replicated over the T timesteps.
    Conv { input: Tensor, encoded: bool },
    Linear { input: Tensor, input_shape: Vec<usize>, encoded: bool },
    Norm(NormCache),
    Lif { potentials: Tensor, spikes: Tensor },
    Pool { input_shape: Vec<usize> },
}

/// Everything the backward pass needs from one recorded forward pass.
#[derive(Clone, Debug)]
pub struct GradientTape {
    t_steps: usize,
    batch: usize,
    caches: Vec<LayerCache>,
    step_logits: Vec<Tensor>,
    norm_stats: Vec<Option<NormParams>>,
    spec: NetworkSpec,
}

impl GradientTape {
    pub fn t_steps(&self) -> usize {
        self.t_steps
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Classifier output of every timestep, each `(B, K)`.
    pub fn step_logits(&self) -> &[Tensor] {
        &self.step_logits
    }

    /// Running statistics produced by the training-mode norm layers,
    /// indexed by layer.
    pub fn norm_stats(&self) -> &[Option<NormParams>] {
        &self.norm_stats
    }

    /// Pre-reset membrane potentials of each LIF layer, `(T * B, ...)`.
    pub fn lif_potentials(&self) -> impl Iterator<Item = &Tensor> {
        self.caches.iter().filter_map(|c| match c {
            LayerCache::Lif { potentials, .. } => Some(potentials),
            _ => None,
        })
    }
}

/// Weight gradients of one layer, mirroring [`LayerParams`].
#[derive(Clone, Debug, PartialEq)]
pub enum LayerGrads {
    Conv { weight: Tensor },
    Fc { weight: Tensor, bias: Tensor },
    Norm { gamma: Vec<f32>, beta: Vec<f32> },
    Classifier { weight: Tensor, bias: Tensor },
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    pub fn max_abs(&self) -> f32 {
        let mut m = 0.0f32;
        let mut visit = |d: &[f32]| d.iter().for_each(|v| m = m.max(v.abs()));
        for g in &self.layers {
            match g {
                LayerGrads::Conv { weight } => visit(weight.data()),
                LayerGrads::Fc { weight, bias } | LayerGrads::Classifier { weight, bias } => {
                    visit(weight.data());
                    visit(bias.data());
                }
                LayerGrads::Norm { gamma, beta } => {
                    visit(gamma);
                    visit(beta);
                }
                LayerGrads::None => {}
            }
        }
        m
    }
}

/// Training-mode forward pass over `t_steps` timesteps of the analog batch `x`.
pub fn forward_train(model: &Model, x: &Tensor, t_steps: usize) -> Result<GradientTape> {
    let spec = model.spec();
    if t_steps == 0 || t_steps > spec.t_max {
        return Err(Error::arg(format!("training timesteps {t_steps} outside 1..={}", spec.t_max)));
    }
    let (batch, c, h, w) = x.dims4()?;
    if [c, h, w] != spec.input_shape[..] {
        return Err(Error::dim(format!(
            "input item shape {:?} does not match the network input {:?}",
            &x.shape()[1..],
            spec.input_shape
        )));
    }
    let rows = t_steps * batch;
    let mut caches = Vec::with_capacity(spec.layers.len());
    let mut norm_stats = vec![None; spec.layers.len()];
    let mut cur = x.clone();
    for (i, (layer, params)) in spec.layers.iter().zip(model.params()).enumerate() {
        let encoded = i == 0;
        cur = match (layer, params) {
            (LayerSpec::Conv { .. }, LayerParams::Conv { weight }) => {
                let out = conv2d(&cur, weight, &layer.conv_params().expect("conv"))?;
                caches.push(LayerCache::Conv { input: cur, encoded });
                if encoded {
                    out.repeat_batch(t_steps)
                } else {
                    out
                }
            }
            (LayerSpec::Fc { .. }, LayerParams::Fc { weight, bias })
            | (LayerSpec::Classifier { .. }, LayerParams::Classifier { weight, bias }) => {
                let input_shape = cur.shape().to_vec();
                let n = cur.batch();
                let len = cur.item_len();
                let flat = cur.reshape(&[n, len])?;
                let out = fully_connected(&flat, weight, bias)?;
                caches.push(LayerCache::Linear {
                    input: flat,
                    input_shape,
                    encoded,
                });
                if encoded {
                    out.repeat_batch(t_steps)
                } else {
                    out
                }
            }
            (LayerSpec::Norm, LayerParams::Norm(p)) => {
                let out = batch_norm(&cur, p, NormMode::Train)?;
                caches.push(LayerCache::Norm(out.cache.expect("train mode keeps a cache")));
                norm_stats[i] = Some(out.stats);
                out.output
            }
            (LayerSpec::Lif, _) => {
                let (potentials, spikes) = lif_unroll(&cur, t_steps, spec.lif.tau, spec.lif.v_th)?;
                caches.push(LayerCache::Lif {
                    potentials,
                    spikes: spikes.clone(),
                });
                spikes
            }
            (LayerSpec::Pool { window }, _) => {
                let out = avg_pool2d(&cur, *window)?;
                caches.push(LayerCache::Pool {
                    input_shape: cur.shape().to_vec(),
                });
                out
            }
            _ => return Err(Error::state(format!("layer {i} parameters do not match its kind"))),
        };
    }
    let (n, _) = cur.dims2()?;
    debug_assert_eq!(n, rows);
    let step_logits = (0..t_steps)
        .map(|t| cur.slice_batch(t * batch, batch))
        .collect::<Result<Vec<_>>>()?;
    Ok(GradientTape {
        t_steps,
        batch,
        caches,
        step_logits,
        norm_stats,
        spec: spec.clone(),
    })
}

/// Runs the LIF recurrence over the timestep-major rows of `current`.
/// Returns the pre-reset potentials and the spikes.
fn lif_unroll(current: &Tensor, t_steps: usize, tau: f32, v_th: f32) -> Result<(Tensor, Tensor)> {
    let total = current.len();
    if total % t_steps != 0 {
        return Err(Error::dim("LIF input rows are not a multiple of the timestep count"));
    }
    let per_t = total / t_steps;
    let input = current.data();
    let mut potentials = vec![0.0f32; total];
    let mut spikes = vec![0.0f32; total];
    let mut u = vec![0.0f32; per_t];
    for t in 0..t_steps {
        let range = t * per_t..(t + 1) * per_t;
        for (j, idx) in range.enumerate() {
            let v = tau * u[j] + input[idx];
            potentials[idx] = v;
            if v > v_th {
                spikes[idx] = 1.0;
                u[j] = 0.0;
            } else {
                u[j] = v;
            }
        }
    }
    Ok((
        Tensor::new(current.shape().to_vec(), potentials)?,
        Tensor::new(current.shape().to_vec(), spikes)?,
    ))
}

/// Backpropagation through time of one LIF layer.
///
/// With `v[t] = tau * u[t-1] + I[t]`, `s[t] = H(v[t] - v_th)` and
/// `u[t] = v[t] * (1 - s[t])` where the reset factor is treated as a
/// constant, the adjoints obey
/// `dv[t] = ds[t] * sg(v[t]) + du[t] * (1 - s[t])`, `dI[t] = dv[t]`,
/// `du[t-1] = tau * dv[t]`.
fn lif_backward(grad_spikes: &Tensor, potentials: &Tensor, spikes: &Tensor, t_steps: usize, tau: f32, v_th: f32) -> Tensor {
    let total = grad_spikes.len();
    let per_t = total / t_steps;
    let gs = grad_spikes.data();
    let v = potentials.data();
    let s = spikes.data();
    let mut grad_in = vec![0.0f32; total];
    let mut du = vec![0.0f32; per_t];
    for t in (0..t_steps).rev() {
        for j in 0..per_t {
            let idx = t * per_t + j;
            let dv = gs[idx] * surrogate(v[idx], v_th) + du[j] * (1.0 - s[idx]);
            grad_in[idx] = dv;
            du[j] = tau * dv;
        }
    }
    Tensor::new(grad_spikes.shape().to_vec(), grad_in).expect("same shape")
}

/// Sums a `(T * B, ...)` gradient over its timesteps into `(B, ...)`.
fn sum_over_time(grad: &Tensor, t_steps: usize) -> Result<Tensor> {
    let batch = grad.batch() / t_steps;
    let mut out = grad.slice_batch(0, batch)?;
    for t in 1..t_steps {
        out.add_assign(&grad.slice_batch(t * batch, batch)?)?;
    }
    Ok(out)
}

/// Loss of the recorded forward pass and the gradient of every parameter.
pub fn backward(
    model: &Model,
    tape: &GradientTape,
    labels: &[usize],
    mode: LossMode,
    target: TimestepTarget,
) -> Result<(f64, Gradients)> {
    let spec = model.spec();
    if tape.caches.len() != spec.layers.len() || tape.spec != *spec {
        return Err(Error::state(
            "the tape was recorded on a different network architecture",
        ));
    }
    if labels.len() != tape.batch {
        return Err(Error::state(format!(
            "{} labels for a recorded batch of {}",
            labels.len(),
            tape.batch
        )));
    }
    let (loss, step_grads) = loss_and_step_grads(&tape.step_logits, labels, mode, target)?;
    let k = spec.num_classes;
    let mut data = Vec::with_capacity(tape.t_steps * tape.batch * k);
    for g in &step_grads {
        data.extend_from_slice(g.data());
    }
    let mut grad = Tensor::new(vec![tape.t_steps * tape.batch, k], data)?;

    let mut layer_grads = vec![LayerGrads::None; spec.layers.len()];
    for i in (0..spec.layers.len()).rev() {
        let need_input = i > 0;
        let layer = &spec.layers[i];
        match (layer, &model.params()[i], &tape.caches[i]) {
            (LayerSpec::Conv { .. }, LayerParams::Conv { weight }, LayerCache::Conv { input, encoded }) => {
                let p = layer.conv_params().expect("conv");
                let (gw, gi) = if *encoded {
                    conv2d_backward(input, weight, &p, &sum_over_time(&grad, tape.t_steps)?, false)?
                } else {
                    conv2d_backward(input, weight, &p, &grad, need_input)?
                };
                layer_grads[i] = LayerGrads::Conv { weight: gw };
                if let Some(gi) = gi {
                    grad = gi;
                }
            }
            (
                LayerSpec::Fc { .. } | LayerSpec::Classifier { .. },
                LayerParams::Fc { weight, bias } | LayerParams::Classifier { weight, bias },
                LayerCache::Linear {
                    input,
                    input_shape,
                    encoded,
                },
            ) => {
                let g_out = if *encoded { sum_over_time(&grad, tape.t_steps)? } else { grad.clone() };
                let (gw, gb, gi) = fully_connected_backward(input, weight, bias, &g_out, need_input && !encoded)?;
                layer_grads[i] = if matches!(layer, LayerSpec::Classifier { .. }) {
                    LayerGrads::Classifier { weight: gw, bias: gb }
                } else {
                    LayerGrads::Fc { weight: gw, bias: gb }
                };
                if let Some(gi) = gi {
                    grad = gi.reshape(input_shape)?;
                }
            }
            (LayerSpec::Norm, LayerParams::Norm(p), LayerCache::Norm(cache)) => {
                let (gi, gamma, beta) = batch_norm_backward(&grad, cache, p)?;
                layer_grads[i] = LayerGrads::Norm { gamma, beta };
                grad = gi;
            }
            (LayerSpec::Lif, _, LayerCache::Lif { potentials, spikes }) => {
                grad = lif_backward(&grad, potentials, spikes, tape.t_steps, spec.lif.tau, spec.lif.v_th);
            }
            (LayerSpec::Pool { window }, _, LayerCache::Pool { input_shape }) => {
                grad = avg_pool2d_backward(input_shape, *window, &grad)?;
            }
            _ => return Err(Error::state(format!("tape entry {i} does not match the model layer"))),
        }
    }
    Ok((loss, Gradients { layers: layer_grads }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::SnnInstance;

    fn small_spec() -> NetworkSpec {
        NetworkSpec::conv3([1, 8, 8], [2, 3, 3], 3, 3)
    }

    #[test]
    fn gradient_shapes_mirror_weights() {
        let model = Model::init(small_spec(), 5).unwrap();
        let x = Tensor::from_fn(&[4, 1, 8, 8], |i| ((i * 37) % 11) as f32 / 5.0 - 1.0);
        let tape = forward_train(&model, &x, 3).unwrap();
        let (_, grads) = backward(&model, &tape, &[0, 1, 2, 0], LossMode::PerTimestep, TimestepTarget::RunningMean).unwrap();
        for (g, p) in grads.layers.iter().zip(model.params()) {
            match (g, p) {
                (LayerGrads::Conv { weight: a }, LayerParams::Conv { weight: b }) => assert_eq!(a.shape(), b.shape()),
                (LayerGrads::Classifier { weight: a, bias: ab }, LayerParams::Classifier { weight: b, bias: bb }) => {
                    assert_eq!(a.shape(), b.shape());
                    assert_eq!(ab.shape(), bb.shape());
                }
                (LayerGrads::Norm { gamma, beta }, LayerParams::Norm(n)) => {
                    assert_eq!(gamma.len(), n.channels());
                    assert_eq!(beta.len(), n.channels());
                }
                (LayerGrads::None, LayerParams::Stateless) => {}
                other => panic!("mismatched gradient record {other:?}"),
            }
        }
    }

    #[test]
    fn train_forward_matches_inference_when_stats_agree() {
        // Without norm layers the layer-major and timestep-major passes
        // compute the same function.
        let spec = NetworkSpec {
            input_shape: vec![1, 6, 6],
            layers: vec![
                LayerSpec::conv(1, 2, 3, 1),
                LayerSpec::Lif,
                LayerSpec::Pool { window: 2 },
                LayerSpec::conv(2, 2, 3, 1),
                LayerSpec::Lif,
                LayerSpec::Classifier { in_features: 18, num_classes: 3 },
            ],
            num_classes: 3,
            t_max: 4,
            lif: Default::default(),
        };
        let model = Model::init(spec, 11).unwrap();
        let x = Tensor::from_fn(&[2, 1, 6, 6], |i| ((i * 13) % 7) as f32 - 2.0);
        let tape = forward_train(&model, &x, 4).unwrap();
        let mut inst = SnnInstance::new(&model);
        for t in 0..4 {
            let step = inst.forward_timestep(&x).unwrap();
            assert!(step.max_abs_diff(&tape.step_logits()[t]) < 1e-5);
        }
    }

    #[test]
    fn mismatched_tape_is_a_state_error() {
        let model = Model::init(small_spec(), 5).unwrap();
        let x = Tensor::zeros(&[2, 1, 8, 8]);
        let tape = forward_train(&model, &x, 2).unwrap();
        assert!(matches!(
            backward(&model, &tape, &[0], LossMode::Standard, TimestepTarget::RunningMean),
            Err(Error::State(_))
        ));
        let other = Model::init(NetworkSpec::desk_mnist(), 1).unwrap();
        assert!(matches!(
            backward(&other, &tape, &[0, 1], LossMode::Standard, TimestepTarget::RunningMean),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn saturated_single_class_has_vanishing_gradients() {
        let mut model = Model::zeros(small_spec()).unwrap();
        if let Some(LayerParams::Classifier { bias, .. }) = model.params_mut().last_mut() {
            bias.data_mut()[1] = 40.0;
        }
        let x = Tensor::from_fn(&[3, 1, 8, 8], |i| (i % 5) as f32);
        let tape = forward_train(&model, &x, 3).unwrap();
        let (loss, grads) = backward(&model, &tape, &[1, 1, 1], LossMode::PerTimestep, TimestepTarget::RunningMean).unwrap();
        assert!(loss < 1e-6);
        assert!(grads.max_abs() < 1e-6, "{}", grads.max_abs());
    }
}
