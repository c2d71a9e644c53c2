//! Naive reference implementations shared by the integration tests and the
//! acceptance run.
#![allow(dead_code)]

use dtsnn::numerics::{ConvParams, Tensor};
use dtsnn::snn::{LayerParams, LayerSpec, LifConfig, Model, NetworkSpec};
use dtsnn::training::{backward, forward_train, LayerGrads, LossMode, TimestepTarget};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.5f32..1.5)).collect()).unwrap()
}

pub fn conv_naive(x: &Tensor, w: &Tensor, p: &ConvParams) -> Vec<f64> {
    let s = x.shape();
    let (n, c, h, wd) = (s[0], s[1], s[2], s[3]);
    let oh = (h + 2 * p.padding - p.kernel_h) / p.stride + 1;
    let ow = (wd + 2 * p.padding - p.kernel_w) / p.stride + 1;
    let mut out = Vec::new();
    for b in 0..n {
        for o in 0..p.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0f64;
                    for ci in 0..c {
                        for ky in 0..p.kernel_h {
                            for kx in 0..p.kernel_w {
                                let iy = (oy * p.stride + ky) as isize - p.padding as isize;
                                let ix = (ox * p.stride + kx) as isize - p.padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let xv = x.data()[((b * c + ci) * h + iy as usize) * wd + ix as usize];
                                let wv = w.data()[((o * c + ci) * p.kernel_h + ky) * p.kernel_w + kx];
                                acc += xv as f64 * wv as f64;
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

/// `x (N, F_in)`, `w (F_out, F_in)`, `b (F_out)`.
pub fn fc_naive(x: &Tensor, w: &Tensor, b: &Tensor) -> Vec<f64> {
    let (n, f_in) = (x.shape()[0], x.shape()[1]);
    let f_out = w.shape()[0];
    let mut out = Vec::with_capacity(n * f_out);
    for i in 0..n {
        for j in 0..f_out {
            let mut acc = b.data()[j] as f64;
            for k in 0..f_in {
                acc += x.data()[i * f_in + k] as f64 * w.data()[j * f_in + k] as f64;
            }
            out.push(acc);
        }
    }
    out
}

pub fn pool_naive(x: &Tensor, win: usize) -> Vec<f64> {
    let s = x.shape();
    let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
    let (oh, ow) = (h / win, w / win);
    let mut out = Vec::with_capacity(planes * oh * ow);
    for plane in 0..planes {
        for y in 0..oh {
            for z in 0..ow {
                let mut acc = 0.0f64;
                for dy in 0..win {
                    for dz in 0..win {
                        acc += x.data()[plane * h * w + (y * win + dy) * w + z * win + dz] as f64;
                    }
                }
                out.push(acc / (win * win) as f64);
            }
        }
    }
    out
}

pub fn max_abs_diff(got: &Tensor, want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    got.data().iter().zip(want).map(|(g, w)| (*g as f64 - w).abs()).fold(0.0, f64::max)
}

/// One neuron's `(spikes, potentials)` over a current sequence.
pub fn lif_scalar(tau: f32, v_th: f32, currents: &[f32]) -> (Vec<f32>, Vec<f32>) {
    let mut u = 0.0f32;
    let mut spikes = Vec::new();
    let mut pots = Vec::new();
    for &i in currents {
        let v = tau * u + i;
        let s = if v > v_th { 1.0 } else { 0.0 };
        u = if s == 1.0 { 0.0 } else { v };
        spikes.push(s);
        pots.push(u);
    }
    (spikes, pots)
}

/// `(bit_slices, row_blocks, col_blocks, crossbars, tiles)` by ceiling arithmetic.
pub fn mapping_oracle(
    fan_in: usize,
    fan_out: usize,
    size: usize,
    device_bits: u32,
    weight_bits: u32,
    per_tile: usize,
) -> (usize, usize, usize, usize, usize) {
    let slices = weight_bits.div_ceil(device_bits) as usize;
    let rows = fan_in.div_ceil(size);
    let cols = (fan_out * slices).div_ceil(size);
    (slices, rows, cols, rows * cols, (rows * cols).div_ceil(per_tile))
}

/// Relative error with a floor, so gradients near zero are held to an
/// absolute bound of 1e-6 instead.
pub fn rel_err(fd: f64, g: f64) -> f64 {
    (fd - g).abs() / fd.abs().max(g.abs()).max(1e-3)
}

fn loss_of(model: &Model, x: &Tensor, labels: &[usize], t: usize, mode: LossMode) -> f64 {
    let tape = forward_train(model, x, t).unwrap();
    backward(model, &tape, labels, mode, TimestepTarget::RunningMean).unwrap().0
}

fn classifier_weight(model: &mut Model) -> &mut Tensor {
    match model.params_mut().last_mut().unwrap() {
        LayerParams::Classifier { weight, .. } => weight,
        _ => panic!("last layer is the classifier"),
    }
}

/// Largest relative error between backprop and central differences over
/// every classifier weight of `model` at `t` timesteps.
pub fn classifier_fd_error(model: &Model, x: &Tensor, labels: &[usize], t: usize, mode: LossMode) -> f64 {
    let mut model = model.clone();
    let tape = forward_train(&model, x, t).unwrap();
    let (_, grads) = backward(&model, &tape, labels, mode, TimestepTarget::RunningMean).unwrap();
    let analytic = match grads.layers.last().unwrap() {
        LayerGrads::Classifier { weight, .. } => weight.clone(),
        other => panic!("unexpected {other:?}"),
    };
    let h = 1e-2f32;
    let mut worst = 0.0f64;
    for idx in 0..analytic.len() {
        let orig = classifier_weight(&mut model).data()[idx];
        classifier_weight(&mut model).data_mut()[idx] = orig + h;
        let up = loss_of(&model, x, labels, t, mode);
        classifier_weight(&mut model).data_mut()[idx] = orig - h;
        let down = loss_of(&model, x, labels, t, mode);
        classifier_weight(&mut model).data_mut()[idx] = orig;
        let fd = (up - down) / (2.0 * h as f64);
        worst = worst.max(rel_err(fd, analytic.data()[idx] as f64));
    }
    worst
}

/// Antiderivative of the triangular surrogate `max(0, v_th - |u - v_th|)`.
pub fn soft_spike(u: f64, v_th: f64) -> f64 {
    let z = u - v_th;
    if z <= -v_th {
        0.0
    } else if z <= 0.0 {
        (z + v_th).powi(2) / 2.0
    } else if z < v_th {
        v_th * v_th - (v_th - z).powi(2) / 2.0
    } else {
        v_th * v_th
    }
}

/// conv(1 -> 2, 3x3, pad 1) -> LIF -> classifier(32 -> 3) on 4x4 inputs.
pub fn toy_conv_spec() -> NetworkSpec {
    NetworkSpec {
        input_shape: vec![1, 4, 4],
        layers: vec![
            LayerSpec::conv(1, 2, 3, 1),
            LayerSpec::Lif,
            LayerSpec::Classifier { in_features: 32, num_classes: 3 },
        ],
        num_classes: 3,
        t_max: 1,
        lif: LifConfig::default(),
    }
}

// One-timestep toy loss with straight-through spikes `hard(u0) + soft(u) -
// soft(u0)`: equal to the real loss at `conv0`, with the surrogate gradient
// as its exact derivative there. Also returns the smallest |u0 - v_th|.
fn straight_through_loss(
    conv: &[f64],
    conv0: &[f64],
    cls: &[f64],
    bias: &[f64],
    x: &Tensor,
    labels: &[usize],
    v_th: f64,
) -> (f64, f64) {
    let (n, side, oc, k) = (x.shape()[0], x.shape()[2], 2, 3);
    let mut total = 0.0;
    let mut margin = f64::INFINITY;
    for b in 0..n {
        let mut spikes = vec![0.0; oc * side * side];
        for o in 0..oc {
            for y in 0..side {
                for z in 0..side {
                    let (mut u, mut u0) = (0.0, 0.0);
                    for ky in 0..3 {
                        for kz in 0..3 {
                            let (iy, iz) = (y as isize + ky as isize - 1, z as isize + kz as isize - 1);
                            if iy >= 0 && iz >= 0 && (iy as usize) < side && (iz as usize) < side {
                                let xv = x.data()[(b * side + iy as usize) * side + iz as usize] as f64;
                                u += conv[(o * 3 + ky) * 3 + kz] * xv;
                                u0 += conv0[(o * 3 + ky) * 3 + kz] * xv;
                            }
                        }
                    }
                    margin = margin.min((u0 - v_th).abs());
                    let hard = if u0 > v_th { 1.0 } else { 0.0 };
                    spikes[(o * side + y) * side + z] = hard + soft_spike(u, v_th) - soft_spike(u0, v_th);
                }
            }
        }
        let logits: Vec<f64> = (0..k)
            .map(|j| bias[j] + (0..spikes.len()).map(|i| cls[j * spikes.len() + i] * spikes[i]).sum::<f64>())
            .collect();
        let max = logits.iter().cloned().fold(f64::MIN, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        total += lse - logits[labels[b]];
    }
    (total / n as f64, margin)
}

pub struct ConvCheck {
    /// Largest relative error over all conv weights.
    pub worst: f64,
    /// |real loss - oracle loss| at the unperturbed weights.
    pub loss_gap: f64,
    /// Smallest distance of any membrane potential from the threshold.
    pub threshold_margin: f64,
    pub nonzero: bool,
}

/// Surrogate conv gradient of [`toy_conv_spec`] against central differences
/// of the straight-through oracle.
pub fn conv_fd_check(model: &Model, x: &Tensor, labels: &[usize]) -> ConvCheck {
    let tape = forward_train(model, x, 1).unwrap();
    let (real, grads) = backward(model, &tape, labels, LossMode::Standard, TimestepTarget::RunningMean).unwrap();
    let analytic = match &grads.layers[0] {
        LayerGrads::Conv { weight } => weight.clone(),
        other => panic!("unexpected {other:?}"),
    };
    let as_f64 = |t: &Tensor| t.data().iter().map(|&v| v as f64).collect::<Vec<f64>>();
    let conv = match &model.params()[0] {
        LayerParams::Conv { weight } => as_f64(weight),
        _ => panic!("first layer is the conv"),
    };
    let (cls, bias) = match &model.params()[2] {
        LayerParams::Classifier { weight, bias } => (as_f64(weight), as_f64(bias)),
        _ => panic!("last layer is the classifier"),
    };
    let v_th = model.spec().lif.v_th as f64;
    let (base, margin) = straight_through_loss(&conv, &conv, &cls, &bias, x, labels, v_th);
    let mut worst = 0.0f64;
    for idx in 0..conv.len() {
        let h = 1e-4;
        let mut w = conv.clone();
        w[idx] += h;
        let up = straight_through_loss(&w, &conv, &cls, &bias, x, labels, v_th).0;
        w[idx] -= 2.0 * h;
        let down = straight_through_loss(&w, &conv, &cls, &bias, x, labels, v_th).0;
        worst = worst.max(rel_err((up - down) / (2.0 * h), analytic.data()[idx] as f64));
    }
    ConvCheck {
        worst,
        loss_gap: (base - real).abs(),
        threshold_margin: margin,
        nonzero: analytic.data().iter().any(|&g| g != 0.0),
    }
}
