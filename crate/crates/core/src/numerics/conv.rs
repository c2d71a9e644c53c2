use serde::{Deserialize, Serialize};

use super::gemm::{gemm, Operand};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvParams {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvParams {
    pub fn square(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding,
        }
    }

    /// Rows of the unrolled patch matrix (`C_in * k_h * k_w`).
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    /// Output spatial size, `floor((in + 2p - k) / s) + 1`.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.stride == 0 {
            return Err(Error::arg("convolution stride must be >= 1"));
        }
        if self.kernel_h == 0 || self.kernel_w == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::arg(format!("degenerate convolution {self:?}")));
        }
        let span_h = h + 2 * self.padding;
        let span_w = w + 2 * self.padding;
        if span_h < self.kernel_h || span_w < self.kernel_w {
            return Err(Error::dim(format!(
                "kernel {}x{} does not fit padded input {span_h}x{span_w}",
                self.kernel_h, self.kernel_w
            )));
        }
        Ok((
            (span_h - self.kernel_h) / self.stride + 1,
            (span_w - self.kernel_w) / self.stride + 1,
        ))
    }

    fn check(&self, input: &Tensor, weights: &Tensor) -> Result<(usize, usize, usize, usize, usize)> {
        let (n, c, h, w) = input.dims4()?;
        if c != self.in_channels {
            return Err(Error::dim(format!(
                "input channel axis is {c} but the convolution expects C_in = {}",
                self.in_channels
            )));
        }
        let want = [self.out_channels, self.in_channels, self.kernel_h, self.kernel_w];
        if weights.shape() != want {
            return Err(Error::dim(format!(
                "weight axes (C_out, C_in, k_h, k_w) are {:?}, expected {want:?}",
                weights.shape()
            )));
        }
        let (oh, ow) = self.output_hw(h, w)?;
        Ok((n, h, w, oh, ow))
    }
}

/// Unrolls one `C x H x W` image into a `(C k_h k_w) x (H' W')` patch matrix.
fn im2col(x: &[f32], p: &ConvParams, h: usize, w: usize, oh: usize, ow: usize, cols: &mut [f32]) {
    let positions = oh * ow;
    let mut row = 0;
    for c in 0..p.in_channels {
        let plane = &x[c * h * w..(c + 1) * h * w];
        for ki in 0..p.kernel_h {
            for kj in 0..p.kernel_w {
                let dst = &mut cols[row * positions..(row + 1) * positions];
                for oy in 0..oh {
                    let iy = (oy * p.stride + ki) as isize - p.padding as isize;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, out) in line.iter_mut().enumerate() {
                        let ix = (ox * p.stride + kj) as isize - p.padding as isize;
                        *out = if ix < 0 || ix >= w as isize { 0.0 } else { src[ix as usize] };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatters a patch-matrix gradient back onto the image (adds into `dx`).
fn col2im(cols: &[f32], p: &ConvParams, h: usize, w: usize, oh: usize, ow: usize, dx: &mut [f32]) {
    let positions = oh * ow;
    let mut row = 0;
    for c in 0..p.in_channels {
        let plane = &mut dx[c * h * w..(c + 1) * h * w];
        for ki in 0..p.kernel_h {
            for kj in 0..p.kernel_w {
                let src = &cols[row * positions..(row + 1) * positions];
                for oy in 0..oh {
                    let iy = (oy * p.stride + ki) as isize - p.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * p.stride + kj) as isize - p.padding as isize;
                        if ix >= 0 && ix < w as isize {
                            plane[iy as usize * w + ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// 2-D cross-correlation without bias, `(N, C_in, H, W) -> (N, C_out, H', W')`.
pub fn conv2d(input: &Tensor, weights: &Tensor, params: &ConvParams) -> Result<Tensor> {
    let (n, h, w, oh, ow) = params.check(input, weights)?;
    let k = params.patch_len();
    let positions = oh * ow;
    let in_item = input.item_len();
    let out_item = params.out_channels * positions;
    let mut out = vec![0.0f32; n * out_item];
    let mut cols = vec![0.0f32; k * positions];
    for b in 0..n {
        im2col(&input.data()[b * in_item..(b + 1) * in_item], params, h, w, oh, ow, &mut cols);
        gemm(
            params.out_channels,
            k,
            positions,
            Operand::plain(weights.data()),
            Operand::plain(&cols),
            0.0,
            &mut out[b * out_item..(b + 1) * out_item],
        );
    }
    Tensor::new(vec![n, params.out_channels, oh, ow], out)
}

/// Gradients of [`conv2d`]: returns `(dW, dX)`; `dX` is skipped unless
/// `need_input_grad`.
pub fn conv2d_backward(
    input: &Tensor,
    weights: &Tensor,
    params: &ConvParams,
    grad_out: &Tensor,
    need_input_grad: bool,
) -> Result<(Tensor, Option<Tensor>)> {
    let (n, h, w, oh, ow) = params.check(input, weights)?;
    let want = [n, params.out_channels, oh, ow];
    if grad_out.shape() != want {
        return Err(Error::dim(format!(
            "output gradient is {:?}, forward produced {want:?}",
            grad_out.shape()
        )));
    }
    let k = params.patch_len();
    let positions = oh * ow;
    let in_item = input.item_len();
    let out_item = params.out_channels * positions;
    let mut grad_w = Tensor::zeros(weights.shape());
    let mut grad_in = need_input_grad.then(|| Tensor::zeros(input.shape()));
    let mut cols = vec![0.0f32; k * positions];
    let mut grad_cols = vec![0.0f32; k * positions];
    for b in 0..n {
        let go = &grad_out.data()[b * out_item..(b + 1) * out_item];
        if go.iter().all(|&v| v == 0.0) {
            continue;
        }
        im2col(&input.data()[b * in_item..(b + 1) * in_item], params, h, w, oh, ow, &mut cols);
        gemm(
            params.out_channels,
            positions,
            k,
            Operand::plain(go),
            Operand::t(&cols),
            1.0,
            grad_w.data_mut(),
        );
        if let Some(gi) = grad_in.as_mut() {
            gemm(
                k,
                params.out_channels,
                positions,
                Operand::t(weights.data()),
                Operand::plain(go),
                0.0,
                &mut grad_cols,
            );
            col2im(&grad_cols, params, h, w, oh, ow, &mut gi.data_mut()[b * in_item..(b + 1) * in_item]);
        }
    }
    Ok((grad_w, grad_in))
}

/// Number of in-bounds kernel taps summed over all output positions,
/// i.e. how many crossbar row activations one dense input image causes.
pub fn tap_count(params: &ConvParams, h: usize, w: usize) -> Result<usize> {
    let (oh, ow) = params.output_hw(h, w)?;
    let axis = |len: usize, out: usize, k: usize| -> usize {
        let mut count = 0;
        for o in 0..out {
            for kk in 0..k {
                let i = (o * params.stride + kk) as isize - params.padding as isize;
                if i >= 0 && i < len as isize {
                    count += 1;
                }
            }
        }
        count
    };
    Ok(params.in_channels * axis(h, oh, params.kernel_h) * axis(w, ow, params.kernel_w))
}
