use super::tensor::Tensor;
use crate::error::{Error, Result};

fn check(input: &Tensor, window: usize) -> Result<(usize, usize, usize, usize)> {
    let (n, c, h, w) = input.dims4()?;
    if window == 0 {
        return Err(Error::arg("pooling window must be >= 1"));
    }
    if h % window != 0 || w % window != 0 {
        return Err(Error::dim(format!(
            "spatial size {h}x{w} is not divisible by pooling window {window}"
        )));
    }
    Ok((n, c, h, w))
}

/// Non-overlapping average pooling with a square window.
pub fn avg_pool2d(input: &Tensor, window: usize) -> Result<Tensor> {
    let (n, c, h, w) = check(input, window)?;
    let (oh, ow) = (h / window, w / window);
    let scale = 1.0 / (window * window) as f32;
    let src = input.data();
    let mut out = vec![0.0f32; n * c * oh * ow];
    for (plane_idx, dst) in out.chunks_exact_mut(oh * ow).enumerate() {
        let plane = &src[plane_idx * h * w..(plane_idx + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0f32;
                for dy in 0..window {
                    let row = &plane[(oy * window + dy) * w + ox * window..][..window];
                    for v in row {
                        acc += v;
                    }
                }
                dst[oy * ow + ox] = acc * scale;
            }
        }
    }
    Tensor::new(vec![n, c, oh, ow], out)
}

/// Spreads each output gradient evenly over its window.
pub fn avg_pool2d_backward(input_shape: &[usize], window: usize, grad_out: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = *input_shape else {
        return Err(Error::dim(format!("pooling input must be rank 4, got {input_shape:?}")));
    };
    if window == 0 || h % window != 0 || w % window != 0 {
        return Err(Error::dim(format!("spatial size {h}x{w} is not divisible by {window}")));
    }
    let (oh, ow) = (h / window, w / window);
    if grad_out.shape() != [n, c, oh, ow] {
        return Err(Error::dim(format!(
            "pooling gradient is {:?}, expected {:?}",
            grad_out.shape(),
            [n, c, oh, ow]
        )));
    }
    let scale = 1.0 / (window * window) as f32;
    let mut grad = vec![0.0f32; n * c * h * w];
    for (plane_idx, g) in grad_out.data().chunks_exact(oh * ow).enumerate() {
        let plane = &mut grad[plane_idx * h * w..(plane_idx + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                plane[y * w + x] = g[(y / window) * ow + x / window] * scale;
            }
        }
    }
    Tensor::new(input_shape.to_vec(), grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_stays_constant() {
        let x = Tensor::full(&[2, 3, 4, 4], 1.75);
        let y = avg_pool2d(&x, 2).unwrap();
        assert_eq!(y.shape(), &[2, 3, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 1.75));
    }

    #[test]
    fn two_by_two_mean() {
        let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(avg_pool2d(&x, 2).unwrap().data(), &[2.5]);
    }

    #[test]
    fn non_divisible_is_an_error() {
        assert!(matches!(avg_pool2d(&Tensor::zeros(&[1, 1, 5, 4]), 2), Err(Error::Dimension(_))));
    }

    #[test]
    fn backward_spreads_evenly() {
        let g = Tensor::new(vec![1, 1, 1, 1], vec![4.0]).unwrap();
        let gi = avg_pool2d_backward(&[1, 1, 2, 2], 2, &g).unwrap();
        assert_eq!(gi.data(), &[1.0; 4]);
    }
}
