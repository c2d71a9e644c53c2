use super::gemm::{gemm, Operand};
use super::tensor::Tensor;
use crate::error::{Error, Result};

fn check(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize)> {
    let (n, f_in) = input.dims2()?;
    let (f_out, w_in) = weights.dims2()?;
    if w_in != f_in {
        return Err(Error::dim(format!(
            "inner dimension mismatch: input has {f_in} features, weights expect {w_in}"
        )));
    }
    if bias.shape() != [f_out] {
        return Err(Error::dim(format!(
            "bias shape {:?} does not match F_out = {f_out}",
            bias.shape()
        )));
    }
    Ok((n, f_in, f_out))
}

/// `input . weights^T + bias` for `input: (N, F_in)`, `weights: (F_out, F_in)`.
pub fn fully_connected(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, f_in, f_out) = check(input, weights, bias)?;
    let mut out = Vec::with_capacity(n * f_out);
    for _ in 0..n {
        out.extend_from_slice(bias.data());
    }
    gemm(n, f_in, f_out, Operand::plain(input.data()), Operand::t(weights.data()), 1.0, &mut out);
    Tensor::new(vec![n, f_out], out)
}

/// Gradients of [`fully_connected`]: `(dW, db, dX)`.
pub fn fully_connected_backward(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    grad_out: &Tensor,
    need_input_grad: bool,
) -> Result<(Tensor, Tensor, Option<Tensor>)> {
    let (n, f_in, f_out) = check(input, weights, bias)?;
    if grad_out.shape() != [n, f_out] {
        return Err(Error::dim(format!(
            "output gradient is {:?}, expected [{n}, {f_out}]",
            grad_out.shape()
        )));
    }
    let mut grad_w = Tensor::zeros(&[f_out, f_in]);
    gemm(f_out, n, f_in, Operand::t(grad_out.data()), Operand::plain(input.data()), 0.0, grad_w.data_mut());
    let mut grad_b = Tensor::zeros(&[f_out]);
    for row in grad_out.data().chunks_exact(f_out) {
        for (g, v) in grad_b.data_mut().iter_mut().zip(row) {
            *g += v;
        }
    }
    let grad_in = if need_input_grad {
        let mut gi = Tensor::zeros(&[n, f_in]);
        gemm(n, f_out, f_in, Operand::plain(grad_out.data()), Operand::plain(weights.data()), 0.0, gi.data_mut());
        Some(gi)
    } else {
        None
    };
    Ok((grad_w, grad_b, grad_in))
}
