use crate::numerics::Tensor;

/// Triangular surrogate for the spike derivative, `max(0, v_th - |u - v_th|)`.
#[inline]
pub fn surrogate(u: f32, v_th: f32) -> f32 {
    (v_th - (u - v_th).abs()).max(0.0)
}

/// Elementwise [`surrogate`] over a tensor of membrane potentials.
pub fn surrogate_grad(u: &Tensor, v_th: f32) -> Tensor {
    Tensor::new(u.shape().to_vec(), u.data().iter().map(|&v| surrogate(v, v_th)).collect())
        .expect("same shape")
}
