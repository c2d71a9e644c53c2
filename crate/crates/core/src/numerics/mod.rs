//! Dense tensor kernels shared by the network, trainer and cost model.

mod conv;
mod gemm;
mod linear;
mod norm;
mod pool;
mod tensor;

pub use conv::{conv2d, conv2d_backward, tap_count, ConvParams};
pub use linear::{fully_connected, fully_connected_backward};
pub use norm::{batch_norm, batch_norm_backward, NormCache, NormMode, NormOutput, NormParams};
pub use pool::{avg_pool2d, avg_pool2d_backward};
pub use tensor::Tensor;
