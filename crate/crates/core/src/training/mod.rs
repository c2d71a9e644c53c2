//! Surrogate-gradient training: losses, backpropagation through time and
//! the SGD loop.

mod loss;
mod optim;
mod surrogate;
mod tape;
mod trainer;

pub use loss::{loss_and_step_grads, loss_per_timestep, loss_standard, running_means, LossMode, TimestepTarget};
pub use optim::{cosine_lr, Sgd};
pub use surrogate::{surrogate, surrogate_grad};
pub use tape::{backward, forward_train, GradientTape, Gradients, LayerGrads};
pub use trainer::{accuracy_per_timestep, train, EpochRecord, TrainConfig, TrainingLog};
