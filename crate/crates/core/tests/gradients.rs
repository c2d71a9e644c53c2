//! Backpropagation checked against finite differences.

mod common;

use common::{classifier_fd_error, conv_fd_check, random_tensor, toy_conv_spec};
use dtsnn::snn::{Model, NetworkSpec};
use dtsnn::training::LossMode;

// Classifier weights do not feed back into any spike, so the analytic
// gradient is exact even through several timesteps.
#[test]
fn classifier_gradient_matches_finite_differences() {
    let model = Model::init(NetworkSpec::conv3([1, 8, 8], [3, 4, 4], 4, 3), 7).unwrap();
    let x = random_tensor(&[5, 1, 8, 8], 1);
    let labels = [0, 1, 2, 3, 1];
    for mode in [LossMode::Standard, LossMode::PerTimestep] {
        let err = classifier_fd_error(&model, &x, &labels, 3, mode);
        assert!(err < 1e-3, "{mode:?}: relative error {err}");
    }
}

#[test]
fn conv_surrogate_gradient_matches_straight_through_oracle() {
    for seed in 0..4 {
        let model = Model::init(toy_conv_spec(), seed).unwrap();
        let x = random_tensor(&[4, 1, 4, 4], 9 + seed);
        let c = conv_fd_check(&model, &x, &[0, 1, 2, 0]);
        assert!(c.loss_gap < 1e-5, "oracle loss differs by {}", c.loss_gap);
        assert!(c.worst < 1e-3, "seed {seed}: relative error {}", c.worst);
        assert!(c.nonzero);
    }
}
