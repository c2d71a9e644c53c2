//! Loss functions, the training loop and its determinism.

use dtsnn::data::{synth_dataset, SynthKind};
use dtsnn::numerics::Tensor;
use dtsnn::snn::{Model, NetworkSpec};
use dtsnn::training::{
    accuracy_per_timestep, loss_and_step_grads, loss_per_timestep, loss_standard, running_means, train, LossMode,
    TimestepTarget, TrainConfig,
};
use proptest::prelude::*;

fn logits(b: usize, k: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-8.0f32..8.0, b * k).prop_map(move |v| Tensor::new(vec![b, k], v).unwrap())
}

// softmax + NLL per row in f64, independent of the library code
fn nll(t: &Tensor, labels: &[usize]) -> f64 {
    let k = t.shape()[1];
    let rows: Vec<&[f32]> = t.data().chunks(k).collect();
    rows.iter()
        .zip(labels)
        .map(|(r, &l)| {
            let z: f64 = r.iter().map(|&v| (v as f64).exp()).sum();
            z.ln() - r[l] as f64
        })
        .sum::<f64>()
        / labels.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn standard_loss_matches_hand_softmax(t in logits(3, 5), l in prop::collection::vec(0usize..5, 3)) {
        let got = loss_standard(&t, &l).unwrap();
        prop_assert!(got >= 0.0);
        prop_assert!((got - nll(&t, &l)).abs() < 1e-6 * (1.0 + got));
    }

    #[test]
    fn per_timestep_loss_reduces_correctly(a in logits(2, 4), b in logits(2, 4), l in prop::collection::vec(0usize..4, 2)) {
        prop_assert_eq!(loss_per_timestep(&[a.clone()], &l).unwrap(), loss_standard(&a, &l).unwrap());
        let two = loss_per_timestep(&[a.clone(), b.clone()], &l).unwrap();
        prop_assert!((two - (nll(&a, &l) + nll(&b, &l)) / 2.0).abs() < 1e-6);
        let same = loss_per_timestep(&[a.clone(), a.clone(), a.clone()], &l).unwrap();
        prop_assert!((same - loss_standard(&a, &l).unwrap()).abs() < 1e-12);
    }

    // the analytic logit gradients of every loss variant against central differences
    #[test]
    fn step_gradients_match_finite_differences(
        steps in prop::collection::vec(logits(2, 3), 1..4),
        l in prop::collection::vec(0usize..3, 2),
        mode_idx in 0usize..3,
    ) {
        let (mode, target) = [
            (LossMode::Standard, TimestepTarget::RunningMean),
            (LossMode::PerTimestep, TimestepTarget::RunningMean),
            (LossMode::PerTimestep, TimestepTarget::StepOutput),
        ][mode_idx];
        let f = |s: &[Tensor]| -> f64 {
            match (mode, target) {
                (LossMode::Standard, _) => nll(running_means(s).unwrap().last().unwrap(), &l),
                (_, TimestepTarget::RunningMean) => {
                    let m = running_means(s).unwrap();
                    m.iter().map(|t| nll(t, &l)).sum::<f64>() / m.len() as f64
                }
                (_, TimestepTarget::StepOutput) => s.iter().map(|t| nll(t, &l)).sum::<f64>() / s.len() as f64,
            }
        };
        let (loss, grads) = loss_and_step_grads(&steps, &l, mode, target).unwrap();
        prop_assert!((loss - f(&steps)).abs() < 1e-5);
        let h = 1e-2f32;
        for s in 0..steps.len() {
            for i in 0..6 {
                let mut up = steps.clone();
                up[s].data_mut()[i] += h;
                let mut down = steps.clone();
                down[s].data_mut()[i] -= h;
                let fd = (f(&up) - f(&down)) / (2.0 * h as f64);
                prop_assert!((fd - grads[s].data()[i] as f64).abs() < 1e-4, "step {} idx {}", s, i);
            }
        }
    }
}

#[test]
fn uniform_logits_give_ln_k() {
    let t = Tensor::zeros(&[4, 10]);
    let l = loss_standard(&t, &[0, 3, 7, 9]).unwrap();
    assert!((l - 10f64.ln()).abs() < 1e-9);
    let confident = Tensor::new(vec![1, 2], vec![40.0, 0.0]).unwrap();
    assert!(loss_standard(&confident, &[0]).unwrap() < 1e-12);
}

fn tiny() -> (Model, TrainConfig) {
    let spec = NetworkSpec::conv3([1, 8, 8], [4, 8, 8], 2, 2);
    let cfg = TrainConfig { batch_size: 16, epochs: 20, lr0: 0.05, seed: 3, ..TrainConfig::default() };
    (Model::init(spec, 1).unwrap(), cfg)
}

#[test]
fn separable_two_class_set_is_learned() {
    let data = synth_dataset(SynthKind::Stripes, 128, 2, 0).unwrap();
    let (mut model, cfg) = tiny();
    let mut reached = None;
    train(&mut model, &data, Some(&data), &cfg, |r| {
        if reached.is_none() && r.eval_acc.last().is_some_and(|&a| a >= 0.99) {
            reached = Some(r.epoch);
        }
    })
    .unwrap();
    assert!(reached.is_some(), "train accuracy never reached 99%");
    let acc = accuracy_per_timestep(&model, &data, 2, 64).unwrap();
    assert!(acc[1] >= 0.99, "{acc:?}");
}

#[test]
fn same_seed_same_weights() {
    let data = synth_dataset(SynthKind::Blobs, 64, 2, 8).unwrap();
    let run = |seed: u64| {
        let (mut model, mut cfg) = tiny();
        cfg.epochs = 3;
        cfg.seed = seed;
        let log = train(&mut model, &data, None, &cfg, |_| {}).unwrap();
        (model, log)
    };
    let (a, log_a) = run(5);
    let (b, log_b) = run(5);
    assert_eq!(a, b);
    assert_eq!(log_a, log_b);
    let (c, log_c) = run(6);
    assert_ne!(a, c);
    assert_ne!(log_a.records[0].order_hash, log_c.records[0].order_hash);
}

#[test]
fn invalid_settings_are_rejected() {
    let data = synth_dataset(SynthKind::Blobs, 16, 2, 0).unwrap();
    let (mut model, cfg) = tiny();
    for bad in [
        TrainConfig { batch_size: 0, ..cfg.clone() },
        TrainConfig { lr0: 0.0, ..cfg.clone() },
        TrainConfig { weight_decay: -1.0, ..cfg.clone() },
        TrainConfig { t_train: Some(5), ..cfg.clone() },
    ] {
        assert!(train(&mut model, &data, None, &bad, |_| {}).is_err());
    }
    let wrong_k = synth_dataset(SynthKind::Blobs, 16, 3, 0).unwrap();
    assert!(train(&mut model, &wrong_k, None, &cfg, |_| {}).is_err());
}
