//! Cost model structure, shipped calibration and device variation.

use dtsnn::imc::{
    apply_device_variation, latency, map_network, sigma_e_energy, static_breakdown, variation_factors, ActivityTrace,
    ArchConfig, CostModel,
};
use dtsnn::snn::{LayerParams, Model, NetworkSpec};
use proptest::prelude::*;

fn desk_cost() -> CostModel {
    CostModel::new(&NetworkSpec::desk_mnist(), ArchConfig::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn activity_term_is_linear(a in prop::collection::vec(0.0f64..2000.0, 4), t in 1usize..6) {
        let m = desk_cost();
        let e0 = m.step(&[0.0; 4], t).unwrap().total();
        let e1 = m.step(&a, t).unwrap().total();
        let doubled: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let e2 = m.step(&doubled, t).unwrap().total();
        prop_assert!(e0 > 0.0);
        prop_assert!(((e2 - e0) - 2.0 * (e1 - e0)).abs() <= 1e-12 * e2);
    }

    #[test]
    fn reports_compose_from_timesteps(steps in prop::collection::vec(prop::collection::vec(0.0f64..1500.0, 4), 1..9)) {
        let m = desk_cost();
        let s = m.static_run(&steps).unwrap();
        let d = m.dynamic(&steps).unwrap();
        let per_step: Vec<f64> = steps.iter().enumerate().map(|(t, a)| m.step(a, t + 1).unwrap().total()).collect();
        prop_assert_eq!(&s.step_energies, &per_step);
        prop_assert_eq!(s.energy, per_step.iter().sum::<f64>());
        prop_assert_eq!(s.sigma_e_energy, 0.0);
        prop_assert_eq!(d.sigma_e_energy, steps.len() as f64 * 2e-5 * per_step[0]);
        prop_assert_eq!(d.energy, per_step.iter().sum::<f64>() + d.sigma_e_energy);
        prop_assert_eq!(s.latency, steps.len() as f64);
        prop_assert_eq!(s.edp, s.energy * s.latency);
        prop_assert_eq!(d.edp, d.energy * d.latency);
    }

    #[test]
    fn fixed_activity_energy_ratio_is_bounded(a in prop::collection::vec(0.0f64..1500.0, 4), t in 1usize..9) {
        let m = desk_cost();
        let steps = vec![a; t];
        let e = m.static_run(&steps).unwrap().energy;
        let e1 = m.static_run(&steps[..1]).unwrap().energy;
        prop_assert!(e / e1 >= 1.0 - 1e-12 && e / e1 <= t as f64 + 1e-12);
    }

    #[test]
    fn latency_is_additive(a in 0usize..50, b in 0usize..50) {
        let arch = ArchConfig::default();
        prop_assert_eq!(latency(a + b, &arch), latency(a, &arch) + latency(b, &arch));
    }
}

#[test]
fn latency_and_sigma_e_anchors() {
    let arch = ArchConfig::default();
    assert_eq!(latency(1, &arch), arch.latency_per_timestep);
    assert_eq!(latency(8, &arch), 8.0 * latency(1, &arch));
    assert_eq!(sigma_e_energy(3.0, 0, 2e-5), 0.0);
    assert_eq!(sigma_e_energy(3.0, 1, 2e-5), 2e-5 * 3.0);
    assert_eq!(sigma_e_energy(3.0, 4, 2e-5), 8e-5 * 3.0);
    assert_eq!(arch.sigma_e_ratio, 2e-5);
}

#[test]
fn shipped_calibration_meets_targets() {
    let arch = ArchConfig::default();
    let mapping = map_network(&NetworkSpec::desk_mnist(), &arch).unwrap();
    let trace = ActivityTrace::reference();
    assert_eq!(trace.steps.len(), 8);
    let e = |t| static_breakdown(&mapping, &trace, t, &arch).unwrap();
    let ratio = e(8).total() / e(1).total();
    assert!((ratio / 4.9 - 1.0).abs() < 0.05, "E(8)/E(1) = {ratio}");
    let shares = e(4).shares();
    assert!((shares[0] - 0.25).abs() < 0.03, "{shares:?}");
    assert!((shares[1] - 0.45).abs() < 0.03, "{shares:?}");
    assert!((shares.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn variation_sampler_statistics() {
    let f = variation_factors(1_000_000, 0.2, 42).unwrap();
    let n = f.len() as f64;
    let mean = f.iter().map(|v| v - 1.0).sum::<f64>() / n;
    let var = f.iter().map(|v| (v - 1.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 1e-3, "mean {mean}");
    assert!((var.sqrt() / 0.2 - 1.0).abs() < 0.02, "std {}", var.sqrt());
}

#[test]
fn variation_touches_only_crossbar_weights() {
    let model = Model::init(NetworkSpec::conv3([1, 8, 8], [2, 3, 3], 3, 2), 4).unwrap();
    let same = apply_device_variation(&model, 0.0, 9).unwrap();
    assert_eq!(same, model);
    let a = apply_device_variation(&model, 0.2, 9).unwrap();
    let b = apply_device_variation(&model, 0.2, 9).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, apply_device_variation(&model, 0.2, 10).unwrap());
    for (p, q) in model.params().iter().zip(a.params()) {
        match (p, q) {
            (LayerParams::Conv { weight: w0 }, LayerParams::Conv { weight: w1 }) => assert_ne!(w0, w1),
            (LayerParams::Classifier { weight: w0, bias: b0 }, LayerParams::Classifier { weight: w1, bias: b1 }) => {
                assert_ne!(w0, w1);
                assert_eq!(b0, b1);
            }
            (LayerParams::Norm(n0), LayerParams::Norm(n1)) => assert_eq!(n0, n1),
            (x, y) => assert_eq!(x, y),
        }
    }
    assert!(apply_device_variation(&model, -0.1, 0).is_err());
}
