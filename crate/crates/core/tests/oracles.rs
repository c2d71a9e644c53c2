//! Kernels and mapping checked against naive reference implementations.

use dtsnn::imc::{map_layer, ArchConfig};
use dtsnn::numerics::{avg_pool2d, conv2d, fully_connected, ConvParams, Tensor};
use dtsnn::snn::{lif_step, LifConfig, LifState};
use proptest::prelude::*;

mod common;
use common::{conv_naive, fc_naive, lif_scalar, mapping_oracle, max_abs_diff, pool_naive};

fn tensor(shape: &[usize], values: &[f32]) -> Tensor {
    Tensor::new(shape.to_vec(), values[..shape.iter().product::<usize>()].to_vec()).unwrap()
}

fn values(len: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-2.0f32..2.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn conv2d_matches_nested_loops(
        n in 1usize..3, c in 1usize..4, o in 1usize..5,
        h in 3usize..9, w in 3usize..9, k in 1usize..4,
        stride in 1usize..3, padding in 0usize..2,
        xs in values(2 * 3 * 8 * 8), ws in values(4 * 3 * 3 * 3),
    ) {
        prop_assume!(h + 2 * padding >= k && w + 2 * padding >= k);
        let p = ConvParams::square(c, o, k, stride, padding);
        let x = tensor(&[n, c, h, w], &xs);
        let wt = tensor(&[o, c, k, k], &ws);
        let got = conv2d(&x, &wt, &p).unwrap();
        prop_assert!(max_abs_diff(&got, &conv_naive(&x, &wt, &p)) < 1e-5);
    }

    #[test]
    fn fully_connected_matches_nested_loops(
        n in 1usize..5, f_in in 1usize..40, f_out in 1usize..12,
        xs in values(4 * 39), ws in values(39 * 11), bs in values(11),
    ) {
        let x = tensor(&[n, f_in], &xs);
        let w = tensor(&[f_out, f_in], &ws);
        let b = tensor(&[f_out], &bs);
        let got = fully_connected(&x, &w, &b).unwrap();
        prop_assert!(max_abs_diff(&got, &fc_naive(&x, &w, &b)) < 1e-5);
    }

    #[test]
    fn avg_pool_matches_nested_loops(
        n in 1usize..3, c in 1usize..4, win in 1usize..4, oh in 1usize..5, ow in 1usize..5,
        xs in values(2 * 3 * 12 * 12),
    ) {
        let (h, w) = (oh * win, ow * win);
        let x = tensor(&[n, c, h, w], &xs);
        let got = avg_pool2d(&x, win).unwrap();
        prop_assert_eq!(got.shape(), &[n, c, oh, ow][..]);
        prop_assert!(max_abs_diff(&got, &pool_naive(&x, win)) < 1e-5);
    }

    #[test]
    fn lif_matches_scalar_recurrence(
        tau in 0.05f32..=1.0, v_th in 0.1f32..2.0,
        currents in prop::collection::vec(-1.0f32..2.5, 8 * 6),
    ) {
        let cfg = LifConfig { tau, v_th };
        let mut state = LifState::new(&[6]);
        let mut spikes = Vec::new();
        let mut pots = Vec::new();
        for t in 0..8 {
            let step = Tensor::new(vec![6], currents[t * 6..(t + 1) * 6].to_vec()).unwrap();
            spikes.push(lif_step(&mut state, &step, &cfg).unwrap());
            pots.push(state.u.clone());
        }
        for j in 0..6 {
            let seq: Vec<f32> = (0..8).map(|t| currents[t * 6 + j]).collect();
            let (s, u) = lif_scalar(tau, v_th, &seq);
            for t in 0..8 {
                prop_assert_eq!(spikes[t].data()[j], s[t]);
                prop_assert_eq!(pots[t].data()[j], u[t]);
            }
        }
    }

    #[test]
    fn mapping_matches_ceiling_arithmetic(
        fan_in in 1usize..5000, fan_out in 1usize..600,
        size_pow in 4u32..9, device_bits in prop::sample::select(vec![1u32, 2, 4, 8]),
        per_tile in 1usize..128,
    ) {
        let arch = ArchConfig {
            crossbar_size: 1 << size_pow,
            crossbars_per_tile: per_tile,
            crossbars_per_pe: 1,
            device_bits,
            weight_bits: 8,
            ..ArchConfig::default()
        };
        let m = map_layer(fan_in, fan_out, &arch).unwrap();
        let (slices, rows, cols, xbars, tiles) = mapping_oracle(fan_in, fan_out, 1 << size_pow, device_bits, 8, per_tile);
        prop_assert_eq!(m.bit_slices, slices);
        prop_assert_eq!(m.row_blocks, rows);
        prop_assert_eq!(m.col_blocks, cols);
        prop_assert_eq!(m.crossbar_count, xbars);
        prop_assert_eq!(m.tile_count, tiles);
        let x = 1usize << size_pow;
        // enough cells for every weight slice, and no spare block
        prop_assert!(m.crossbar_count * x * x >= fan_in * fan_out * slices);
    }
}

#[test]
fn lif_worked_example() {
    let cfg = LifConfig::default();
    let mut state = LifState::new(&[1]);
    let s = lif_step(&mut state, &Tensor::new(vec![1], vec![2.0]).unwrap(), &cfg).unwrap();
    assert_eq!((s.data()[0], state.u.data()[0]), (1.0, 0.0));
    let s = lif_step(&mut state, &Tensor::new(vec![1], vec![1.0]).unwrap(), &cfg).unwrap();
    assert_eq!((s.data()[0], state.u.data()[0]), (0.0, 1.0));
}
