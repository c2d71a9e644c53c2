use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Normalization, Split};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Each class is a fixed random +-1 prototype plus Gaussian noise.
    Blobs,
    /// Each class is a set of horizontal stripes with a class-specific phase.
    Stripes,
}

pub const SYNTH_SIDE: usize = 8;

/// Deterministic, class-balanced `(n, 1, 8, 8)` toy dataset.
pub fn synth_dataset(kind: SynthKind, n: usize, num_classes: usize, seed: u64) -> Result<Dataset> {
    synth_dataset_sized(kind, n, num_classes, SYNTH_SIDE, seed)
}

pub fn synth_dataset_sized(kind: SynthKind, n: usize, num_classes: usize, side: usize, seed: u64) -> Result<Dataset> {
    if num_classes < 2 || n < num_classes {
        return Err(Error::arg(format!(
            "synthetic data needs num_classes >= 2 and n >= num_classes (got n = {n}, K = {num_classes})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = side * side;
    let prototypes: Vec<Vec<f32>> = match kind {
        SynthKind::Blobs => (0..num_classes)
            .map(|_| (0..pixels).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
            .collect(),
        SynthKind::Stripes => (0..num_classes)
            .map(|c| {
                (0..pixels)
                    .map(|p| if (p / side + c) % num_classes == 0 { 1.5 } else { -0.5 })
                    .collect()
            })
            .collect(),
    };
    let noise = Normal::new(0.0f32, 0.3).expect("valid sigma");
    let mut labels: Vec<usize> = (0..n).map(|i| i % num_classes).collect();
    labels.shuffle(&mut rng);
    let mut data = Vec::with_capacity(n * pixels);
    for &label in &labels {
        data.extend(prototypes[label].iter().map(|&v| v + noise.sample(&mut rng)));
    }
    let images = Tensor::new(vec![n, 1, side, side], data)?;
    Dataset::new(images, labels, num_classes, Split::Train, Normalization::IDENTITY)
}
