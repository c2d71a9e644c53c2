use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Affine input normalization `(x - mean) / std`, applied after scaling
/// pixels to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub mean: f32,
    pub std: f32,
}

impl Normalization {
    pub const IDENTITY: Normalization = Normalization { mean: 0.0, std: 1.0 };

    /// Pixel statistics of the MNIST training set.
    pub const MNIST: Normalization = Normalization {
        mean: 0.1307,
        std: 0.3081,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.std > 0.0) || !self.mean.is_finite() || !self.std.is_finite() {
            return Err(Error::Config(format!(
                "normalization {self:?} violates the invariant std > 0"
            )));
        }
        Ok(())
    }
}

impl Default for Normalization {
    fn default() -> Self {
        Self::MNIST
    }
}

/// Labeled images, `(N, C, H, W)`, already normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    split: Split,
    normalization: Normalization,
}

impl Dataset {
    pub fn new(
        images: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        split: Split,
        normalization: Normalization,
    ) -> Result<Self> {
        let (n, _, _, _) = images.dims4()?;
        if n == 0 {
            return Err(Error::arg("a dataset needs at least one sample"));
        }
        if labels.len() != n {
            return Err(Error::Consistency(format!("{n} images but {} labels", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Consistency(format!("label {bad} >= num_classes {num_classes}")));
        }
        Ok(Self {
            images,
            labels,
            num_classes,
            split,
            normalization,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// `(C, H, W)` of one sample.
    pub fn item_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    /// One sample as a `(1, C, H, W)` tensor.
    pub fn sample(&self, index: usize) -> Result<Tensor> {
        self.images.slice_batch(index, 1)
    }

    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let images = self.images.gather_batch(indices)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok((images, labels))
    }

    /// The first `n` samples (or all of them when `n` exceeds the size).
    pub fn take(&self, n: usize) -> Result<Dataset> {
        let n = n.min(self.len());
        Dataset::new(
            self.images.slice_batch(0, n)?,
            self.labels[..n].to_vec(),
            self.num_classes,
            self.split,
            self.normalization,
        )
    }

    /// Overrides the class count (e.g. from the network description).
    pub fn with_num_classes(self, num_classes: usize) -> Result<Dataset> {
        Dataset::new(self.images, self.labels, num_classes, self.split, self.normalization)
    }

    pub fn label_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }
}
