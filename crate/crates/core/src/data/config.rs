//! TOML experiment configuration with `[model]`, `[train]`, `[exit]`,
//! `[hardware]` and `[data]` sections. Every section and key is optional;
//! unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Normalization, Split};
use super::idx::load_idx;
use super::synth::{synth_dataset_sized, SynthKind};
use crate::error::{Error, Result};
use crate::imc::ArchConfig;
use crate::snn::{LayerSpec, LifConfig, NetworkSpec};
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// `(C, H, W)` of one input.
    pub input_shape: [usize; 3],
    /// Output channels of the three conv blocks.
    pub channels: [usize; 3],
    pub num_classes: usize,
    pub t_max: usize,
    pub tau: f32,
    pub v_th: f32,
    /// Explicit layer list; replaces the three-block network when set.
    pub layers: Option<Vec<LayerSpec>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let spec = NetworkSpec::desk_mnist();
        Self {
            input_shape: [1, 28, 28],
            channels: [8, 16, 16],
            num_classes: spec.num_classes,
            t_max: spec.t_max,
            tau: spec.lif.tau,
            v_th: spec.lif.v_th,
            layers: None,
        }
    }
}

impl ModelConfig {
    pub fn network(&self) -> Result<NetworkSpec> {
        let mut spec = NetworkSpec::conv3(self.input_shape, self.channels, self.num_classes, self.t_max);
        if let Some(layers) = &self.layers {
            spec.layers = layers.clone();
        }
        spec.lif = LifConfig {
            tau: self.tau,
            v_th: self.v_th,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExitConfig {
    /// Threshold used by single-point evaluation.
    pub theta: f64,
    pub theta_grid: Vec<f64>,
}

impl Default for ExitConfig {
    fn default() -> Self {
        Self {
            theta: 0.3,
            theta_grid: crate::exit::default_theta_grid(),
        }
    }
}

impl ExitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.theta_grid.is_empty() {
            return Err(Error::Config("exit.theta_grid must not be empty".into()));
        }
        for &t in std::iter::once(&self.theta).chain(&self.theta_grid) {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("exit threshold {t} violates 0 <= theta <= 1")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Idx,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Directory holding the four IDX files under their standard names.
    pub dir: PathBuf,
    /// Use only the first `n` training samples.
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub normalization: Normalization,
    pub synth_kind: SynthKind,
    pub synth_train: usize,
    pub synth_test: usize,
    pub synth_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Idx,
            dir: PathBuf::from("data/mnist"),
            train_limit: None,
            test_limit: None,
            normalization: Normalization::MNIST,
            synth_kind: SynthKind::Blobs,
            synth_train: 512,
            synth_test: 256,
            synth_seed: 0,
        }
    }
}

pub const IDX_FILES: [(Split, &str, &str); 2] = [
    (Split::Train, "train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    (Split::Test, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
];

impl DataConfig {
    /// IDX image and label paths of `split`.
    pub fn idx_paths(&self, split: Split) -> (PathBuf, PathBuf) {
        let (_, img, lbl) = IDX_FILES.iter().find(|(s, ..)| *s == split).expect("both splits listed");
        (self.dir.join(img), self.dir.join(lbl))
    }

    /// Loads `split`, shaped for `spec`. Relative directories resolve
    /// against `base`.
    pub fn load(&self, split: Split, spec: &NetworkSpec, base: &Path) -> Result<Dataset> {
        let limit = match split {
            Split::Train => self.train_limit,
            Split::Test => self.test_limit,
        };
        let data = match self.source {
            DataSource::Idx => {
                let (img, lbl) = self.idx_paths(split);
                load_idx(&base.join(img), &base.join(lbl), split, self.normalization)?
            }
            DataSource::Synthetic => {
                let side = *spec.input_shape.last().unwrap_or(&8);
                // both splits share class prototypes: draw one set and cut it
                let total = self.synth_train + self.synth_test;
                let all = synth_dataset_sized(self.synth_kind, total, spec.num_classes, side, self.synth_seed)?;
                let (start, n) = match split {
                    Split::Train => (0, self.synth_train),
                    Split::Test => (self.synth_train, self.synth_test),
                };
                let idx: Vec<usize> = (start..start + n).collect();
                let (images, labels) = all.batch(&idx)?;
                Dataset::new(images, labels, spec.num_classes, split, Normalization::IDENTITY)?
            }
        };
        let data = match limit {
            Some(n) => data.take(n)?,
            None => data,
        };
        data.with_num_classes(spec.num_classes)
    }

    pub fn validate(&self) -> Result<()> {
        self.normalization.validate()?;
        if self.train_limit == Some(0) || self.test_limit == Some(0) {
            return Err(Error::Config("data limits must be >= 1 when set".into()));
        }
        if self.source == DataSource::Synthetic && (self.synth_train == 0 || self.synth_test == 0) {
            return Err(Error::Config("synthetic splits must hold at least one sample".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub exit: ExitConfig,
    pub hardware: ArchConfig,
    pub data: DataConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let spec = self.model.network()?;
        self.train.validate()?;
        if let Some(t) = self.train.t_train {
            if t > spec.t_max {
                return Err(Error::Config(format!("train.t_train = {t} exceeds model.t_max = {}", spec.t_max)));
            }
        }
        self.exit.validate()?;
        self.hardware.validate()?;
        self.data.validate()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }
}

/// Parses and validates configuration text.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}
