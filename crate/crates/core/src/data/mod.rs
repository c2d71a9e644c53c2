//! Datasets, the IDX reader, checkpoints and experiment configuration.

mod checkpoint;
mod config;
mod dataset;
mod idx;
mod synth;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{
    parse_config, parse_config_str, DataConfig, DataSource, ExitConfig, ExperimentConfig, ModelConfig, IDX_FILES,
};
pub use dataset::{Dataset, Normalization, Split};
pub use idx::{encode_idx_images, encode_idx_labels, load_idx, parse_idx, IMAGES_MAGIC, LABELS_MAGIC};
pub use synth::{synth_dataset, synth_dataset_sized, SynthKind, SYNTH_SIDE};
