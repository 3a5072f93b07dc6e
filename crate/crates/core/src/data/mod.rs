//! Reading and writing captions, features, embeddings, checkpoints and run
//! configuration.

mod captions;
mod checkpoint;
mod config;
mod embeddings;
mod features;

pub use captions::{CaptionKey, CaptionRecord, CaptionSet};
pub use checkpoint::{load_checkpoint, save_checkpoint, Manifest, ModelCheckpoint, CHECKPOINT_VERSION};
pub use config::{OutputActivation, RunConfig, ValidationMetric, DEFAULT_SEED};
pub use embeddings::EmbeddingTable;
pub use features::{FeatureStore, FEATURE_MAGIC, FEATURE_VERSION};
