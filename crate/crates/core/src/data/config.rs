//! Run configuration, read from a single JSON file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::Segment;

pub const DEFAULT_SEED: u64 = 20170815;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutputActivation {
    /// ReLU on the output layer, as on every hidden layer.
    #[default]
    Relu,
    /// Affine output without a nonlinearity.
    Linear,
}

/// Score the learning-rate schedule watches after each epoch. Higher is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationMetric {
    /// R@1 + R@5 + R@10 of caption retrieval on the validation split.
    #[default]
    RecallSum,
    /// Negative mean MSE over validation pairs.
    NegativeMse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub vectorizers: Vec<Segment>,
    /// Widths of the MLP hidden layers; the output width is the feature dim.
    pub hidden_sizes: Vec<usize>,
    pub gru_hidden: usize,
    /// Width of the GRU word embedding. Must match the pretrained table when
    /// one is supplied; required otherwise.
    pub embedding_dim: Option<usize>,
    pub min_count: usize,
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub halve_patience: usize,
    pub stop_patience: usize,
    pub seed: u64,
    pub output_activation: OutputActivation,
    pub validation_metric: ValidationMetric,
    pub threads: usize,

    pub train_captions: Option<PathBuf>,
    pub train_features: Option<PathBuf>,
    pub val_captions: Option<PathBuf>,
    pub val_features: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            vectorizers: vec![Segment::Bow, Segment::MeanEmbedding, Segment::Gru],
            hidden_sizes: vec![2048],
            gru_hidden: 1024,
            embedding_dim: None,
            min_count: 5,
            learning_rate: 1e-4,
            decay: 0.9,
            epsilon: 1e-6,
            dropout: 0.2,
            batch_size: 100,
            max_epochs: 100,
            halve_patience: 3,
            stop_patience: 10,
            seed: DEFAULT_SEED,
            output_activation: OutputActivation::Relu,
            validation_metric: ValidationMetric::RecallSum,
            threads: 1,
            train_captions: None,
            train_features: None,
            val_captions: None,
            val_features: None,
            embeddings: None,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_owned()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be > 0");
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return fail("decay must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return fail("epsilon must be > 0");
        }
        if !(self.dropout >= 0.0 && self.dropout < 1.0) {
            return fail("dropout must lie in [0, 1)");
        }
        if self.vectorizers.is_empty() {
            return fail("at least one vectorizer must be selected");
        }
        for (i, s) in self.vectorizers.iter().enumerate() {
            if self.vectorizers[..i].contains(s) {
                return fail("vectorizers must not repeat");
            }
        }
        if self.hidden_sizes.contains(&0) {
            return fail("hidden layer sizes must be positive");
        }
        if self.uses(Segment::Gru) && self.gru_hidden == 0 {
            return fail("gru_hidden must be positive");
        }
        if self.embedding_dim == Some(0) {
            return fail("embedding_dim must be positive");
        }
        if self.min_count == 0 {
            return fail("min_count must be >= 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1");
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be >= 1");
        }
        if self.halve_patience == 0 || self.stop_patience == 0 {
            return fail("patience values must be >= 1");
        }
        if self.threads == 0 {
            return fail("threads must be >= 1");
        }
        Ok(())
    }

    pub fn uses(&self, segment: Segment) -> bool {
        self.vectorizers.contains(&segment)
    }

    /// Active segments in canonical order.
    pub fn segments(&self) -> Vec<Segment> {
        Segment::CANONICAL.into_iter().filter(|s| self.uses(*s)).collect()
    }
}
