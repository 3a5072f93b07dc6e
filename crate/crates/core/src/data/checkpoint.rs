//! Model checkpoints.
//!
//! A checkpoint is a directory holding
//!
//! - `manifest.json`: format version, segment layout, tensor names and shapes
//!   in serialization order, hyperparameters, and the vocabulary hash;
//! - `params.bin`: every tensor's values as concatenated little-endian `f32`,
//!   in manifest order;
//! - `vocab.txt`: the training vocabulary;
//! - `embeddings.txt`: the frozen mean-embedding table, when that segment is used.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{EmbeddingTable, OutputActivation, RunConfig, ValidationMetric};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{Dense, GruParams, MlpParams, TensorSpec, W2VVParams};
use crate::text::{Segment, SegmentLayout, SentenceEncoder, Vocabulary};

pub const CHECKPOINT_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";
const PARAMS: &str = "params.bin";
const VOCAB: &str = "vocab.txt";
const EMBEDDINGS: &str = "embeddings.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub halve_patience: usize,
    pub stop_patience: usize,
    pub min_count: usize,
    pub seed: u64,
    pub validation_metric: ValidationMetric,
}

impl From<&RunConfig> for Hyperparameters {
    fn from(c: &RunConfig) -> Self {
        Hyperparameters {
            learning_rate: c.learning_rate,
            decay: c.decay,
            epsilon: c.epsilon,
            dropout: c.dropout,
            batch_size: c.batch_size,
            max_epochs: c.max_epochs,
            halve_patience: c.halve_patience,
            stop_patience: c.stop_patience,
            min_count: c.min_count,
            seed: c.seed,
            validation_metric: c.validation_metric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub layout: SegmentLayout,
    /// MLP widths: sentence vector, hidden layers, feature dim.
    pub layer_sizes: Vec<usize>,
    pub output_activation: OutputActivation,
    pub gru_hidden: Option<usize>,
    pub embedding_dim: Option<usize>,
    pub vocabulary_size: usize,
    pub vocabulary_hash: String,
    pub tensors: Vec<TensorSpec>,
    pub hyperparameters: Hyperparameters,
    /// Epoch the parameters come from, when produced by training.
    pub epoch: Option<usize>,
    pub validation_score: Option<f64>,
}

/// Parameters plus everything needed to encode new captions with them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub manifest: Manifest,
    pub params: W2VVParams<f32>,
    pub vocab: Vocabulary,
    pub table: Option<EmbeddingTable>,
}

impl ModelCheckpoint {
    pub fn new(
        params: W2VVParams<f32>,
        encoder: &SentenceEncoder,
        config: &RunConfig,
        epoch: Option<usize>,
        validation_score: Option<f64>,
    ) -> Result<Self> {
        if params.layout != encoder.layout(config.gru_hidden) {
            return Err(Error::Layout(
                "parameters and encoder disagree on the layout".into(),
            ));
        }
        let table = if encoder.uses(Segment::MeanEmbedding) {
            encoder.table().cloned()
        } else {
            None
        };
        let manifest = Manifest {
            format_version: CHECKPOINT_VERSION,
            layout: params.layout.clone(),
            layer_sizes: params.mlp.sizes(),
            output_activation: params.mlp.output_activation,
            gru_hidden: params.gru.as_ref().map(|g| g.hidden_size()),
            embedding_dim: params.gru.as_ref().map(|g| g.input_size()),
            vocabulary_size: encoder.vocab().len(),
            vocabulary_hash: encoder.vocab().content_hash(),
            tensors: params.tensor_specs(),
            hyperparameters: config.into(),
            epoch,
            validation_score: validation_score.filter(|s| s.is_finite()),
        };
        Ok(ModelCheckpoint {
            manifest,
            params,
            vocab: encoder.vocab().clone(),
            table,
        })
    }

    /// Contents of `params.bin`.
    pub fn params_blob(&self) -> Vec<u8> {
        let mut blob = Vec::with_capacity(self.params.param_count() * 4);
        for t in self.params.tensors() {
            for v in t {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        blob
    }

    /// Content hash identifying these exact parameters and vocabulary.
    pub fn identity(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.manifest.vocabulary_hash.as_bytes());
        h.update(self.params_blob());
        hex::encode(h.finalize())
    }

    pub fn encoder(&self) -> Result<SentenceEncoder> {
        SentenceEncoder::new(
            self.vocab.clone(),
            self.table.clone(),
            &self.params.layout.segments(),
        )
    }

    /// Same model with a different frozen table for the mean-embedding branch.
    pub fn encoder_with_table(&self, table: EmbeddingTable) -> Result<SentenceEncoder> {
        if let Some(slot) = self.params.layout.slot(Segment::MeanEmbedding) {
            if slot.len != table.dim() {
                return Err(Error::dim(slot.len, table.dim(), "replacement embedding table"));
            }
        }
        SentenceEncoder::new(self.vocab.clone(), Some(table), &self.params.layout.segments())
    }
}

pub fn save_checkpoint(checkpoint: &ModelCheckpoint, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = serde_json::to_string_pretty(&checkpoint.manifest).expect("manifest serializes");
    write(dir.join(MANIFEST), manifest.as_bytes())?;
    write(dir.join(PARAMS), &checkpoint.params_blob())?;
    write(dir.join(VOCAB), checkpoint.vocab.to_text().as_bytes())?;
    let emb = dir.join(EMBEDDINGS);
    match &checkpoint.table {
        Some(t) => write(&emb, t.to_text().as_bytes())?,
        None if emb.exists() => fs::remove_file(&emb).map_err(|e| Error::io(&emb, e))?,
        None => {}
    }
    Ok(())
}

fn write(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<ModelCheckpoint> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let version: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::parse(&manifest_path, e.line(), e.to_string()))?;
    let found = version
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Corrupt("manifest lacks format_version".into()))?;
    if found != CHECKPOINT_VERSION as u64 {
        return Err(Error::UnsupportedVersion {
            found: found.min(u32::MAX as u64) as u32,
            expected: CHECKPOINT_VERSION,
        });
    }
    let manifest: Manifest =
        serde_json::from_value(version).map_err(|e| Error::Corrupt(format!("manifest: {e}")))?;

    let vocab_path = dir.join(VOCAB);
    let vocab_text = fs::read_to_string(&vocab_path).map_err(|e| Error::io(&vocab_path, e))?;
    let vocab = Vocabulary::from_text(&vocab_text, &vocab_path)?;
    if vocab.content_hash() != manifest.vocabulary_hash || vocab.len() != manifest.vocabulary_size {
        return Err(Error::Corrupt(
            "vocabulary does not match the manifest hash".into(),
        ));
    }

    let mut params = skeleton(&manifest)?;
    if params.tensor_specs() != manifest.tensors {
        return Err(Error::Corrupt(
            "tensor list does not match the declared architecture".into(),
        ));
    }
    let params_path = dir.join(PARAMS);
    let blob = fs::read(&params_path).map_err(|e| Error::io(&params_path, e))?;
    let expected: usize = manifest.tensors.iter().map(TensorSpec::len).sum();
    if blob.len() != expected * 4 {
        return Err(Error::Corrupt(format!(
            "params.bin holds {} bytes, manifest declares {} floats",
            blob.len(),
            expected
        )));
    }
    let mut chunks = blob.chunks_exact(4);
    for t in params.tensors_mut() {
        for (v, c) in t.iter_mut().zip(&mut chunks) {
            *v = f32::from_le_bytes(c.try_into().unwrap());
        }
    }

    let table = if manifest.layout.slot(Segment::MeanEmbedding).is_some() {
        let path = dir.join(EMBEDDINGS);
        let t = EmbeddingTable::load(&path, None)?;
        let slot = manifest.layout.slot(Segment::MeanEmbedding).unwrap();
        if t.dim() != slot.len {
            return Err(Error::Corrupt(
                "embedding table width does not match layout".into(),
            ));
        }
        Some(t)
    } else {
        None
    };
    Ok(ModelCheckpoint {
        manifest,
        params,
        vocab,
        table,
    })
}

/// Zero-valued parameters with the architecture the manifest declares.
fn skeleton(m: &Manifest) -> Result<W2VVParams<f32>> {
    let corrupt = |msg: &str| Error::Corrupt(msg.to_owned());
    if m.layer_sizes.len() < 2 {
        return Err(corrupt("layer_sizes needs input and output widths"));
    }
    if m.layer_sizes[0] != m.layout.total_len() {
        return Err(corrupt("layer_sizes[0] differs from the layout length"));
    }
    if let Some(slot) = m.layout.slot(Segment::Bow) {
        if slot.len != m.vocabulary_size {
            return Err(corrupt("bow segment length differs from the vocabulary size"));
        }
    }
    let gru = match (m.layout.slot(Segment::Gru), m.gru_hidden, m.embedding_dim) {
        (Some(slot), Some(h), Some(e)) if slot.len == h => Some(GruParams::zeros(m.vocabulary_size, e, h)),
        (None, None, None) => None,
        _ => return Err(corrupt("GRU fields disagree with the layout")),
    };
    let mlp = MlpParams {
        layers: m
            .layer_sizes
            .windows(2)
            .map(|w| Dense {
                weight: Matrix::zeros(w[1], w[0]),
                bias: vec![0.0; w[1]],
            })
            .collect(),
        output_activation: m.output_activation,
    };
    W2VVParams::new(m.layout.clone(), gru, mlp).map_err(|e| Error::Corrupt(e.to_string()))
}
