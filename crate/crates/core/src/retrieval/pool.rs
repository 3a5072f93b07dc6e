use std::collections::HashSet;

use rayon::prelude::*;

use crate::data::{CaptionKey, CaptionSet, FeatureStore, ModelCheckpoint};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, norm};
use crate::nn::{predict, W2VVParams};
use crate::parallel::thread_pool;
use crate::text::SentenceEncoder;

/// Predicted visual features r(q) for a fixed set of captions.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPool {
    keys: Vec<CaptionKey>,
    dim: usize,
    data: Vec<f32>,
    norms: Vec<f64>,
    /// Position of each row's key in ascending key order; the ranking tie-break.
    key_rank: Vec<u32>,
    /// Identity of the checkpoint that produced the rows, when known.
    source: Option<String>,
}

impl EncodedPool {
    pub fn new(keys: Vec<CaptionKey>, dim: usize, data: Vec<f32>, source: Option<String>) -> Result<Self> {
        if data.len() != keys.len() * dim {
            return Err(Error::dim(keys.len() * dim, data.len(), "pool matrix size"));
        }
        if !all_finite(&data) {
            return Err(Error::NonFinite {
                context: "encoded pool".into(),
            });
        }
        let mut seen = HashSet::with_capacity(keys.len());
        for k in &keys {
            if !seen.insert(k) {
                return Err(Error::DuplicateKey { key: k.to_string() });
            }
        }
        let norms = if dim == 0 {
            vec![0.0; keys.len()]
        } else {
            data.chunks_exact(dim).map(norm).collect()
        };
        let mut order: Vec<usize> = (0..keys.len()).collect();
        order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
        let mut key_rank = vec![0u32; keys.len()];
        for (rank, &i) in order.iter().enumerate() {
            key_rank[i] = rank as u32;
        }
        Ok(EncodedPool {
            keys,
            dim,
            data,
            norms,
            key_rank,
            source,
        })
    }

    /// Reads a pool stored in the feature-file format, ids being caption keys.
    pub fn from_feature_store(store: &FeatureStore) -> Result<Self> {
        let keys = store
            .ids()
            .iter()
            .map(|id| id.parse::<CaptionKey>().map_err(Error::Dataset))
            .collect::<Result<Vec<_>>>()?;
        let data = store.iter().flat_map(|(_, v)| v.iter().copied()).collect();
        Self::new(keys, store.dim(), data, None)
    }

    pub fn to_feature_store(&self) -> Result<FeatureStore> {
        let mut store = FeatureStore::new(self.dim)?;
        for (i, k) in self.keys.iter().enumerate() {
            store.push(k.to_string(), self.vector(i))?;
        }
        Ok(store)
    }

    pub fn keys(&self) -> &[CaptionKey] {
        &self.keys
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn norm(&self, i: usize) -> f64 {
        self.norms[i]
    }

    pub(crate) fn key_rank(&self, i: usize) -> u32 {
        self.key_rank[i]
    }

    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }
}

/// Encodes every caption in eval mode. Errors name the offending caption.
pub fn encode_captions(
    params: &W2VVParams<f32>,
    encoder: &SentenceEncoder,
    captions: &CaptionSet,
    threads: usize,
    source: Option<String>,
) -> Result<EncodedPool> {
    let rows: Vec<Result<Vec<f32>>> = thread_pool(threads)?.install(|| {
        captions
            .records()
            .par_iter()
            .map(|rec| {
                predict(params, &encoder.encode(&rec.text)).map_err(|e| Error::Caption {
                    key: rec.key.to_string(),
                    source: Box::new(e),
                })
            })
            .collect()
    });
    let dim = params.output_size();
    let mut data = Vec::with_capacity(rows.len() * dim);
    for row in rows {
        data.extend(row?);
    }
    EncodedPool::new(captions.keys().cloned().collect(), dim, data, source)
}

pub fn encode_pool(
    checkpoint: &ModelCheckpoint,
    captions: &CaptionSet,
    threads: usize,
) -> Result<EncodedPool> {
    encode_captions(
        &checkpoint.params,
        &checkpoint.encoder()?,
        captions,
        threads,
        Some(checkpoint.identity()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_store_round_trip() {
        let keys = vec![CaptionKey::new("b", 0), CaptionKey::new("a", 1)];
        let pool = EncodedPool::new(keys, 2, vec![1.0, 2.0, 3.0, 4.0], None).unwrap();
        let store = pool.to_feature_store().unwrap();
        assert_eq!(store.ids(), ["b#0", "a#1"]);
        assert_eq!(EncodedPool::from_feature_store(&store).unwrap(), pool);
        assert_eq!((pool.key_rank(0), pool.key_rank(1)), (1, 0));
    }

    #[test]
    fn rejects_duplicates_and_bad_sizes() {
        let k = CaptionKey::new("a", 0);
        assert!(EncodedPool::new(vec![k.clone(), k.clone()], 1, vec![0.0, 0.0], None).is_err());
        assert!(EncodedPool::new(vec![k], 2, vec![0.0], None).is_err());
    }
}
