//! Seeded synthetic data: media grouped into latent topics, captions mixing
//! a medium-specific word, topic words and filler.

#![allow(dead_code)]

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use w2vv::data::{CaptionKey, CaptionRecord, CaptionSet, EmbeddingTable, FeatureStore, RunConfig};
use w2vv::text::Segment;

pub const TOPICS: usize = 4;
pub const WORDS_PER_TOPIC: usize = 5;
pub const FILLERS: usize = 10;
pub const EMBEDDING_DIM: usize = 8;

pub struct Fixture {
    pub captions: CaptionSet,
    pub features: FeatureStore,
    pub embeddings: EmbeddingTable,
}

fn media_id(m: usize) -> String {
    format!("img{m:02}")
}

fn identity_word(m: usize) -> String {
    format!("obj{m:02}")
}

fn topic_word(t: usize, w: usize) -> String {
    format!("topic{t}w{w}")
}

fn filler_word(f: usize) -> String {
    format!("fill{f}")
}

/// `n_media` media with `per_medium` captions each and `dim`-dimensional
/// nonnegative features: a topic block plus a per-medium component.
pub fn fixture(seed: u64, n_media: usize, per_medium: usize, dim: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = dim / TOPICS;
    let mut features = FeatureStore::new(dim).unwrap();
    let mut records = Vec::new();
    for m in 0..n_media {
        let topic = m % TOPICS;
        let v: Vec<f32> = (0..dim)
            .map(|j| {
                let base = if j / block == topic { 1.0 } else { 0.0 };
                base + rng.gen_range(0.0..0.5f32)
            })
            .collect();
        features.push(media_id(m), &v).unwrap();
        for c in 0..per_medium {
            let mut words = vec![identity_word(m)];
            let mut topic_words: Vec<usize> = (0..WORDS_PER_TOPIC).collect();
            topic_words.shuffle(&mut rng);
            words.extend(topic_words[..2].iter().map(|&w| topic_word(topic, w)));
            for _ in 0..rng.gen_range(1..=2) {
                words.push(filler_word(rng.gen_range(0..FILLERS)));
            }
            words.shuffle(&mut rng);
            records.push(CaptionRecord {
                key: CaptionKey::new(media_id(m), c as u32),
                text: words.join(" "),
            });
        }
    }
    let mut embeddings = EmbeddingTable::new(EMBEDDING_DIM).unwrap();
    let vocab = (0..n_media)
        .map(identity_word)
        .chain((0..TOPICS).flat_map(|t| (0..WORDS_PER_TOPIC).map(move |w| topic_word(t, w))))
        .chain((0..FILLERS).map(filler_word));
    for w in vocab {
        let v: Vec<f32> = (0..EMBEDDING_DIM).map(|_| rng.gen_range(-1.0..1.0f32)).collect();
        embeddings.insert(w, &v).unwrap();
    }
    Fixture {
        captions: CaptionSet::from_records(records).unwrap(),
        features,
        embeddings,
    }
}

/// The pinned fixture: seed 7, 20 media × 5 captions, 50 words, dimension 16.
pub fn pinned() -> Fixture {
    fixture(7, 20, 5, 16)
}

/// Default hyperparameters with layer widths sized for the fixture.
pub fn fixture_config() -> RunConfig {
    RunConfig {
        vectorizers: vec![Segment::Bow, Segment::MeanEmbedding, Segment::Gru],
        hidden_sizes: vec![256],
        gru_hidden: 32,
        ..RunConfig::default()
    }
}

impl Fixture {
    pub fn write(&self, dir: &Path) {
        self.captions.save(dir.join("captions.txt")).unwrap();
        self.features.save_text(dir.join("features.txt")).unwrap();
        self.embeddings.save(dir.join("embeddings.txt")).unwrap();
    }
}
