//! Fixed-length caption encodings and their concatenation into one sentence
//! vector.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::EmbeddingTable;
use crate::error::{Error, Result};
use crate::linalg::Scalar;
use crate::text::{tokenize, TokenSequence, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Segment {
    Bow,
    MeanEmbedding,
    Gru,
}

impl Segment {
    pub const CANONICAL: [Segment; 3] = [Segment::Bow, Segment::MeanEmbedding, Segment::Gru];

    pub fn name(self) -> &'static str {
        match self {
            Segment::Bow => "bow",
            Segment::MeanEmbedding => "mean-embedding",
            Segment::Gru => "gru",
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSlot {
    pub segment: Segment,
    pub offset: usize,
    pub len: usize,
}

/// Ordered, contiguous placement of the active segments inside s(q).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SegmentLayout(Vec<SegmentSlot>);

impl SegmentLayout {
    /// Lays out `(segment, length)` pairs, which must be distinct and in
    /// canonical order.
    pub fn new(parts: &[(Segment, usize)]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Layout("at least one segment is required".into()));
        }
        let mut slots = Vec::with_capacity(parts.len());
        let mut offset = 0;
        for (i, &(segment, len)) in parts.iter().enumerate() {
            if let Some(prev) = i.checked_sub(1).map(|j| parts[j].0) {
                if prev == segment {
                    return Err(Error::Layout(format!("duplicate segment `{segment}`")));
                }
                if prev > segment {
                    if parts[..i].iter().any(|p| p.0 == segment) {
                        return Err(Error::Layout(format!("duplicate segment `{segment}`")));
                    }
                    return Err(Error::Layout(format!(
                        "segment `{segment}` must precede `{prev}`"
                    )));
                }
            }
            slots.push(SegmentSlot { segment, offset, len });
            offset += len;
        }
        Ok(SegmentLayout(slots))
    }

    pub fn slots(&self) -> &[SegmentSlot] {
        &self.0
    }

    pub fn total_len(&self) -> usize {
        self.0.last().map_or(0, |s| s.offset + s.len)
    }

    pub fn slot(&self, segment: Segment) -> Option<SegmentSlot> {
        self.0.iter().copied().find(|s| s.segment == segment)
    }

    pub fn segments(&self) -> Vec<Segment> {
        self.0.iter().map(|s| s.segment).collect()
    }
}

/// The composite sentence vector s(q) together with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceVector<T> {
    pub data: Vec<T>,
    pub layout: SegmentLayout,
}

impl<T: Scalar> SentenceVector<T> {
    pub fn segment(&self, segment: Segment) -> Option<&[T]> {
        self.layout
            .slot(segment)
            .map(|s| &self.data[s.offset..s.offset + s.len])
    }
}

/// Concatenates the parts, in canonical order, into one sentence vector.
pub fn concat_multiscale<T: Scalar>(parts: Vec<(Segment, Vec<T>)>) -> Result<SentenceVector<T>> {
    let shape: Vec<(Segment, usize)> = parts.iter().map(|(s, v)| (*s, v.len())).collect();
    let layout = SegmentLayout::new(&shape)?;
    let mut data = Vec::with_capacity(layout.total_len());
    for (_, v) in parts {
        data.extend(v);
    }
    Ok(SentenceVector { data, layout })
}

/// Occurrence counts of each vocabulary word; unknown tokens are ignored.
pub fn encode_bow(tokens: &TokenSequence, vocab: &Vocabulary) -> Vec<f32> {
    let mut out = vec![0f32; vocab.len()];
    for (i, c) in bow_counts(tokens, vocab) {
        out[i] = c as f32;
    }
    out
}

/// Sparse form of [`encode_bow`], sorted by word index.
pub fn bow_counts(tokens: &TokenSequence, vocab: &Vocabulary) -> Vec<(usize, f64)> {
    let mut ids: Vec<usize> = tokens.tokens.iter().filter_map(|t| vocab.index_of(t)).collect();
    ids.sort_unstable();
    let mut out: Vec<(usize, f64)> = Vec::new();
    for i in ids {
        match out.last_mut() {
            Some((j, c)) if *j == i => *c += 1.0,
            _ => out.push((i, 1.0)),
        }
    }
    out
}

/// Mean of the table rows of the tokens found in the table. The divisor is the
/// number of matched tokens; with no match the result is the zero vector.
pub fn encode_mean_embedding(tokens: &TokenSequence, table: &EmbeddingTable) -> Vec<f32> {
    let mut sum = vec![0f64; table.dim()];
    let mut matched = 0usize;
    for t in &tokens.tokens {
        if let Some(row) = table.get(t) {
            matched += 1;
            for (s, &v) in sum.iter_mut().zip(row) {
                *s += v as f64;
            }
        }
    }
    if matched == 0 {
        return vec![0.0; table.dim()];
    }
    sum.iter().map(|s| (s / matched as f64) as f32).collect()
}

/// A caption after tokenization, ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionInput {
    pub segments: Vec<Segment>,
    /// Sparse BoW counts; empty unless the bow segment is active.
    pub bow: Vec<(usize, f64)>,
    /// Mean embedding; empty unless the mean-embedding segment is active.
    pub mean: Vec<f32>,
    /// Vocabulary indices of in-vocabulary tokens, in sentence order, for the GRU.
    pub tokens: Vec<usize>,
}

/// Turns caption text into [`CaptionInput`] for a fixed set of segments.
#[derive(Debug, Clone)]
pub struct SentenceEncoder {
    vocab: Vocabulary,
    table: Option<EmbeddingTable>,
    segments: Vec<Segment>,
}

impl SentenceEncoder {
    pub fn new(vocab: Vocabulary, table: Option<EmbeddingTable>, segments: &[Segment]) -> Result<Self> {
        let segments: Vec<Segment> = Segment::CANONICAL
            .into_iter()
            .filter(|s| segments.contains(s))
            .collect();
        if segments.is_empty() {
            return Err(Error::Config("at least one vectorizer must be selected".into()));
        }
        if segments.contains(&Segment::MeanEmbedding) && table.is_none() {
            return Err(Error::Config(
                "the mean-embedding vectorizer needs a pretrained embedding table".into(),
            ));
        }
        Ok(SentenceEncoder {
            vocab,
            table,
            segments,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn table(&self) -> Option<&EmbeddingTable> {
        self.table.as_ref()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn uses(&self, segment: Segment) -> bool {
        self.segments.contains(&segment)
    }

    /// Layout of s(q) given the GRU state width.
    pub fn layout(&self, gru_hidden: usize) -> SegmentLayout {
        let parts: Vec<(Segment, usize)> = self
            .segments
            .iter()
            .map(|&s| {
                let len = match s {
                    Segment::Bow => self.vocab.len(),
                    Segment::MeanEmbedding => self.table.as_ref().map_or(0, |t| t.dim()),
                    Segment::Gru => gru_hidden,
                };
                (s, len)
            })
            .collect();
        SegmentLayout::new(&parts).expect("canonical segments")
    }

    pub fn encode(&self, text: &str) -> CaptionInput {
        let tokens = tokenize(text);
        let bow = if self.uses(Segment::Bow) {
            bow_counts(&tokens, &self.vocab)
        } else {
            Vec::new()
        };
        let mean = match (&self.table, self.uses(Segment::MeanEmbedding)) {
            (Some(table), true) => encode_mean_embedding(&tokens, table),
            _ => Vec::new(),
        };
        let ids = if self.uses(Segment::Gru) {
            tokens
                .tokens
                .iter()
                .filter_map(|t| self.vocab.index_of(t))
                .collect()
        } else {
            Vec::new()
        };
        CaptionInput {
            segments: self.segments.clone(),
            bow,
            mean,
            tokens: ids,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab(words: &[&str]) -> Vocabulary {
        // Descending counts keep the given order.
        Vocabulary::from_counts(
            words
                .iter()
                .enumerate()
                .map(|(i, w)| (w.to_string(), (100 - i) as u64))
                .collect(),
        )
    }

    fn seq(words: &[&str]) -> TokenSequence {
        TokenSequence {
            tokens: words.iter().map(|w| w.to_string()).collect(),
            source: words.join(" "),
        }
    }

    fn table(rows: &[(&str, &[f32])]) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(rows[0].1.len()).unwrap();
        for (w, v) in rows {
            t.insert(*w, v).unwrap();
        }
        t
    }

    #[test]
    fn bow_counts_in_vocabulary_tokens() {
        let v = vocab(&["a", "dog", "runs"]);
        assert_eq!(
            encode_bow(&seq(&["a", "dog", "runs", "fast"]), &v),
            [1.0, 1.0, 1.0]
        );
        assert_eq!(encode_bow(&seq(&["dog", "dog"]), &v), [0.0, 2.0, 0.0]);
        assert_eq!(encode_bow(&seq(&[]), &v), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn mean_embedding_examples() {
        let t = table(&[("dog", &[1.0, 0.0]), ("cat", &[0.0, 1.0])]);
        assert_eq!(encode_mean_embedding(&seq(&["dog"]), &t), [1.0, 0.0]);
        assert_eq!(encode_mean_embedding(&seq(&["dog", "cat"]), &t), [0.5, 0.5]);
        assert_eq!(encode_mean_embedding(&seq(&["zzxqy"]), &t), [0.0, 0.0]);
        assert_eq!(encode_mean_embedding(&seq(&[]), &t), [0.0, 0.0]);
        // Unmatched tokens do not shrink the mean.
        assert_eq!(encode_mean_embedding(&seq(&["dog", "zzxqy"]), &t), [1.0, 0.0]);
    }

    #[test]
    fn full_size_layouts() {
        let s = concat_multiscale(vec![
            (Segment::Bow, vec![0f32; 2535]),
            (Segment::MeanEmbedding, vec![0f32; 500]),
            (Segment::Gru, vec![0f32; 1024]),
        ])
        .unwrap();
        assert_eq!(s.data.len(), 4059);
        let s = concat_multiscale(vec![
            (Segment::Bow, vec![0f32; 3030]),
            (Segment::MeanEmbedding, vec![0f32; 500]),
            (Segment::Gru, vec![0f32; 1024]),
        ])
        .unwrap();
        assert_eq!(s.data.len(), 4554);
    }

    #[test]
    fn single_part_is_identity() {
        let s = concat_multiscale(vec![(Segment::Gru, vec![1.0f32, -2.0])]).unwrap();
        assert_eq!(s.data, [1.0, -2.0]);
        assert_eq!(s.segment(Segment::Gru).unwrap(), &[1.0, -2.0]);
        assert!(s.segment(Segment::Bow).is_none());
    }

    #[test]
    fn duplicate_or_misordered_segments_rejected() {
        let dup = concat_multiscale(vec![(Segment::Bow, vec![1f32]), (Segment::Bow, vec![2f32])]);
        assert!(matches!(dup, Err(Error::Layout(m)) if m.contains("duplicate")));
        let dup = concat_multiscale(vec![
            (Segment::Bow, vec![1f32]),
            (Segment::Gru, vec![2f32]),
            (Segment::Bow, vec![2f32]),
        ]);
        assert!(matches!(dup, Err(Error::Layout(m)) if m.contains("duplicate")));
        let order = concat_multiscale(vec![(Segment::Gru, vec![1f32]), (Segment::Bow, vec![2f32])]);
        assert!(matches!(order, Err(Error::Layout(_))));
    }

    #[test]
    fn encoder_skips_oov_for_gru() {
        let v = vocab(&["a", "dog"]);
        let enc = SentenceEncoder::new(v, None, &[Segment::Gru, Segment::Bow]).unwrap();
        let input = enc.encode("A cat and a dog");
        assert_eq!(input.segments, [Segment::Bow, Segment::Gru]);
        assert_eq!(input.tokens, [0, 0, 1]);
        assert_eq!(input.bow, [(0, 2.0), (1, 1.0)]);
        assert_eq!(enc.layout(7).total_len(), 9);
    }

    const WORDS: [&str; 6] = ["a", "dog", "cat", "runs", "zzz", "log"];

    fn arb_tokens() -> impl Strategy<Value = Vec<&'static str>> {
        prop::collection::vec(prop::sample::select(WORDS.to_vec()), 0..12)
    }

    proptest! {
        #[test]
        fn encodings_are_permutation_invariant(words in arb_tokens(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let v = vocab(&["a", "dog", "cat", "runs"]);
            let t = table(&[("a", &[0.1, 0.7]), ("dog", &[1.0, -3.0]), ("log", &[0.3, 0.3])]);
            let mut shuffled = words.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(encode_bow(&seq(&words), &v), encode_bow(&seq(&shuffled), &v));
            prop_assert_eq!(
                encode_mean_embedding(&seq(&words), &t),
                encode_mean_embedding(&seq(&shuffled), &t)
            );
        }

        #[test]
        fn bow_sum_counts_in_vocabulary_tokens(words in arb_tokens()) {
            let v = vocab(&["a", "dog", "cat", "runs"]);
            let total: f32 = encode_bow(&seq(&words), &v).iter().sum();
            let known = words.iter().filter(|w| v.index_of(w).is_some()).count();
            prop_assert_eq!(total as usize, known);
        }

        #[test]
        fn mean_lies_in_bounding_box(words in arb_tokens()) {
            let rows: [(&str, &[f32]); 3] = [("a", &[0.1, 0.7]), ("dog", &[1.0, -3.0]), ("log", &[0.3, 0.3])];
            let t = table(&rows);
            let matched: Vec<&[f32]> = words.iter().filter_map(|w| t.get(w)).collect();
            let mean = encode_mean_embedding(&seq(&words), &t);
            if matched.is_empty() {
                prop_assert!(mean.iter().all(|&x| x == 0.0));
            } else {
                for j in 0..2 {
                    let lo = matched.iter().map(|r| r[j]).fold(f32::INFINITY, f32::min);
                    let hi = matched.iter().map(|r| r[j]).fold(f32::NEG_INFINITY, f32::max);
                    prop_assert!(mean[j] >= lo - 1e-6 && mean[j] <= hi + 1e-6);
                }
            }
        }

        #[test]
        fn concat_then_extract_recovers_parts(
            a in prop::collection::vec(-10f32..10.0, 0..5),
            b in prop::collection::vec(-10f32..10.0, 0..5),
            c in prop::collection::vec(-10f32..10.0, 0..5),
        ) {
            let s = concat_multiscale(vec![
                (Segment::Bow, a.clone()),
                (Segment::MeanEmbedding, b.clone()),
                (Segment::Gru, c.clone()),
            ]).unwrap();
            prop_assert_eq!(s.data.len(), a.len() + b.len() + c.len());
            prop_assert_eq!(s.segment(Segment::Bow).unwrap(), &a[..]);
            prop_assert_eq!(s.segment(Segment::MeanEmbedding).unwrap(), &b[..]);
            prop_assert_eq!(s.segment(Segment::Gru).unwrap(), &c[..]);
        }
    }
}
