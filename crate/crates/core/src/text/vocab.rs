use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::CaptionSet;
use crate::error::{Error, Result};
use crate::text::tokenize;

/// Training vocabulary ordered by descending count, then ascending word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps every word seen at least `min_count` times in `captions`.
    pub fn build(captions: &CaptionSet, min_count: usize) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::Config("min_count must be >= 1".into()));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        for record in captions.records() {
            for token in tokenize(&record.text).tokens {
                *counts.entry(token).or_default() += 1;
            }
        }
        let kept: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count as u64)
            .collect();
        if kept.is_empty() {
            return Err(Error::Config(format!(
                "no word occurs at least {min_count} times; vocabulary would be empty"
            )));
        }
        Ok(Self::from_counts(kept))
    }

    /// Builds from explicit `(word, count)` pairs, sorting into canonical order.
    pub fn from_counts(mut entries: Vec<(String, u64)>) -> Self {
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        entries.dedup_by(|a, b| a.0 == b.0);
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.clone(), i))
            .collect();
        let (words, counts) = entries.into_iter().unzip();
        Vocabulary { words, counts, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn count(&self, i: usize) -> u64 {
        self.counts[i]
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// `<word>\t<count>` lines in canonical order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (w, c) in self.words.iter().zip(&self.counts) {
            out.push_str(&format!("{w}\t{c}\n"));
        }
        out
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (w, c) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(origin, n + 1, "expected `<word>\\t<count>`"))?;
            let c = c
                .parse::<u64>()
                .map_err(|_| Error::parse(origin, n + 1, "bad count"))?;
            entries.push((w.to_owned(), c));
        }
        let vocab = Self::from_counts(entries);
        if vocab.to_text() != text {
            return Err(Error::parse(origin, 0, "vocabulary is not in canonical order"));
        }
        Ok(vocab)
    }

    /// SHA-256 of the serialized vocabulary, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CaptionKey, CaptionRecord};

    fn corpus(lines: &[&str]) -> CaptionSet {
        CaptionSet::from_records(
            lines
                .iter()
                .enumerate()
                .map(|(i, t)| CaptionRecord {
                    key: CaptionKey::new("m", i as u32),
                    text: t.to_string(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn threshold_drops_rare_words() {
        let mut lines = vec!["dog"; 6];
        lines.push("yak");
        let v = Vocabulary::build(&corpus(&lines), 5).unwrap();
        assert_eq!(v.words(), &["dog".to_string()]);
        assert_eq!(v.count(0), 6);
    }

    #[test]
    fn min_count_one_keeps_every_word() {
        let v = Vocabulary::build(&corpus(&["b a c", "a d"]), 1).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.words(), &["a", "b", "c", "d"]);
        for (i, w) in v.words().iter().enumerate() {
            assert_eq!(v.index_of(w), Some(i));
        }
    }

    #[test]
    fn ordering_is_count_desc_then_word() {
        let v = Vocabulary::build(&corpus(&["z z y", "y x"]), 1).unwrap();
        assert_eq!(v.words(), &["y", "z", "x"]);
    }

    #[test]
    fn empty_vocabulary_is_a_config_error() {
        let err = Vocabulary::build(&corpus(&["one two"]), 5).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn text_round_trip_and_hash() {
        let v = Vocabulary::build(&corpus(&["a b b", "c"]), 1).unwrap();
        let back = Vocabulary::from_text(&v.to_text(), Path::new("v")).unwrap();
        assert_eq!(v, back);
        assert_eq!(v.content_hash(), back.content_hash());
        assert_eq!(v.content_hash().len(), 64);
    }
}
