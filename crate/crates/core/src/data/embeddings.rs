//! Pretrained word embeddings in the word2vec text format.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
    warnings: usize,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimensionality must be positive".into()));
        }
        Ok(EmbeddingTable {
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            warnings: 0,
        })
    }

    /// Adds a row. Returns `false` (and keeps the first row) for a repeated word.
    pub fn insert(&mut self, word: impl Into<String>, vector: &[f32]) -> Result<bool> {
        let word = word.into();
        if vector.len() != self.dim {
            return Err(Error::dim(self.dim, vector.len(), format!("embedding `{word}`")));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("embedding `{word}`"),
            });
        }
        if self.index.contains_key(&word) {
            return Ok(false);
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.data.extend_from_slice(vector);
        Ok(true)
    }

    /// Reads a word2vec text file. With `restrict`, only rows for the listed
    /// words are parsed and kept; all other rows are skipped unparsed.
    pub fn load(path: impl AsRef<Path>, restrict: Option<&HashSet<String>>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), path, restrict)
    }

    pub fn read<R: BufRead>(reader: R, origin: &Path, restrict: Option<&HashSet<String>>) -> Result<Self> {
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(line) => line.map_err(|e| Error::io(origin, e))?,
            None => return Err(Error::parse(origin, 1, "missing header")),
        };
        let mut fields = header.split_ascii_whitespace();
        let (declared, dim) = match (fields.next(), fields.next(), fields.next()) {
            (Some(n), Some(d), None) => (
                n.parse::<usize>()
                    .map_err(|_| Error::parse(origin, 1, "bad vocabulary size in header"))?,
                d.parse::<usize>()
                    .map_err(|_| Error::parse(origin, 1, "bad dimensionality in header"))?,
            ),
            _ => return Err(Error::parse(origin, 1, "header must be `<vocab-size> <dim>`")),
        };
        let mut table = EmbeddingTable::new(dim)?;
        let mut rows_seen = 0usize;
        let mut row = Vec::with_capacity(dim);
        for (n, line) in lines.enumerate() {
            let lineno = n + 2;
            let line = line.map_err(|e| Error::io(origin, e))?;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            rows_seen += 1;
            let (word, rest) = line.split_once(' ').unwrap_or((line, ""));
            if let Some(keep) = restrict {
                if !keep.contains(word) {
                    continue;
                }
            }
            row.clear();
            for tok in rest.split_ascii_whitespace() {
                let v: f32 = tok
                    .parse()
                    .map_err(|_| Error::parse(origin, lineno, format!("bad float `{tok}`")))?;
                row.push(v);
            }
            if row.len() != dim {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("expected {dim} components, found {}", row.len()),
                ));
            }
            if !table.insert(word, &row).map_err(|e| match e {
                Error::NonFinite { context } => Error::parse(origin, lineno, context + " is not finite"),
                other => other,
            })? {
                warn!("{}:{lineno}: repeated word `{word}` ignored", origin.display());
                table.warnings += 1;
            }
        }
        if rows_seen != declared {
            warn!(
                "{}: header declares {declared} words but {rows_seen} rows were found",
                origin.display()
            );
            table.warnings += 1;
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Count of tolerated irregularities seen while loading.
    pub fn warnings(&self) -> usize {
        self.warnings
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.index
            .get(word)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.words.len(), self.dim);
        for word in &self.words {
            out.push_str(word);
            for v in self.get(word).unwrap() {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, restrict: Option<&HashSet<String>>) -> Result<EmbeddingTable> {
        EmbeddingTable::read(text.as_bytes(), Path::new("mem"), restrict)
    }

    #[test]
    fn parses_header_and_rows() {
        let t = read("2 3\ndog 1 0 0\ncat 0 1 0\n", None).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("cat").unwrap(), &[0.0, 1.0, 0.0]);
        assert_eq!(t.warnings(), 0);
    }

    #[test]
    fn restriction_keeps_listed_words_only() {
        let keep: HashSet<String> = ["dog".to_string()].into_iter().collect();
        let t = read("2 3\ndog 1 0 0\ncat 0 1 0\n", Some(&keep)).unwrap();
        assert_eq!(t.words(), &["dog".to_string()]);
        assert!(t.get("cat").is_none());
    }

    #[test]
    fn restriction_skips_rows_without_parsing_them() {
        // A garbage row for an unlisted word is never parsed.
        let keep: HashSet<String> = ["dog".to_string()].into_iter().collect();
        let t = read("2 2\ndog 1 0\ncat not numbers at all\n", Some(&keep)).unwrap();
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn header_mismatch_is_a_warning() {
        let t = read("5 2\ndog 1 0\n", None).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.warnings(), 1);
    }

    #[test]
    fn malformed_row_is_an_error() {
        let err = read("1 3\ndog 1 0\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = read("1 2\ndog 1 x\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn text_round_trip() {
        let t = read("2 2\na 0.25 -1.5\nb 3 4\n", None).unwrap();
        let back = read(&t.to_text(), None).unwrap();
        assert_eq!(t, back);
    }
}
