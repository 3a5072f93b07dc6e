//! Feature stores: media-id → fixed-length visual (or visual-audio) vectors.
//!
//! Two on-disk encodings are supported. The text form is one
//! `<media-id>\t<f1> <f2> ... <fd>` line per record. The binary form is
//!
//! ```text
//! b"W2VVFEAT" | version: u32 = 1 | count: u32 | dim: u32
//! per record: id_len: u16 | id: [u8; id_len] | values: [f32; dim]
//! ```
//!
//! with every integer and float little-endian.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 8] = b"W2VVFEAT";
pub const FEATURE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl FeatureStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dataset("feature dimensionality must be positive".into()));
        }
        Ok(FeatureStore {
            dim,
            ids: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn push(&mut self, id: impl Into<String>, vector: &[f32]) -> Result<()> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::Dataset("empty media-id".into()));
        }
        if vector.len() != self.dim {
            return Err(Error::dim(self.dim, vector.len(), format!("feature `{id}`")));
        }
        if let Some(j) = vector.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("feature `{id}` component {j}"),
            });
        }
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateKey { key: id });
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.vector(i))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .enumerate()
            .map(move |(i, id)| (id.as_str(), self.vector(i)))
    }

    /// Loads either encoding, sniffing the binary magic.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(FEATURE_MAGIC) {
            Self::from_binary(&bytes, path)
        } else {
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::parse(path, 0, "feature text file is not UTF-8"))?;
            Self::from_text(&text, path)
        }
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut store: Option<FeatureStore> = None;
        for (n, line) in text.lines().enumerate() {
            let lineno = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (id, values) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(origin, lineno, "missing tab separator"))?;
            let vector = values
                .split_ascii_whitespace()
                .map(|t| t.parse::<f32>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(origin, lineno, format!("bad float: {e}")))?;
            let store = match &mut store {
                Some(s) => s,
                None => store.insert(
                    FeatureStore::new(vector.len())
                        .map_err(|_| Error::parse(origin, lineno, "record has no components"))?,
                ),
            };
            store.push(id, &vector).map_err(|e| match e {
                Error::DimensionMismatch { expected, found, .. } => Error::DimensionMismatch {
                    expected,
                    found,
                    context: format!("{}:{lineno}", origin.display()),
                },
                other => other,
            })?;
        }
        store.ok_or_else(|| Error::Dataset(format!("{}: no feature records", origin.display())))
    }

    pub fn from_binary(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut cur = Cursor {
            bytes,
            pos: 0,
            origin,
        };
        if cur.take(8)? != FEATURE_MAGIC {
            return Err(Error::parse(origin, 0, "bad magic"));
        }
        let version = cur.u32()?;
        if version != FEATURE_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: FEATURE_VERSION,
            });
        }
        let count = cur.u32()? as usize;
        let dim = cur.u32()? as usize;
        let mut store = FeatureStore::new(dim)?;
        let mut vector = vec![0f32; dim];
        for _ in 0..count {
            let len = cur.u16()? as usize;
            let id = std::str::from_utf8(cur.take(len)?)
                .map_err(|_| Error::parse(origin, 0, "media-id is not UTF-8"))?
                .to_owned();
            for v in vector.iter_mut() {
                *v = cur.f32()?;
            }
            store.push(id, &vector)?;
        }
        if cur.pos != bytes.len() {
            return Err(Error::parse(origin, 0, "trailing bytes after last record"));
        }
        Ok(store)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, v) in self.iter() {
            out.push_str(id);
            out.push('\t');
            for (j, x) in v.iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                // Display for f32 is the shortest string that round-trips.
                out.push_str(&x.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn to_binary(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(20 + self.data.len() * 4 + self.ids.len() * 16);
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&u32_len(self.ids.len(), "record count")?.to_le_bytes());
        out.extend_from_slice(&u32_len(self.dim, "dimensionality")?.to_le_bytes());
        for (id, v) in self.iter() {
            let len = u16::try_from(id.len())
                .map_err(|_| Error::Dataset(format!("media-id `{id}` longer than 65535 bytes")))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn save_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_binary()?).map_err(|e| Error::io(path, e))
    }
}

fn u32_len(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Dataset(format!("{what} {n} exceeds u32")))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::parse(self.origin, 0, "truncated binary feature file"));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn origin() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn parses_text_records() {
        let store = FeatureStore::from_text("vidA\t0.5 1.5\nvidB\t1.0 0.0\n", origin()).unwrap();
        assert_eq!(store.dim(), 2);
        assert_eq!(store.len(), 2);
        assert_eq!(store.get("vidA").unwrap(), &[0.5, 1.5]);
        assert_eq!(store.ids(), &["vidA".to_string(), "vidB".to_string()]);
    }

    #[test]
    fn inconsistent_dim_is_an_error() {
        let err = FeatureStore::from_text("a\t1 2\nb\t1 2 3\n", origin()).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 2,
                found: 3,
                ..
            }
        ));
    }

    #[test]
    fn non_finite_is_an_error() {
        let err = FeatureStore::from_text("a\t1 NaN\n", origin()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        let err = FeatureStore::from_text("a\t1 inf\n", origin()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn truncated_binary_rejected() {
        let mut store = FeatureStore::new(3).unwrap();
        store.push("x", &[1.0, 2.0, 3.0]).unwrap();
        let bytes = store.to_binary().unwrap();
        assert!(FeatureStore::from_binary(&bytes[..bytes.len() - 1], origin()).is_err());
        let mut bad = bytes.clone();
        bad[8] = 2;
        assert!(matches!(
            FeatureStore::from_binary(&bad, origin()),
            Err(Error::UnsupportedVersion { found: 2, .. })
        ));
    }

    #[test]
    fn binary_layout_is_exact() {
        let mut store = FeatureStore::new(1).unwrap();
        store.push("ab", &[1.0]).unwrap();
        let bytes = store.to_binary().unwrap();
        let mut expected = b"W2VVFEAT".to_vec();
        expected.extend_from_slice(&[1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, b'a', b'b']);
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    fn arb_store() -> impl Strategy<Value = FeatureStore> {
        (1usize..6).prop_flat_map(|dim| {
            prop::collection::vec(prop::collection::vec(-1e6f32..1e6, dim), 1..12).prop_map(move |rows| {
                let mut s = FeatureStore::new(dim).unwrap();
                for (i, r) in rows.iter().enumerate() {
                    s.push(format!("m{i}"), r).unwrap();
                }
                s
            })
        })
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_exact(store in arb_store()) {
            let back = FeatureStore::from_binary(&store.to_binary().unwrap(), origin()).unwrap();
            prop_assert_eq!(back, store);
        }

        #[test]
        fn text_round_trip_within_tolerance(store in arb_store()) {
            let back = FeatureStore::from_text(&store.to_text(), origin()).unwrap();
            prop_assert_eq!(back.len(), store.len());
            for ((ia, a), (ib, b)) in store.iter().zip(back.iter()) {
                prop_assert_eq!(ia, ib);
                for (x, y) in a.iter().zip(b) {
                    prop_assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0));
                }
            }
        }
    }
}
