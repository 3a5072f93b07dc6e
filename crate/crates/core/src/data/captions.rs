//! Caption files: one `<media-id>#<index>\t<caption>` record per line.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifies one caption of one medium, printed as `media-id#index`.
///
/// Ordering is by media-id, then numeric index. This is the tie-break order
/// used by every ranking.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CaptionKey {
    pub media_id: String,
    pub index: u32,
}

impl CaptionKey {
    pub fn new(media_id: impl Into<String>, index: u32) -> Self {
        CaptionKey {
            media_id: media_id.into(),
            index,
        }
    }
}

impl fmt::Display for CaptionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.media_id, self.index)
    }
}

impl FromStr for CaptionKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (id, index) = s
            .rsplit_once('#')
            .ok_or_else(|| format!("caption key `{s}` lacks `#<index>`"))?;
        if id.is_empty() {
            return Err(format!("caption key `{s}` has an empty media-id"));
        }
        let index = index
            .parse::<u32>()
            .map_err(|_| format!("caption key `{s}` has a non-numeric index"))?;
        Ok(CaptionKey::new(id, index))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionRecord {
    pub key: CaptionKey,
    pub text: String,
}

/// Ordered media-id/caption pairs with unique keys.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CaptionSet {
    records: Vec<CaptionRecord>,
}

impl CaptionSet {
    pub fn from_records(records: Vec<CaptionRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if r.text.trim().is_empty() {
                return Err(Error::Dataset(format!("caption {} is empty", r.key)));
            }
            if !seen.insert(&r.key) {
                return Err(Error::DuplicateKey {
                    key: r.key.to_string(),
                });
            }
        }
        Ok(CaptionSet { records })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses caption-file content; `origin` only labels error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (n, line) in text.lines().enumerate() {
            let lineno = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (key, caption) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(origin, lineno, "missing tab separator"))?;
            let key: CaptionKey = key.parse().map_err(|m| Error::parse(origin, lineno, m))?;
            let caption = caption.trim();
            if caption.is_empty() {
                return Err(Error::parse(origin, lineno, "empty caption"));
            }
            if !seen.insert(key.clone()) {
                return Err(Error::DuplicateKey { key: key.to_string() });
            }
            records.push(CaptionRecord {
                key,
                text: caption.to_owned(),
            });
        }
        Ok(CaptionSet { records })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&format!("{}\t{}\n", r.key, r.text));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn records(&self) -> &[CaptionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &CaptionKey> {
        self.records.iter().map(|r| &r.key)
    }

    /// Distinct media-ids in order of first appearance.
    pub fn media_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .map(|r| r.key.media_id.as_str())
            .filter(|id| seen.insert(*id))
            .collect()
    }
}
