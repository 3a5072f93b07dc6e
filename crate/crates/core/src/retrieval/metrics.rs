use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::CaptionKey;
use crate::error::{Error, Result};
use crate::retrieval::rank::RankedList;

/// Which captions count as correct for a query medium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Relevance {
    /// Every caption of the query's medium.
    #[default]
    SharedMedia,
    /// Exactly one annotated caption per medium in the pool.
    SingleAnnotated,
}

impl FromStr for Relevance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared-media" => Ok(Relevance::SharedMedia),
            "single-annotated" => Ok(Relevance::SingleAnnotated),
            other => Err(Error::Usage(format!(
                "unknown relevance '{other}' (expected shared-media or single-annotated)"
            ))),
        }
    }
}

impl fmt::Display for Relevance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relevance::SharedMedia => "shared-media",
            Relevance::SingleAnnotated => "single-annotated",
        })
    }
}

pub type RelevanceMap = BTreeMap<String, BTreeSet<CaptionKey>>;

/// Relevant pool captions for each query id.
pub fn relevance_map<'a>(
    pool_keys: impl IntoIterator<Item = &'a CaptionKey>,
    queries: impl IntoIterator<Item = &'a str>,
    relevance: Relevance,
) -> Result<RelevanceMap> {
    let mut by_media: BTreeMap<&str, BTreeSet<CaptionKey>> = BTreeMap::new();
    for k in pool_keys {
        by_media.entry(&k.media_id).or_default().insert(k.clone());
    }
    let mut map = RelevanceMap::new();
    let mut missing = Vec::new();
    let mut ambiguous = Vec::new();
    for q in queries {
        match by_media.get(q) {
            None => missing.push(q.to_owned()),
            Some(set) if relevance == Relevance::SingleAnnotated && set.len() != 1 => {
                ambiguous.push(q.to_owned())
            }
            Some(set) => {
                map.insert(q.to_owned(), set.clone());
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::Protocol(format!(
            "no relevant caption in the pool for: {}",
            missing.join(", ")
        )));
    }
    if !ambiguous.is_empty() {
        return Err(Error::Protocol(format!(
            "single-annotated relevance needs exactly one caption per medium: {}",
            ambiguous.join(", ")
        )));
    }
    Ok(map)
}

/// 1-based rank of the best relevant caption for each ranking.
pub fn best_ranks(rankings: &[RankedList], relevance: &RelevanceMap) -> Result<Vec<usize>> {
    let mut ranks = Vec::with_capacity(rankings.len());
    let mut missing = Vec::new();
    for list in rankings {
        let found = relevance.get(&list.query).and_then(|rel| {
            list.entries
                .iter()
                .position(|(k, _)| rel.contains(k))
                .map(|p| p + 1)
        });
        match found {
            Some(r) => ranks.push(r),
            None => missing.push(list.query.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Protocol(format!(
            "no relevant caption ranked for: {}",
            missing.join(", ")
        )));
    }
    Ok(ranks)
}

/// Percentage of queries whose best relevant caption is within the top `k`.
pub fn recall_at_k(best_ranks: &[usize], k: usize) -> f64 {
    if best_ranks.is_empty() {
        return 0.0;
    }
    let hits = best_ranks.iter().filter(|&&r| r <= k).count();
    100.0 * hits as f64 / best_ranks.len() as f64
}

pub fn mean_inverted_rank(best_ranks: &[usize]) -> f64 {
    if best_ranks.is_empty() {
        return 0.0;
    }
    best_ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / best_ranks.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    pub mir: f64,
    pub queries: usize,
}

impl MetricsReport {
    pub fn from_best_ranks(best_ranks: &[usize]) -> Result<Self> {
        if best_ranks.is_empty() {
            return Err(Error::Protocol("no queries to evaluate".into()));
        }
        if best_ranks.contains(&0) {
            return Err(Error::Protocol("ranks start at 1".into()));
        }
        Ok(MetricsReport {
            r1: recall_at_k(best_ranks, 1),
            r5: recall_at_k(best_ranks, 5),
            r10: recall_at_k(best_ranks, 10),
            mir: mean_inverted_rank(best_ranks),
            queries: best_ranks.len(),
        })
    }

    pub fn recall_sum(&self) -> f64 {
        self.r1 + self.r5 + self.r10
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_counted_recalls() {
        let m = MetricsReport::from_best_ranks(&[1, 3, 7, 12]).unwrap();
        assert_eq!((m.r1, m.r5, m.r10), (25.0, 50.0, 75.0));
    }

    #[test]
    fn all_first_is_perfect() {
        let m = MetricsReport::from_best_ranks(&[1, 1, 1]).unwrap();
        assert_eq!((m.r1, m.r5, m.r10, m.mir), (100.0, 100.0, 100.0, 1.0));
    }

    #[test]
    fn rank_eleven_misses_everything() {
        let m = MetricsReport::from_best_ranks(&[11]).unwrap();
        assert_eq!((m.r1, m.r5, m.r10), (0.0, 0.0, 0.0));
    }

    #[test]
    fn mir_examples() {
        assert!((mean_inverted_rank(&[1, 2, 4]) - 0.5833333333).abs() < 1e-9);
        assert!((mean_inverted_rank(&[10]) - 0.1).abs() < 1e-15);
    }

    fn list(query: &str, keys: &[(&str, u32)]) -> RankedList {
        RankedList {
            query: query.into(),
            entries: keys.iter().map(|(m, i)| (CaptionKey::new(*m, *i), 0.0)).collect(),
        }
    }

    #[test]
    fn shared_media_relevance() {
        let keys = [
            CaptionKey::new("a", 0),
            CaptionKey::new("a", 1),
            CaptionKey::new("b", 0),
        ];
        let rel = relevance_map(&keys, ["a", "b"], Relevance::SharedMedia).unwrap();
        let ranks = best_ranks(
            &[
                list("a", &[("b", 0), ("a", 1), ("a", 0)]),
                list("b", &[("a", 0), ("a", 1), ("b", 0)]),
            ],
            &rel,
        )
        .unwrap();
        assert_eq!(ranks, [2, 3]);
    }

    #[test]
    fn single_annotated_needs_one_caption() {
        let keys = [CaptionKey::new("a", 0), CaptionKey::new("a", 1)];
        assert!(matches!(
            relevance_map(&keys, ["a"], Relevance::SingleAnnotated),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn missing_relevant_caption_is_named() {
        let keys = [CaptionKey::new("a", 0)];
        match relevance_map(&keys, ["a", "zz"], Relevance::SharedMedia) {
            Err(Error::Protocol(m)) => assert!(m.contains("zz")),
            other => panic!("{other:?}"),
        }
        let rel = relevance_map(&keys, ["a"], Relevance::SharedMedia).unwrap();
        assert!(best_ranks(&[list("a", &[("b", 0)])], &rel).is_err());
    }

    proptest! {
        #[test]
        fn recall_is_monotone_in_k(ranks in prop::collection::vec(1usize..50, 1..40)) {
            let mut prev = 0.0;
            for k in 1..60 {
                let r = recall_at_k(&ranks, k);
                prop_assert!(r >= prev && r <= 100.0);
                prev = r;
            }
        }

        #[test]
        fn mir_is_one_iff_all_first(ranks in prop::collection::vec(1usize..4, 1..20)) {
            let mir = mean_inverted_rank(&ranks);
            prop_assert_eq!(mir == 1.0, ranks.iter().all(|&r| r == 1));
            prop_assert!(mir > 0.0 && mir <= 1.0);
        }
    }
}
