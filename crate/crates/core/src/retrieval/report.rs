//! Text formats for rankings and metrics.
//!
//! Ranking dump, one query per line:
//! `media-id<TAB>key:sim key:sim ...` with similarities to six decimals.
//! Per-query report: `media-id<TAB>best_rank<TAB>top-10 keys separated by spaces`.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::CaptionKey;
use crate::error::{Error, Result};
use crate::retrieval::metrics::{best_ranks, MetricsReport, RelevanceMap};
use crate::retrieval::rank::{QueryOutcome, RankedList};

pub fn write_ranking_dump(rankings: &[RankedList]) -> String {
    let mut out = String::new();
    for list in rankings {
        out.push_str(&list.query);
        out.push('\t');
        for (i, (k, s)) in list.entries.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{k}:{s:.6}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_ranking_dump(text: &str, origin: &Path) -> Result<Vec<RankedList>> {
    let mut lists = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (query, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, lineno, "expected media-id, a tab, then entries"))?;
        let mut entries = Vec::new();
        for item in rest.split_whitespace() {
            let (key, sim) = item
                .rsplit_once(':')
                .ok_or_else(|| Error::parse(origin, lineno, format!("entry '{item}' lacks ':'")))?;
            let key: CaptionKey = key.parse().map_err(|e: String| Error::parse(origin, lineno, e))?;
            let sim: f64 = sim
                .parse()
                .map_err(|_| Error::parse(origin, lineno, format!("bad similarity '{sim}'")))?;
            entries.push((key, sim));
        }
        lists.push(RankedList {
            query: query.to_owned(),
            entries,
        });
    }
    Ok(lists)
}

pub fn write_per_query(outcomes: &[QueryOutcome]) -> String {
    let mut out = String::new();
    for q in outcomes {
        let top: Vec<String> = q.top.iter().map(|k| k.to_string()).collect();
        writeln!(out, "{}\t{}\t{}", q.query, q.best_rank, top.join(" ")).unwrap();
    }
    out
}

/// Outcomes for rankings read back from a dump.
pub fn outcomes_from_rankings(
    rankings: &[RankedList],
    relevance: &RelevanceMap,
) -> Result<Vec<QueryOutcome>> {
    let ranks = best_ranks(rankings, relevance)?;
    Ok(rankings
        .iter()
        .zip(ranks)
        .map(|(l, best_rank)| QueryOutcome {
            query: l.query.clone(),
            best_rank,
            top: l.entries.iter().take(10).map(|(k, _)| k.clone()).collect(),
        })
        .collect())
}

/// Metrics as a JSON object: `r{k}` for each requested cutoff plus `mir` and `queries`.
pub fn metrics_json(best_ranks: &[usize], ks: &[usize]) -> Result<String> {
    let report = MetricsReport::from_best_ranks(best_ranks)?;
    let mut obj = serde_json::Map::new();
    for &k in ks {
        obj.insert(
            format!("r{k}"),
            serde_json::json!(crate::retrieval::metrics::recall_at_k(best_ranks, k)),
        );
    }
    obj.insert("mir".into(), serde_json::json!(report.mir));
    obj.insert("queries".into(), serde_json::json!(report.queries));
    Ok(serde_json::to_string_pretty(&serde_json::Value::Object(obj)).unwrap() + "\n")
}
