use rayon::prelude::*;

use crate::data::{CaptionKey, FeatureStore};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, norm};
use crate::parallel::thread_pool;
use crate::retrieval::metrics::{relevance_map, Relevance};
use crate::retrieval::pool::EncodedPool;
use crate::retrieval::similarity::cosine_with_norms;

/// Captions ordered by descending cosine to one query.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query: String,
    pub entries: Vec<(CaptionKey, f64)>,
}

/// Pool row indices with similarities, best first. Equal similarities are
/// ordered by ascending caption key.
pub fn rank_indices(query: &[f32], pool: &EncodedPool) -> Result<Vec<(usize, f64)>> {
    if query.len() != pool.dim() {
        return Err(Error::dim(pool.dim(), query.len(), "query feature vs pool"));
    }
    if !all_finite(query) {
        return Err(Error::NonFinite {
            context: "query feature".into(),
        });
    }
    let qn = norm(query);
    let mut scored: Vec<(usize, f64)> = (0..pool.len())
        .map(|i| (i, cosine_with_norms(query, qn, pool.vector(i), pool.norm(i))))
        .collect();
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| pool.key_rank(a.0).cmp(&pool.key_rank(b.0)))
    });
    Ok(scored)
}

pub fn rank_captions(query_id: &str, query: &[f32], pool: &EncodedPool) -> Result<RankedList> {
    let entries = rank_indices(query, pool)?
        .into_iter()
        .map(|(i, s)| (pool.keys()[i].clone(), s))
        .collect();
    Ok(RankedList {
        query: query_id.to_owned(),
        entries,
    })
}

/// Ranks the pool for every query in store order, keeping the first `top`
/// entries of each list (all when `None`).
pub fn rank_all(
    queries: &FeatureStore,
    pool: &EncodedPool,
    top: Option<usize>,
    threads: usize,
) -> Result<Vec<RankedList>> {
    let lists: Vec<Result<RankedList>> = thread_pool(threads)?.install(|| {
        (0..queries.len())
            .into_par_iter()
            .map(|q| {
                let mut list = rank_captions(&queries.ids()[q], queries.vector(q), pool)?;
                if let Some(n) = top {
                    list.entries.truncate(n);
                }
                Ok(list)
            })
            .collect()
    });
    lists.into_iter().collect()
}

/// Best relevant rank and top-10 keys for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub query: String,
    pub best_rank: usize,
    pub top: Vec<CaptionKey>,
}

/// Ranks the pool for every query and locates its best relevant caption,
/// without materializing full ranked lists.
pub fn evaluate_queries(
    queries: &FeatureStore,
    pool: &EncodedPool,
    relevance: Relevance,
    threads: usize,
) -> Result<Vec<QueryOutcome>> {
    let rel = relevance_map(pool.keys(), queries.ids().iter().map(String::as_str), relevance)?;
    let outcomes: Vec<Result<QueryOutcome>> = thread_pool(threads)?.install(|| {
        (0..queries.len())
            .into_par_iter()
            .map(|q| {
                let id = &queries.ids()[q];
                let relevant = &rel[id];
                let order = rank_indices(queries.vector(q), pool)?;
                let best = order
                    .iter()
                    .position(|&(i, _)| relevant.contains(&pool.keys()[i]))
                    .expect("relevance map only holds pool keys");
                Ok(QueryOutcome {
                    query: id.clone(),
                    best_rank: best + 1,
                    top: order
                        .iter()
                        .take(10)
                        .map(|&(i, _)| pool.keys()[i].clone())
                        .collect(),
                })
            })
            .collect()
    });
    outcomes.into_iter().collect()
}
