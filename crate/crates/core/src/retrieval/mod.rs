//! Caption retrieval in the visual feature space and its evaluation.

mod cluster;
mod compose;
mod metrics;
mod pool;
mod rank;
mod report;
mod similarity;

pub use cluster::{cluster_separation, group_by_media, ClusterReport, Histogram, HISTOGRAM_BINS};
pub use compose::{compose_query, nearest_features};
pub use metrics::{
    best_ranks, mean_inverted_rank, recall_at_k, relevance_map, MetricsReport, Relevance, RelevanceMap,
};
pub use pool::{encode_captions, encode_pool, EncodedPool};
pub use rank::{evaluate_queries, rank_all, rank_captions, rank_indices, QueryOutcome, RankedList};
pub use report::{
    metrics_json, outcomes_from_rankings, parse_ranking_dump, write_per_query, write_ranking_dump,
};
pub use similarity::cosine;
