//! Distances between encodings of captions of the same medium (intra) and of
//! different media (inter).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::pool::EncodedPool;
use crate::retrieval::similarity::cosine_with_norms;

pub const HISTOGRAM_BINS: usize = 64;
/// Cosine distance lies in [0, 2].
pub const MAX_DISTANCE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: Vec<u64>,
    pub count: u64,
    pub mean: f64,
}

impl Histogram {
    fn from_distances(distances: impl Iterator<Item = f64>) -> Self {
        let mut bins = vec![0u64; HISTOGRAM_BINS];
        let (mut count, mut sum) = (0u64, 0.0);
        for d in distances {
            let b = ((d / MAX_DISTANCE) * HISTOGRAM_BINS as f64).floor();
            bins[(b.max(0.0) as usize).min(HISTOGRAM_BINS - 1)] += 1;
            count += 1;
            sum += d;
        }
        Histogram {
            bins,
            count,
            mean: if count > 0 { sum / count as f64 } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub intra: Histogram,
    pub inter: Histogram,
    /// Whether inter pairs were sampled rather than enumerated.
    pub inter_sampled: bool,
}

/// Groups pool rows by media id.
pub fn group_by_media(pool: &EncodedPool) -> BTreeMap<String, Vec<usize>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, k) in pool.keys().iter().enumerate() {
        groups.entry(k.media_id.clone()).or_default().push(i);
    }
    groups
}

/// Intra- and inter-medium cosine distance histograms. Inter pairs are
/// enumerated when there are at most `max_inter_pairs` of them, otherwise that
/// many pairs are drawn with a generator seeded by `seed`.
pub fn cluster_separation(pool: &EncodedPool, max_inter_pairs: usize, seed: u64) -> Result<ClusterReport> {
    let groups = group_by_media(pool);
    if groups.len() < 2 || groups.values().all(|g| g.len() < 2) {
        return Err(Error::Protocol(
            "cluster separation needs two media and one medium with two captions".into(),
        ));
    }
    let distance = |i: usize, j: usize| {
        let c = cosine_with_norms(pool.vector(i), pool.norm(i), pool.vector(j), pool.norm(j));
        (1.0 - c).clamp(0.0, MAX_DISTANCE)
    };
    let intra = Histogram::from_distances(
        groups
            .values()
            .flat_map(|g| (0..g.len()).flat_map(move |a| ((a + 1)..g.len()).map(move |b| (g[a], g[b]))))
            .map(|(i, j)| distance(i, j)),
    );

    let group_of: Vec<usize> = {
        let mut v = vec![0; pool.len()];
        for (gi, g) in groups.values().enumerate() {
            for &i in g {
                v[i] = gi;
            }
        }
        v
    };
    let n = pool.len() as u128;
    let same: u128 = groups
        .values()
        .map(|g| (g.len() as u128) * (g.len() as u128 - 1) / 2)
        .sum();
    let total_inter = n * (n - 1) / 2 - same;
    let (inter, sampled) = if total_inter <= max_inter_pairs as u128 {
        let pairs = (0..pool.len()).flat_map(|i| ((i + 1)..pool.len()).map(move |j| (i, j)));
        let h = Histogram::from_distances(
            pairs
                .filter(|&(i, j)| group_of[i] != group_of[j])
                .map(|(i, j)| distance(i, j)),
        );
        (h, false)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut drawn = Vec::with_capacity(max_inter_pairs);
        while drawn.len() < max_inter_pairs {
            let i = rng.gen_range(0..pool.len());
            let j = rng.gen_range(0..pool.len());
            if group_of[i] != group_of[j] {
                drawn.push(distance(i, j));
            }
        }
        (Histogram::from_distances(drawn.into_iter()), true)
    };
    Ok(ClusterReport {
        intra,
        inter,
        inter_sampled: sampled,
    })
}
