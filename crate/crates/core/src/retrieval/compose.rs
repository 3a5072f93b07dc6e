use std::collections::BTreeMap;

use crate::data::FeatureStore;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, norm, Scalar};
use crate::nn::{predict, W2VVParams};
use crate::retrieval::similarity::cosine_with_norms;
use crate::text::SentenceEncoder;

/// `image − Σ r(sub) + Σ r(add)`, each r(w) being the prediction for the
/// one-word sentence `w`. A word both added and subtracted cancels exactly.
pub fn compose_query<T: Scalar>(
    image: &[f32],
    add: &[&str],
    sub: &[&str],
    params: &W2VVParams<T>,
    encoder: &SentenceEncoder,
) -> Result<Vec<f32>> {
    if image.len() != params.output_size() {
        return Err(Error::dim(
            params.output_size(),
            image.len(),
            "image feature vs model output",
        ));
    }
    let mut net: BTreeMap<&str, i64> = BTreeMap::new();
    for w in add {
        *net.entry(w).or_default() += 1;
    }
    for w in sub {
        *net.entry(w).or_default() -= 1;
    }
    let mut out: Vec<f64> = image.iter().map(|&x| x as f64).collect();
    for (word, coeff) in net.into_iter().filter(|&(_, c)| c != 0) {
        let r = predict(params, &encoder.encode(word)).map_err(|e| Error::Caption {
            key: word.to_owned(),
            source: Box::new(e),
        })?;
        for (o, v) in out.iter_mut().zip(&r) {
            *o += coeff as f64 * v.widen();
        }
    }
    let out: Vec<f32> = out.into_iter().map(|x| x as f32).collect();
    if !all_finite(&out) {
        return Err(Error::numeric("composed query"));
    }
    Ok(out)
}

/// Store entries by descending cosine to `query`, ties by ascending id.
pub fn nearest_features(query: &[f32], store: &FeatureStore, top: usize) -> Result<Vec<(String, f64)>> {
    if query.len() != store.dim() {
        return Err(Error::dim(store.dim(), query.len(), "query vs feature store"));
    }
    let qn = norm(query);
    let mut scored: Vec<(&str, f64)> = store
        .iter()
        .map(|(id, v)| (id, cosine_with_norms(query, qn, v, norm(v))))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(scored
        .into_iter()
        .take(top)
        .map(|(id, s)| (id.to_owned(), s))
        .collect())
}
