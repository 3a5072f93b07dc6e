//! Mini-batch training and the epoch loop with validation-driven schedule.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::data::{
    CaptionKey, CaptionSet, EmbeddingTable, FeatureStore, ModelCheckpoint, RunConfig, ValidationMetric,
};
use crate::error::{Error, Result};
use crate::nn::{accumulate_gradients, forward, init_params, predict, GradSet, Mode, W2VVParams};
use crate::parallel::thread_pool;
use crate::retrieval::{encode_captions, evaluate_queries, MetricsReport, Relevance};
use crate::text::{CaptionInput, SentenceEncoder, Vocabulary};
use crate::train::loss::mse_loss;
use crate::train::rmsprop::OptimizerState;
use crate::train::schedule::Schedule;

/// Every batch is split into at most this many contiguous parts whose
/// gradients are summed in order, so results do not depend on thread count.
const GRAD_PARTS: usize = 4;

/// One (caption, medium feature) example.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub key: CaptionKey,
    pub input: CaptionInput,
    pub target: Vec<f32>,
}

/// Pairs every caption with its medium's feature vector.
pub fn build_pairs(
    encoder: &SentenceEncoder,
    captions: &CaptionSet,
    features: &FeatureStore,
) -> Result<Vec<TrainingPair>> {
    let missing: Vec<&str> = captions
        .media_ids()
        .into_iter()
        .filter(|id| !features.contains(id))
        .collect();
    if !missing.is_empty() {
        const SHOWN: usize = 10;
        let mut listed = missing[..missing.len().min(SHOWN)].join(", ");
        if missing.len() > SHOWN {
            listed.push_str(&format!(" and {} more", missing.len() - SHOWN));
        }
        return Err(Error::Dataset(format!("media without features: {listed}")));
    }
    Ok(captions
        .records()
        .iter()
        .map(|r| TrainingPair {
            key: r.key.clone(),
            input: encoder.encode(&r.text),
            target: features.get(&r.key.media_id).expect("checked above").to_vec(),
        })
        .collect())
}

fn with_key(key: &CaptionKey, e: Error) -> Error {
    Error::Caption {
        key: key.to_string(),
        source: Box::new(e),
    }
}

/// Summed gradient and summed loss over `pairs`, each example using its own
/// dropout generator seeded from `seeds`.
fn batch_gradient(
    params: &W2VVParams<f32>,
    pairs: &[&TrainingPair],
    seeds: &[u64],
    dropout: f64,
    pool: &ThreadPool,
) -> Result<(GradSet, f64)> {
    let part_len = pairs.len().div_ceil(GRAD_PARTS).max(1);
    let parts: Vec<Result<(GradSet, f64)>> = pool.install(|| {
        pairs
            .par_chunks(part_len)
            .zip(seeds.par_chunks(part_len))
            .map(|(chunk, seeds)| {
                let mut grads = GradSet::zeros_like(params);
                let mut loss = 0.0;
                for (pair, &seed) in chunk.iter().zip(seeds) {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let (r, trace) = forward(params, &pair.input, Mode::Train, dropout, &mut rng)
                        .map_err(|e| with_key(&pair.key, e))?;
                    let (l, dl_dr) = mse_loss(&r, &pair.target).map_err(|e| with_key(&pair.key, e))?;
                    accumulate_gradients(params, &trace, &dl_dr, &mut grads)
                        .map_err(|e| with_key(&pair.key, e))?;
                    loss += l;
                }
                Ok((grads, loss))
            })
            .collect()
    });
    let mut parts = parts.into_iter();
    let (mut total, mut loss) = parts.next().expect("non-empty batch")?;
    for part in parts {
        let (g, l) = part?;
        total.add(&g);
        loss += l;
    }
    Ok((total, loss))
}

/// One pass over `pairs` in an order shuffled by `rng`, one RMSprop update per
/// mini-batch on the gradient of the batch-mean loss. Returns the mean
/// per-pair training loss.
pub fn run_epoch(
    params: &mut W2VVParams<f32>,
    pairs: &[TrainingPair],
    batch_size: usize,
    dropout: f64,
    rng: &mut ChaCha8Rng,
    optimizer: &mut OptimizerState,
    pool: &ThreadPool,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Dataset("no training pairs".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(rng);
    let mut total_loss = 0.0;
    for batch in order.chunks(batch_size) {
        let batch: Vec<&TrainingPair> = batch.iter().map(|&i| &pairs[i]).collect();
        let seeds: Vec<u64> = batch.iter().map(|_| rng.gen()).collect();
        let (mut grads, loss) = batch_gradient(params, &batch, &seeds, dropout, pool)?;
        grads.scale(1.0 / batch.len() as f64);
        optimizer.update(params, &grads)?;
        total_loss += loss;
    }
    Ok(total_loss / pairs.len() as f64)
}

/// Mean eval-mode MSE over `pairs`.
pub fn evaluate_loss(params: &W2VVParams<f32>, pairs: &[TrainingPair], threads: usize) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Dataset("no pairs to evaluate".into()));
    }
    let losses: Vec<Result<f64>> = thread_pool(threads)?.install(|| {
        pairs
            .par_iter()
            .map(|p| {
                let r = predict(params, &p.input).map_err(|e| with_key(&p.key, e))?;
                Ok(mse_loss(&r, &p.target)?.0)
            })
            .collect()
    });
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(sum / pairs.len() as f64)
}

/// Caption retrieval on `captions`: each medium's feature queries the encoded
/// captions; all captions of the medium are relevant.
pub fn retrieval_metrics(
    params: &W2VVParams<f32>,
    encoder: &SentenceEncoder,
    captions: &CaptionSet,
    features: &FeatureStore,
    threads: usize,
) -> Result<MetricsReport> {
    let pool = encode_captions(params, encoder, captions, threads, None)?;
    let mut queries = FeatureStore::new(features.dim())?;
    for id in captions.media_ids() {
        let v = features
            .get(id)
            .ok_or_else(|| Error::Dataset(format!("medium {id} has no feature vector")))?;
        queries.push(id, v)?;
    }
    let outcomes = evaluate_queries(&queries, &pool, Relevance::SharedMedia, threads)?;
    let ranks: Vec<usize> = outcomes.iter().map(|o| o.best_rank).collect();
    MetricsReport::from_best_ranks(&ranks)
}

/// Everything `fit` reads.
#[derive(Debug, Clone, Copy)]
pub struct FitInputs<'a> {
    pub train_captions: &'a CaptionSet,
    pub train_features: &'a FeatureStore,
    pub val_captions: &'a CaptionSet,
    pub val_features: &'a FeatureStore,
    /// Pretrained word vectors for the mean-embedding segment and GRU initialization.
    pub embeddings: Option<&'a EmbeddingTable>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_score: f64,
    /// Learning rate in effect during the epoch.
    pub learning_rate: f64,
    /// No-improvement streak after this epoch.
    pub streak: usize,
    pub improved: bool,
    pub halved: bool,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{:.6}\t{:.6}\t{:e}\t{}",
            self.epoch, self.train_loss, self.val_score, self.learning_rate, self.streak
        )
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Parameters from the best-scoring epoch.
    pub checkpoint: ModelCheckpoint,
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Data and model prepared for training.
pub struct Prepared {
    pub encoder: SentenceEncoder,
    pub train: Vec<TrainingPair>,
    pub val: Vec<TrainingPair>,
}

pub fn prepare(config: &RunConfig, inputs: &FitInputs) -> Result<Prepared> {
    config.validate()?;
    if inputs.train_captions.is_empty() || inputs.val_captions.is_empty() {
        return Err(Error::Dataset(
            "training and validation captions must be non-empty".into(),
        ));
    }
    if inputs.train_features.dim() != inputs.val_features.dim() {
        return Err(Error::dim(
            inputs.train_features.dim(),
            inputs.val_features.dim(),
            "validation vs training feature dim",
        ));
    }
    let vocab = Vocabulary::build(inputs.train_captions, config.min_count)?;
    let encoder = SentenceEncoder::new(vocab, inputs.embeddings.cloned(), &config.segments())?;
    let train = build_pairs(&encoder, inputs.train_captions, inputs.train_features)?;
    let val = build_pairs(&encoder, inputs.val_captions, inputs.val_features)?;
    Ok(Prepared { encoder, train, val })
}

/// Trains with the validation score chosen in `config`.
pub fn fit(config: &RunConfig, inputs: FitInputs) -> Result<FitOutcome> {
    fit_with(config, inputs, None, &mut |_, _| Ok(()))
}

pub type Validator<'v> = dyn FnMut(&W2VVParams<f32>, usize) -> Result<f64> + 'v;
pub type EpochObserver<'o> = dyn FnMut(&EpochLog, Option<&ModelCheckpoint>) -> Result<()> + 'o;

/// Full training loop. `validator`, when given, replaces the configured
/// validation score (it receives the parameters and the 1-based epoch).
/// `on_epoch` sees every epoch's log line and, on improvement, the new best
/// checkpoint.
pub fn fit_with(
    config: &RunConfig,
    inputs: FitInputs,
    mut validator: Option<&mut Validator>,
    on_epoch: &mut EpochObserver,
) -> Result<FitOutcome> {
    let prepared = prepare(config, &inputs)?;
    let feature_dim = inputs.train_features.dim();
    let mut params = init_params(config, &prepared.encoder, feature_dim, config.seed)?;
    let mut optimizer = OptimizerState::new(&params, config.learning_rate, config.decay, config.epsilon);
    let mut schedule = Schedule::new(config.learning_rate, config.halve_patience, config.stop_patience);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let pool = thread_pool(config.threads)?;

    let mut history = Vec::new();
    let mut best: Option<(usize, f64, W2VVParams<f32>)> = None;
    let mut stopped_early = false;
    for epoch in 1..=config.max_epochs {
        let lr = schedule.learning_rate();
        optimizer.learning_rate = lr;
        let train_loss = run_epoch(
            &mut params,
            &prepared.train,
            config.batch_size,
            config.dropout,
            &mut rng,
            &mut optimizer,
            &pool,
        )?;
        let val_score = match validator.as_mut() {
            Some(v) => v(&params, epoch)?,
            None => match config.validation_metric {
                ValidationMetric::RecallSum => retrieval_metrics(
                    &params,
                    &prepared.encoder,
                    inputs.val_captions,
                    inputs.val_features,
                    config.threads,
                )?
                .recall_sum(),
                ValidationMetric::NegativeMse => -evaluate_loss(&params, &prepared.val, config.threads)?,
            },
        };
        let decision = schedule.observe(val_score);
        let log = EpochLog {
            epoch,
            train_loss,
            val_score,
            learning_rate: lr,
            streak: schedule.streak(),
            improved: decision.improved,
            halved: decision.halved,
        };
        log::info!("{log}");
        if decision.improved || best.is_none() {
            best = Some((epoch, val_score, params.clone()));
            let (e, s, p) = best.as_ref().unwrap();
            let ck = ModelCheckpoint::new(p.clone(), &prepared.encoder, config, Some(*e), Some(*s))?;
            on_epoch(&log, Some(&ck))?;
        } else {
            on_epoch(&log, None)?;
        }
        history.push(log);
        if decision.stop {
            stopped_early = true;
            break;
        }
    }
    let (best_epoch, score, best_params) = best.expect("at least one epoch runs");
    let checkpoint = ModelCheckpoint::new(
        best_params,
        &prepared.encoder,
        config,
        Some(best_epoch),
        Some(score),
    )?;
    Ok(FitOutcome {
        checkpoint,
        history,
        best_epoch,
        stopped_early,
    })
}
