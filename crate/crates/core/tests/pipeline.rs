mod common;

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use w2vv::data::{CaptionSet, ModelCheckpoint, RunConfig, ValidationMetric};
use w2vv::nn::{init_params, W2VVParams};
use w2vv::retrieval::{cluster_separation, compose_query, encode_pool, nearest_features, rank_all};
use w2vv::train::{
    build_pairs, evaluate_loss, fit, prepare, run_epoch, FitInputs, OptimizerState, TrainingPair,
};
use w2vv::{thread_pool, Error};

fn inputs(f: &common::Fixture) -> FitInputs<'_> {
    FitInputs {
        train_captions: &f.captions,
        train_features: &f.features,
        val_captions: &f.captions,
        val_features: &f.features,
        embeddings: Some(&f.embeddings),
    }
}

fn toy() -> &'static (common::Fixture, ModelCheckpoint) {
    static TOY: OnceLock<(common::Fixture, ModelCheckpoint)> = OnceLock::new();
    TOY.get_or_init(|| {
        let f = common::pinned();
        let config = RunConfig {
            batch_size: 10,
            max_epochs: 60,
            validation_metric: ValidationMetric::NegativeMse,
            ..common::fixture_config()
        };
        let checkpoint = fit(&config, inputs(&f)).unwrap().checkpoint;
        (f, checkpoint)
    })
}

/// A tiny untrained model with its training pairs.
fn small(n_media: usize, dropout: f64) -> (RunConfig, W2VVParams<f32>, Vec<TrainingPair>) {
    let f = common::fixture(11, n_media, 5, 8);
    let config = RunConfig {
        hidden_sizes: vec![32],
        gru_hidden: 8,
        dropout,
        ..common::fixture_config()
    };
    let prepared = prepare(&config, &inputs(&f)).unwrap();
    let params = init_params(&config, &prepared.encoder, 8, config.seed).unwrap();
    (config, params, prepared.train)
}

fn epoch(
    config: &RunConfig,
    params: &mut W2VVParams<f32>,
    pairs: &[TrainingPair],
    batch: usize,
    seed: u64,
    threads: usize,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = OptimizerState::new(params, config.learning_rate, config.decay, config.epsilon);
    run_epoch(
        params,
        pairs,
        batch,
        config.dropout,
        &mut rng,
        &mut opt,
        &thread_pool(threads).unwrap(),
    )
    .unwrap()
}

#[test]
fn captions_of_one_medium_cluster_together() {
    let (f, checkpoint) = toy();
    let pool = encode_pool(checkpoint, &f.captions, 1).unwrap();
    let report = cluster_separation(&pool, 100_000, 1).unwrap();
    assert!(
        report.intra.mean < report.inter.mean,
        "intra {} vs inter {}",
        report.intra.mean,
        report.inter.mean
    );
    assert_eq!(report.intra.bins.iter().sum::<u64>(), report.intra.count);
}

#[test]
fn full_batch_loss_decreases_every_epoch() {
    // 4 media x 5 captions = 20 pairs.
    let (config, mut params, pairs) = small(4, 0.0);
    assert_eq!(pairs.len(), 20);
    let config = RunConfig {
        learning_rate: 1e-3,
        ..config
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut opt = OptimizerState::new(&params, config.learning_rate, config.decay, config.epsilon);
    let pool = thread_pool(1).unwrap();
    let mut losses = vec![evaluate_loss(&params, &pairs, 1).unwrap()];
    for _ in 0..5 {
        run_epoch(&mut params, &pairs, 20, 0.0, &mut rng, &mut opt, &pool).unwrap();
        losses.push(evaluate_loss(&params, &pairs, 1).unwrap());
    }
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn small_steps_never_raise_the_batch_loss() {
    let (config, mut params, pairs) = small(2, 0.0);
    let config = RunConfig {
        learning_rate: 1e-5,
        ..config
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut opt = OptimizerState::new(&params, config.learning_rate, config.decay, config.epsilon);
    let pool = thread_pool(1).unwrap();
    let mut prev = evaluate_loss(&params, &pairs, 1).unwrap();
    for _ in 0..3 {
        run_epoch(&mut params, &pairs, pairs.len(), 0.0, &mut rng, &mut opt, &pool).unwrap();
        let loss = evaluate_loss(&params, &pairs, 1).unwrap();
        assert!(loss <= prev + 1e-7, "{loss} after {prev}");
        prev = loss;
    }
}

#[test]
fn epochs_are_reproducible_across_runs_and_thread_counts() {
    let (config, base, pairs) = small(4, 0.2);
    let run = |threads| {
        let mut p = base.clone();
        let loss = epoch(&config, &mut p, &pairs, 3, 9, threads);
        (p, loss)
    };
    let (a, la) = run(1);
    let (b, lb) = run(1);
    let (c, lc) = run(3);
    assert_eq!(a, b);
    assert_eq!(la, lb);
    assert_eq!(a, c);
    assert_eq!(la, lc);
    assert_ne!(a, base);
}

#[test]
fn oversized_batch_is_a_single_update() {
    let (config, base, pairs) = small(2, 0.0);
    let mut once = base.clone();
    epoch(&config, &mut once, &pairs, pairs.len(), 4, 1);
    let mut oversized = base.clone();
    epoch(&config, &mut oversized, &pairs, 10 * pairs.len(), 4, 1);
    assert_eq!(once, oversized);

    // From a zero accumulator one step moves any coordinate by at most
    // lr / sqrt(1 - decay); a second step could exceed that.
    let bound = config.learning_rate / (1.0 - config.decay).sqrt();
    let deltas: Vec<f64> = once
        .tensors()
        .iter()
        .zip(base.tensors())
        .flat_map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (*x as f64 - *y as f64).abs())
                .collect::<Vec<_>>()
        })
        .collect();
    let max = deltas.iter().cloned().fold(0.0, f64::max);
    assert!(max <= bound * (1.0 + 1e-5), "{max} > {bound}");
    assert!(max >= bound * 0.99, "{max} is far below one full step {bound}");
}

#[test]
fn missing_features_are_reported_before_training() {
    let f = common::fixture(3, 4, 5, 8);
    let mut text = f.captions.to_text();
    text.push_str("ghost#0\ta caption without features\n");
    let captions = CaptionSet::parse(&text, "inline".as_ref()).unwrap();
    let prepared = prepare(&common::fixture_config(), &inputs(&f)).unwrap();
    match build_pairs(&prepared.encoder, &captions, &f.features) {
        Err(Error::Dataset(msg)) => assert!(msg.contains("ghost"), "{msg}"),
        other => panic!("expected a dataset error, got {:?}", other.map(|p| p.len())),
    }
}

#[test]
fn composition_identities() {
    let (f, checkpoint) = toy();
    let encoder = checkpoint.encoder().unwrap();
    let image = f.features.get("img03").unwrap();
    let params = &checkpoint.params;

    assert_eq!(compose_query(image, &[], &[], params, &encoder).unwrap(), image);
    assert_eq!(
        compose_query(image, &["topic1w2"], &["topic1w2"], params, &encoder).unwrap(),
        image
    );
    let shifted = compose_query(image, &["topic2w0", "topic2w1"], &["obj03"], params, &encoder).unwrap();
    assert_ne!(shifted, image);
    let hits = nearest_features(&shifted, &f.features, 5).unwrap();
    assert_eq!(hits.len(), 5);
    assert!(hits.windows(2).all(|w| w[0].1 >= w[1].1));
    // Unknown words contribute a prediction from an empty bag; still finite.
    compose_query(image, &["zzz-unknown"], &[], params, &encoder).unwrap();
}

#[test]
fn pool_encoding_and_ranking_ignore_thread_count() {
    let (f, checkpoint) = toy();
    let a = encode_pool(checkpoint, &f.captions, 1).unwrap();
    let b = encode_pool(checkpoint, &f.captions, 4).unwrap();
    assert_eq!(a.keys(), b.keys());
    assert!((0..a.len()).all(|i| a.vector(i) == b.vector(i)));
    assert_eq!(
        rank_all(&f.features, &a, None, 1).unwrap(),
        rank_all(&f.features, &b, Some(a.len()), 4).unwrap()
    );
}
