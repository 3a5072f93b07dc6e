//! Central-difference verification of the analytic gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{EmbeddingTable, RunConfig};
use crate::error::{Error, Result};
use crate::nn::{backward, forward, init_params, GradSet, Mode, W2VVParams};
use crate::text::{CaptionInput, SentenceEncoder, Vocabulary};
use crate::train::loss::mse_loss;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Tensor name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub total: usize,
}

fn loss(params: &W2VVParams<f64>, input: &CaptionInput, target: &[f32]) -> Result<f64> {
    // Eval mode: the loss must be a deterministic function of θ.
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let (r, _) = forward(params, input, Mode::Eval, 0.0, &mut rng)?;
    Ok(mse_loss(&r, target)?.0)
}

pub fn analytic_gradient(params: &W2VVParams<f64>, input: &CaptionInput, target: &[f32]) -> Result<GradSet> {
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let (r, trace) = forward(params, input, Mode::Eval, 0.0, &mut rng)?;
    let (_, dl_dr) = mse_loss(&r, target)?;
    backward(params, &trace, &dl_dr)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences with step `eps`. Tensors
/// larger than `max_per_tensor` are checked on a seeded random sample of
/// that many coordinates.
pub fn compare_gradients(
    params: &W2VVParams<f64>,
    input: &CaptionInput,
    target: &[f32],
    analytic: &GradSet,
    eps: f64,
    max_per_tensor: Option<usize>,
    seed: u64,
) -> Result<GradCheckReport> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Config("finite-difference step must be > 0".into()));
    }
    let specs = params.tensor_specs();
    let grads = analytic.tensors();
    if grads.len() != specs.len() {
        return Err(Error::Layout("gradient set does not match the model".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        checked: 0,
        total: specs.iter().map(|s| s.len()).sum(),
    };
    for (t, spec) in specs.iter().enumerate() {
        let n = spec.len();
        let coords: Vec<usize> = match max_per_tensor {
            Some(m) if m < n => {
                let mut c = sample(&mut rng, n, m).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        for i in coords {
            let original = probe.tensors()[t][i];
            probe.tensors_mut()[t][i] = original + eps;
            let up = loss(&probe, input, target)?;
            probe.tensors_mut()[t][i] = original - eps;
            let down = loss(&probe, input, target)?;
            probe.tensors_mut()[t][i] = original;
            let numeric = (up - down) / (2.0 * eps);
            let err = relative_error(grads[t][i], numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = Some((spec.name.clone(), i));
            }
        }
    }
    Ok(report)
}

pub fn grad_check(
    params: &W2VVParams<f64>,
    input: &CaptionInput,
    target: &[f32],
    eps: f64,
    max_per_tensor: Option<usize>,
    seed: u64,
) -> Result<GradCheckReport> {
    let analytic = analytic_gradient(params, input, target)?;
    compare_gradients(params, input, target, &analytic, eps, max_per_tensor, seed)
}

/// A seeded model small enough to check every coordinate: word vectors and
/// GRU state of width 4, one hidden layer of 8 units, 3 output dimensions,
/// and a two-token caption. Segments and output activation follow `config`.
pub fn tiny_problem(config: &RunConfig, seed: u64) -> Result<(W2VVParams<f64>, CaptionInput, Vec<f32>)> {
    const WIDTH: usize = 4;
    const OUTPUT: usize = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = ["red", "bird", "sky", "tree"];
    let vocab = Vocabulary::from_counts(
        words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.to_string(), 10 - i as u64))
            .collect(),
    );
    let mut table = EmbeddingTable::new(WIDTH)?;
    for w in words {
        let v: Vec<f32> = (0..WIDTH).map(|_| rng.gen_range(-1.0..1.0)).collect();
        table.insert(w, &v)?;
    }
    let tiny = RunConfig {
        hidden_sizes: vec![8],
        gru_hidden: WIDTH,
        embedding_dim: Some(WIDTH),
        dropout: 0.0,
        ..config.clone()
    };
    let encoder = SentenceEncoder::new(vocab, Some(table), &tiny.segments())?;
    let mut params = init_params(&tiny, &encoder, OUTPUT, rng.gen())?.cast::<f64>();
    // Nonzero biases so every bias gradient path is exercised.
    for t in params.tensors_mut() {
        if t.iter().all(|&x| x == 0.0) {
            t.iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5));
        }
    }
    let input = encoder.encode("red bird");
    let target: Vec<f32> = (0..OUTPUT).map(|_| rng.gen_range(0.0..1.0)).collect();
    Ok((params, input, target))
}
