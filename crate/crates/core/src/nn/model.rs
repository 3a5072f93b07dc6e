//! The full text-to-feature network: sentence vectorization, optional GRU
//! branch, and the MLP, with hand-derived gradients for every parameter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::RunConfig;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Scalar};
use crate::nn::gru::{gru_backward, gru_encode, GruParams, GruTrace};
use crate::nn::mlp::{mlp_backward, mlp_forward, Dense, MlpParams, MlpTrace, Mode};
use crate::text::{concat_multiscale, CaptionInput, Segment, SegmentLayout, SentenceEncoder};

/// Embedding width used for the GRU when neither a pretrained table nor
/// `embedding_dim` is given.
pub const DEFAULT_EMBEDDING_DIM: usize = 500;

/// Bound of the uniform draw for embedding rows missing from the pretrained table.
pub const EMBEDDING_FALLBACK_BOUND: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All trainable parameters plus the sentence-vector layout they expect.
#[derive(Debug, Clone, PartialEq)]
pub struct W2VVParams<T> {
    pub layout: SegmentLayout,
    pub gru: Option<GruParams<T>>,
    pub mlp: MlpParams<T>,
}

impl<T: Scalar> W2VVParams<T> {
    pub fn new(layout: SegmentLayout, gru: Option<GruParams<T>>, mlp: MlpParams<T>) -> Result<Self> {
        if mlp.layers.is_empty() {
            return Err(Error::Layout("the MLP needs at least one layer".into()));
        }
        for w in mlp.layers.windows(2) {
            if w[0].output_size() != w[1].input_size() {
                return Err(Error::Layout("consecutive MLP layers do not chain".into()));
            }
        }
        if mlp.input_size() != layout.total_len() {
            return Err(Error::dim(
                layout.total_len(),
                mlp.input_size(),
                "MLP input vs sentence layout",
            ));
        }
        match (layout.slot(Segment::Gru), &gru) {
            (Some(slot), Some(g)) if slot.len == g.hidden_size() => {}
            (None, None) => {}
            _ => {
                return Err(Error::Layout(
                    "GRU parameters do not match the gru segment of the layout".into(),
                ))
            }
        }
        Ok(W2VVParams { layout, gru, mlp })
    }

    pub fn output_size(&self) -> usize {
        self.mlp.output_size()
    }

    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        let mut specs = Vec::new();
        if let Some(g) = &self.gru {
            for (name, shape) in g.tensor_shapes() {
                specs.push(TensorSpec {
                    name: format!("gru.{name}"),
                    shape,
                });
            }
        }
        for (i, l) in self.mlp.layers.iter().enumerate() {
            specs.push(TensorSpec {
                name: format!("mlp.{i}.weight"),
                shape: vec![l.output_size(), l.input_size()],
            });
            specs.push(TensorSpec {
                name: format!("mlp.{i}.bias"),
                shape: vec![l.output_size()],
            });
        }
        specs
    }

    /// Flat views of every tensor, in the order of [`Self::tensor_specs`].
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out = self.gru.as_ref().map_or_else(Vec::new, |g| g.tensors());
        for l in &self.mlp.layers {
            out.push(l.weight.as_slice());
            out.push(&l.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = self.gru.as_mut().map_or_else(Vec::new, |g| g.tensors_mut());
        for l in &mut self.mlp.layers {
            out.push(l.weight.as_mut_slice());
            out.push(&mut l.bias);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> W2VVParams<U> {
        let f = |x: T| U::narrow(x.widen());
        W2VVParams {
            layout: self.layout.clone(),
            gru: self.gru.as_ref().map(|g| g.map(f)),
            mlp: MlpParams {
                layers: self.mlp.layers.iter().map(|l| l.map(f)).collect(),
                output_activation: self.mlp.output_activation,
            },
        }
    }
}

/// One gradient tensor per parameter tensor, accumulated in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSet {
    pub gru: Option<GruParams<f64>>,
    pub mlp: Vec<Dense<f64>>,
}

impl GradSet {
    pub fn zeros_like<T: Scalar>(model: &W2VVParams<T>) -> Self {
        GradSet {
            gru: model
                .gru
                .as_ref()
                .map(|g| GruParams::zeros(g.vocab_size(), g.input_size(), g.hidden_size())),
            mlp: model
                .mlp
                .layers
                .iter()
                .map(|l| Dense::zeros(l.input_size(), l.output_size()))
                .collect(),
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = self.gru.as_ref().map_or_else(Vec::new, |g| g.tensors());
        for l in &self.mlp {
            out.push(l.weight.as_slice());
            out.push(&l.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.gru.as_mut().map_or_else(Vec::new, |g| g.tensors_mut());
        for l in &mut self.mlp {
            out.push(l.weight.as_mut_slice());
            out.push(&mut l.bias);
        }
        out
    }

    /// `self += other`, tensor by tensor.
    pub fn add(&mut self, other: &GradSet) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    pub gru: Option<GruTrace<T>>,
    pub mlp: MlpTrace<T>,
}

/// Xavier-style symmetric uniform bound.
fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Draws a fresh parameter set. GRU embedding rows are copied from the
/// encoder's pretrained table where the word exists; everything else is
/// seeded uniform noise and all biases start at zero.
pub fn init_params(
    config: &RunConfig,
    encoder: &SentenceEncoder,
    feature_dim: usize,
    seed: u64,
) -> Result<W2VVParams<f32>> {
    if feature_dim == 0 {
        return Err(Error::Config("feature dimensionality must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gru = if encoder.uses(Segment::Gru) {
        let input = match (encoder.table(), config.embedding_dim) {
            (Some(t), Some(e)) if t.dim() != e => {
                return Err(Error::dim(
                    e,
                    t.dim(),
                    "pretrained embedding width vs embedding_dim",
                ))
            }
            (Some(t), _) => t.dim(),
            (None, e) => e.unwrap_or(DEFAULT_EMBEDDING_DIM),
        };
        let hidden = config.gru_hidden;
        let vocab = encoder.vocab();
        let mut embedding = Matrix::zeros(vocab.len(), input);
        for (i, word) in vocab.words().iter().enumerate() {
            let row = embedding.row_mut(i);
            match encoder.table().and_then(|t| t.get(word)) {
                Some(v) => row.copy_from_slice(v),
                None => row.iter_mut().for_each(|x| {
                    *x = rng.gen_range(-EMBEDDING_FALLBACK_BOUND..=EMBEDDING_FALLBACK_BOUND) as f32
                }),
            }
        }
        let mut draw = |rows, cols| Matrix::uniform(rows, cols, glorot_bound(cols, rows), &mut rng);
        let w_zv = draw(hidden, input);
        let w_zh = draw(hidden, hidden);
        let w_rv = draw(hidden, input);
        let w_rh = draw(hidden, hidden);
        let w_hv = draw(hidden, input);
        let w_hh = draw(hidden, hidden);
        Some(GruParams {
            embedding,
            w_zv,
            w_zh,
            b_z: vec![0.0; hidden],
            w_rv,
            w_rh,
            b_r: vec![0.0; hidden],
            w_hv,
            w_hh,
            b_h: vec![0.0; hidden],
        })
    } else {
        None
    };
    let layout = encoder.layout(config.gru_hidden);
    let mut sizes = vec![layout.total_len()];
    sizes.extend(&config.hidden_sizes);
    sizes.push(feature_dim);
    let layers = sizes
        .windows(2)
        .map(|w| Dense {
            weight: Matrix::uniform(w[1], w[0], glorot_bound(w[0], w[1]), &mut rng),
            bias: vec![0.0; w[1]],
        })
        .collect();
    W2VVParams::new(
        layout,
        gru,
        MlpParams {
            layers,
            output_activation: config.output_activation,
        },
    )
}

/// Builds s(q) for `input`, running the GRU branch when the layout has one.
fn sentence_vector<T: Scalar>(
    model: &W2VVParams<T>,
    input: &CaptionInput,
) -> Result<(Vec<T>, Option<GruTrace<T>>)> {
    if input.segments != model.layout.segments() {
        return Err(Error::Layout(format!(
            "caption encoded with segments {:?}, model expects {:?}",
            input.segments,
            model.layout.segments()
        )));
    }
    let mut parts = Vec::with_capacity(3);
    let mut gru_trace = None;
    for slot in model.layout.slots() {
        let part = match slot.segment {
            Segment::Bow => {
                let mut v = vec![T::zero(); slot.len];
                for &(i, c) in &input.bow {
                    *v.get_mut(i).ok_or_else(|| {
                        Error::Layout(format!("bow index {i} outside vocabulary of {}", slot.len))
                    })? = T::narrow(c);
                }
                v
            }
            Segment::MeanEmbedding => {
                if input.mean.len() != slot.len {
                    return Err(Error::dim(slot.len, input.mean.len(), "mean-embedding segment"));
                }
                input.mean.iter().map(|&x| T::narrow(x as f64)).collect()
            }
            Segment::Gru => {
                let gru = model.gru.as_ref().expect("validated layout has GRU parameters");
                let (h, trace) = gru_encode(gru, &input.tokens)?;
                gru_trace = Some(trace);
                h
            }
        };
        parts.push((slot.segment, part));
    }
    let s = concat_multiscale(parts)?;
    debug_assert_eq!(s.layout, model.layout);
    Ok((s.data, gru_trace))
}

/// r(q) for one caption.
pub fn forward<T: Scalar, R: Rng + ?Sized>(
    model: &W2VVParams<T>,
    input: &CaptionInput,
    mode: Mode,
    dropout: f64,
    rng: &mut R,
) -> Result<(Vec<T>, ForwardTrace<T>)> {
    let (s, gru) = sentence_vector(model, input)?;
    let (r, mlp) = mlp_forward(&model.mlp, &s, mode, dropout, rng)?;
    Ok((r, ForwardTrace { gru, mlp }))
}

/// Deterministic inference: eval mode, no dropout.
pub fn predict<T: Scalar>(model: &W2VVParams<T>, input: &CaptionInput) -> Result<Vec<T>> {
    // Eval mode never draws from the generator.
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    Ok(forward(model, input, Mode::Eval, 0.0, &mut rng)?.0)
}

/// Adds the gradients of the loss with respect to every parameter into `grads`.
pub fn accumulate_gradients<T: Scalar>(
    model: &W2VVParams<T>,
    trace: &ForwardTrace<T>,
    dl_dr: &[f64],
    grads: &mut GradSet,
) -> Result<()> {
    let gru_window = model
        .layout
        .slot(Segment::Gru)
        .map_or(0..0, |s| s.offset..s.offset + s.len);
    let d_gru = mlp_backward(&model.mlp, &trace.mlp, dl_dr, &mut grads.mlp, gru_window)?;
    match (&model.gru, &trace.gru, &mut grads.gru) {
        (Some(p), Some(t), Some(g)) => gru_backward(p, t, &d_gru, g),
        (None, None, None) => Ok(()),
        _ => Err(Error::Layout("trace does not match the model".into())),
    }
}

pub fn backward<T: Scalar>(model: &W2VVParams<T>, trace: &ForwardTrace<T>, dl_dr: &[f64]) -> Result<GradSet> {
    let mut grads = GradSet::zeros_like(model);
    accumulate_gradients(model, trace, dl_dr, &mut grads)?;
    Ok(grads)
}
