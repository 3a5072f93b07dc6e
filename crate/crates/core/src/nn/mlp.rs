//! Multilayer perceptron mapping the sentence vector into the feature space.

use rand::Rng;

use crate::data::OutputActivation;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, Matrix, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Affine layer `W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            weight: Matrix::zeros(output, input),
            bias: vec![T::zero(); output],
        }
    }

    pub fn input_size(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_size(&self) -> usize {
        self.weight.rows()
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U + Copy) -> Dense<U> {
        Dense {
            weight: self.weight.map(f),
            bias: self.bias.iter().map(|&b| f(b)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    pub layers: Vec<Dense<T>>,
    pub output_activation: OutputActivation,
}

impl<T: Scalar> MlpParams<T> {
    /// Chains layers of the given widths, `sizes[0]` being the input width.
    pub fn zeros(sizes: &[usize], output_activation: OutputActivation) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output widths");
        MlpParams {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            output_activation,
        }
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input_size()
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output_size())
    }

    /// Input width followed by every layer's output width.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_size())
            .chain(self.layers.iter().map(|l| l.output_size()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache<T> {
    pub input: Vec<T>,
    pub pre_activation: Vec<T>,
    /// Inverted-dropout multipliers (0 or 1/(1-rate)); absent when no dropout ran.
    pub mask: Option<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpTrace<T> {
    pub layers: Vec<LayerCache<T>>,
}

/// Forward pass. In [`Mode::Train`] with a positive rate, inverted dropout is
/// applied to every hidden layer but never to the output.
pub fn mlp_forward<T: Scalar, R: Rng + ?Sized>(
    p: &MlpParams<T>,
    input: &[T],
    mode: Mode,
    dropout: f64,
    rng: &mut R,
) -> Result<(Vec<T>, MlpTrace<T>)> {
    if input.len() != p.input_size() {
        return Err(Error::dim(p.input_size(), input.len(), "mlp input"));
    }
    let last = p.layers.len() - 1;
    let keep_scale = 1.0 / (1.0 - dropout);
    let mut x = input.to_vec();
    let mut caches = Vec::with_capacity(p.layers.len());
    for (i, layer) in p.layers.iter().enumerate() {
        let pre: Vec<T> = layer
            .weight
            .matvec(&x)
            .into_iter()
            .zip(&layer.bias)
            .map(|(a, b)| T::narrow(a + b.widen()))
            .collect();
        if !all_finite(&pre) {
            return Err(Error::numeric(format!("mlp layer {i}")));
        }
        let relu = i < last || p.output_activation == OutputActivation::Relu;
        let mut out: Vec<T> = if relu {
            pre.iter().map(|&a| a.max(T::zero())).collect()
        } else {
            pre.clone()
        };
        let mask = if i < last && mode == Mode::Train && dropout > 0.0 {
            let mask: Vec<T> = (0..out.len())
                .map(|_| {
                    if rng.gen::<f64>() < dropout {
                        T::zero()
                    } else {
                        T::narrow(keep_scale)
                    }
                })
                .collect();
            for (o, &m) in out.iter_mut().zip(&mask) {
                *o = *o * m;
            }
            Some(mask)
        } else {
            None
        };
        caches.push(LayerCache {
            input: std::mem::replace(&mut x, out),
            pre_activation: pre,
            mask,
        });
    }
    Ok((x, MlpTrace { layers: caches }))
}

/// Backward pass: adds parameter gradients into `grads` and returns the
/// gradient with respect to input columns `input_window` (empty range for none).
pub fn mlp_backward<T: Scalar>(
    p: &MlpParams<T>,
    trace: &MlpTrace<T>,
    dl_dout: &[f64],
    grads: &mut [Dense<f64>],
    input_window: std::ops::Range<usize>,
) -> Result<Vec<f64>> {
    if trace.layers.len() != p.layers.len() || grads.len() != p.layers.len() {
        return Err(Error::Layout("mlp trace does not match parameters".into()));
    }
    if dl_dout.len() != p.output_size() {
        return Err(Error::dim(p.output_size(), dl_dout.len(), "output gradient"));
    }
    let last = p.layers.len() - 1;
    let mut d_out = dl_dout.to_vec();
    let mut d_input = vec![0.0; input_window.len()];
    for i in (0..p.layers.len()).rev() {
        let layer = &p.layers[i];
        let cache = &trace.layers[i];
        if cache.input.len() != layer.input_size() {
            return Err(Error::Layout("mlp trace does not match parameters".into()));
        }
        let relu = i < last || p.output_activation == OutputActivation::Relu;
        let d_pre: Vec<f64> = d_out
            .iter()
            .enumerate()
            .map(|(j, &d)| {
                let d = match &cache.mask {
                    Some(m) => d * m[j].widen(),
                    None => d,
                };
                if !relu || cache.pre_activation[j] > T::zero() {
                    d
                } else {
                    0.0
                }
            })
            .collect();
        grads[i].weight.add_outer(&d_pre, &cache.input);
        for (g, d) in grads[i].bias.iter_mut().zip(&d_pre) {
            *g += d;
        }
        if i > 0 {
            d_out = vec![0.0; layer.input_size()];
            layer.weight.add_matvec_transposed(&d_pre, &mut d_out);
        } else if !input_window.is_empty() {
            layer
                .weight
                .add_matvec_transposed_cols(&d_pre, input_window.start, &mut d_input);
        }
    }
    Ok(d_input)
}
