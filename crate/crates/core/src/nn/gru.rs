//! Gated recurrent unit sentence encoder with backpropagation through time.
//!
//! One step, with σ the logistic function:
//!
//! ```text
//! z_t = σ(W_zv v_t + W_zh h_{t-1} + b_z)
//! r_t = σ(W_rv v_t + W_rh h_{t-1} + b_r)
//! c_t = tanh(W_hv v_t + W_hh (r_t ⊙ h_{t-1}) + b_h)
//! h_t = (1 - z_t) ⊙ h_{t-1} + z_t ⊙ c_t
//! ```
//!
//! `v_t` is row `token_t` of the trainable embedding table. The sentence
//! encoding is the state after the last token, or zero for an empty sentence.

use crate::error::{Error, Result};
use crate::linalg::{all_finite, sigmoid, Matrix, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<T> {
    /// Word embedding table, vocabulary × embedding width.
    pub embedding: Matrix<T>,
    pub w_zv: Matrix<T>,
    pub w_zh: Matrix<T>,
    pub b_z: Vec<T>,
    pub w_rv: Matrix<T>,
    pub w_rh: Matrix<T>,
    pub b_r: Vec<T>,
    pub w_hv: Matrix<T>,
    pub w_hh: Matrix<T>,
    pub b_h: Vec<T>,
}

impl<T: Scalar> GruParams<T> {
    pub fn zeros(vocab: usize, input: usize, hidden: usize) -> Self {
        GruParams {
            embedding: Matrix::zeros(vocab, input),
            w_zv: Matrix::zeros(hidden, input),
            w_zh: Matrix::zeros(hidden, hidden),
            b_z: vec![T::zero(); hidden],
            w_rv: Matrix::zeros(hidden, input),
            w_rh: Matrix::zeros(hidden, hidden),
            b_r: vec![T::zero(); hidden],
            w_hv: Matrix::zeros(hidden, input),
            w_hh: Matrix::zeros(hidden, hidden),
            b_h: vec![T::zero(); hidden],
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn input_size(&self) -> usize {
        self.embedding.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.b_z.len()
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U + Copy) -> GruParams<U> {
        let v = |x: &Vec<T>| x.iter().map(|&a| f(a)).collect();
        GruParams {
            embedding: self.embedding.map(f),
            w_zv: self.w_zv.map(f),
            w_zh: self.w_zh.map(f),
            b_z: v(&self.b_z),
            w_rv: self.w_rv.map(f),
            w_rh: self.w_rh.map(f),
            b_r: v(&self.b_r),
            w_hv: self.w_hv.map(f),
            w_hh: self.w_hh.map(f),
            b_h: v(&self.b_h),
        }
    }

    /// `(name, shape)` of every tensor in serialization order.
    pub fn tensor_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let m = |x: &Matrix<T>| vec![x.rows(), x.cols()];
        let v = |x: &Vec<T>| vec![x.len()];
        vec![
            ("embedding", m(&self.embedding)),
            ("w_zv", m(&self.w_zv)),
            ("w_zh", m(&self.w_zh)),
            ("b_z", v(&self.b_z)),
            ("w_rv", m(&self.w_rv)),
            ("w_rh", m(&self.w_rh)),
            ("b_r", v(&self.b_r)),
            ("w_hv", m(&self.w_hv)),
            ("w_hh", m(&self.w_hh)),
            ("b_h", v(&self.b_h)),
        ]
    }

    pub fn tensors(&self) -> Vec<&[T]> {
        vec![
            self.embedding.as_slice(),
            self.w_zv.as_slice(),
            self.w_zh.as_slice(),
            &self.b_z,
            self.w_rv.as_slice(),
            self.w_rh.as_slice(),
            &self.b_r,
            self.w_hv.as_slice(),
            self.w_hh.as_slice(),
            &self.b_h,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.embedding.as_mut_slice(),
            self.w_zv.as_mut_slice(),
            self.w_zh.as_mut_slice(),
            &mut self.b_z,
            self.w_rv.as_mut_slice(),
            self.w_rh.as_mut_slice(),
            &mut self.b_r,
            self.w_hv.as_mut_slice(),
            self.w_hh.as_mut_slice(),
            &mut self.b_h,
        ]
    }
}

/// Values cached by one step for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GruStepCache<T> {
    pub token: usize,
    pub h_prev: Vec<T>,
    pub update: Vec<T>,
    pub reset: Vec<T>,
    /// `r_t ⊙ h_{t-1}`
    pub reset_prev: Vec<T>,
    pub candidate: Vec<T>,
    pub h: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruTrace<T> {
    pub hidden: usize,
    pub steps: Vec<GruStepCache<T>>,
}

fn affine<T: Scalar>(wv: &Matrix<T>, v: &[T], wh: &Matrix<T>, h: &[T], b: &[T]) -> Vec<f64> {
    let mut out = wv.matvec(v);
    for ((o, x), bias) in out.iter_mut().zip(wh.matvec(h)).zip(b) {
        *o += x + bias.widen();
    }
    out
}

fn checked<T: Scalar>(values: Vec<T>, what: &str) -> Result<Vec<T>> {
    if all_finite(&values) {
        Ok(values)
    } else {
        Err(Error::numeric(what))
    }
}

/// One recurrent step on an explicit input vector.
pub fn gru_step<T: Scalar>(p: &GruParams<T>, v: &[T], h_prev: &[T]) -> Result<(Vec<T>, GruStepCache<T>)> {
    if v.len() != p.input_size() {
        return Err(Error::dim(p.input_size(), v.len(), "gru input"));
    }
    if h_prev.len() != p.hidden_size() {
        return Err(Error::dim(p.hidden_size(), h_prev.len(), "gru state"));
    }
    let update: Vec<T> = affine(&p.w_zv, v, &p.w_zh, h_prev, &p.b_z)
        .into_iter()
        .map(|a| T::narrow(sigmoid(a)))
        .collect();
    let update = checked(update, "update gate")?;
    let reset: Vec<T> = affine(&p.w_rv, v, &p.w_rh, h_prev, &p.b_r)
        .into_iter()
        .map(|a| T::narrow(sigmoid(a)))
        .collect();
    let reset = checked(reset, "reset gate")?;
    let reset_prev: Vec<T> = reset.iter().zip(h_prev).map(|(&r, &h)| r * h).collect();
    let candidate: Vec<T> = affine(&p.w_hv, v, &p.w_hh, &reset_prev, &p.b_h)
        .into_iter()
        .map(|a| T::narrow(a.tanh()))
        .collect();
    let candidate = checked(candidate, "candidate state")?;
    let h: Vec<T> = h_prev
        .iter()
        .zip(&update)
        .zip(&candidate)
        .map(|((&hp, &z), &c)| {
            let z = z.widen();
            T::narrow((1.0 - z) * hp.widen() + z * c.widen())
        })
        .collect();
    let h = checked(h, "hidden state")?;
    let cache = GruStepCache {
        token: usize::MAX,
        h_prev: h_prev.to_vec(),
        update,
        reset,
        reset_prev,
        candidate,
        h: h.clone(),
    };
    Ok((h, cache))
}

/// Runs the GRU over embedding-table rows `tokens` from a zero state.
pub fn gru_encode<T: Scalar>(p: &GruParams<T>, tokens: &[usize]) -> Result<(Vec<T>, GruTrace<T>)> {
    let hidden = p.hidden_size();
    let mut h = vec![T::zero(); hidden];
    let mut steps = Vec::with_capacity(tokens.len());
    for &token in tokens {
        if token >= p.vocab_size() {
            return Err(Error::Vocabulary {
                index: token,
                rows: p.vocab_size(),
            });
        }
        let (next, mut cache) = gru_step(p, p.embedding.row(token), &h)?;
        cache.token = token;
        steps.push(cache);
        h = next;
    }
    Ok((h, GruTrace { hidden, steps }))
}

/// Backpropagation through time. Adds parameter gradients for `dl_dh`, the
/// gradient at the final state, into `grads`.
pub fn gru_backward<T: Scalar>(
    p: &GruParams<T>,
    trace: &GruTrace<T>,
    dl_dh: &[f64],
    grads: &mut GruParams<f64>,
) -> Result<()> {
    let hidden = p.hidden_size();
    if trace.hidden != hidden || dl_dh.len() != hidden {
        return Err(Error::Layout("gru trace does not match parameters".into()));
    }
    let mut dh = dl_dh.to_vec();
    let mut d_cand_pre = vec![0.0; hidden];
    let mut d_update_pre = vec![0.0; hidden];
    let mut d_reset_pre = vec![0.0; hidden];
    let mut d_reset_prev = vec![0.0; hidden];
    let mut dv = vec![0.0; p.input_size()];
    for step in trace.steps.iter().rev() {
        let v = p.embedding.row(step.token);
        let mut dh_prev = vec![0.0; hidden];
        for i in 0..hidden {
            let hp = step.h_prev[i].widen();
            let z = step.update[i].widen();
            let c = step.candidate[i].widen();
            let dz = dh[i] * (c - hp);
            let dc = dh[i] * z;
            dh_prev[i] = dh[i] * (1.0 - z);
            d_cand_pre[i] = dc * (1.0 - c * c);
            d_update_pre[i] = dz * z * (1.0 - z);
        }

        grads.w_hv.add_outer(&d_cand_pre, v);
        grads.w_hh.add_outer(&d_cand_pre, &step.reset_prev);
        add_into(&mut grads.b_h, &d_cand_pre);
        d_reset_prev.iter_mut().for_each(|x| *x = 0.0);
        p.w_hh.add_matvec_transposed(&d_cand_pre, &mut d_reset_prev);
        for i in 0..hidden {
            let r = step.reset[i].widen();
            dh_prev[i] += d_reset_prev[i] * r;
            let dr = d_reset_prev[i] * step.h_prev[i].widen();
            d_reset_pre[i] = dr * r * (1.0 - r);
        }

        dv.iter_mut().for_each(|x| *x = 0.0);
        p.w_hv.add_matvec_transposed(&d_cand_pre, &mut dv);

        grads.w_zv.add_outer(&d_update_pre, v);
        grads.w_zh.add_outer(&d_update_pre, &step.h_prev);
        add_into(&mut grads.b_z, &d_update_pre);
        p.w_zv.add_matvec_transposed(&d_update_pre, &mut dv);
        p.w_zh.add_matvec_transposed(&d_update_pre, &mut dh_prev);

        grads.w_rv.add_outer(&d_reset_pre, v);
        grads.w_rh.add_outer(&d_reset_pre, &step.h_prev);
        add_into(&mut grads.b_r, &d_reset_pre);
        p.w_rv.add_matvec_transposed(&d_reset_pre, &mut dv);
        p.w_rh.add_matvec_transposed(&d_reset_pre, &mut dh_prev);

        grads.embedding.add_to_row(step.token, &dv);
        dh = dh_prev;
    }
    Ok(())
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Parameters with entry k of each tensor set to `scale · sin(k + phase)`.
    fn sine_params(vocab: usize, input: usize, hidden: usize) -> GruParams<f64> {
        let mut p = GruParams::<f64>::zeros(vocab, input, hidden);
        for (t, tensor) in p.tensors_mut().into_iter().enumerate() {
            for (k, x) in tensor.iter_mut().enumerate() {
                *x = 0.5 * ((k as f64) + 1.0 + 0.7 * t as f64).sin();
            }
        }
        p
    }

    #[test]
    fn zero_parameters_from_zero_state() {
        let p = GruParams::<f32>::zeros(3, 2, 4);
        let (h, cache) = gru_step(&p, &[0.3, -7.0], &[0.0; 4]).unwrap();
        assert_eq!(h, vec![0.0; 4]);
        assert!(cache.update.iter().all(|&z| z == 0.5));
        assert!(cache.candidate.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn zero_parameters_halve_the_state() {
        let p = GruParams::<f32>::zeros(3, 2, 3);
        let (h, _) = gru_step(&p, &[1.0, 1.0], &[1.0; 3]).unwrap();
        assert_eq!(h, vec![0.5; 3]);
    }

    #[test]
    fn two_by_two_step_matches_straight_line_evaluation() {
        // Reference values computed independently with a NumPy evaluation
        // of the step equations for these exact parameters.
        let p = sine_params(1, 2, 2);
        let (h, cache) = gru_step(&p, &[1.0, 0.0], &[0.25, -0.5]).unwrap();
        let expected_z = [0.6603694202941701, 0.3543858453510091];
        let expected_r = [0.3332632756624917, 0.3819084213544868];
        let expected_h = [0.18892993800627583, -0.053237728430796605];
        for i in 0..2 {
            assert!((cache.update[i] - expected_z[i]).abs() < 1e-12);
            assert!((cache.reset[i] - expected_r[i]).abs() < 1e-12);
            assert!((h[i] - expected_h[i]).abs() < 1e-12, "{h:?}");
        }
    }

    #[test]
    fn empty_sentence_encodes_to_zero() {
        let p = sine_params(4, 3, 5);
        let (h, trace) = gru_encode(&p, &[]).unwrap();
        assert_eq!(h, vec![0.0; 5]);
        assert!(trace.steps.is_empty());
    }

    #[test]
    fn single_token_with_zero_parameters() {
        let p = GruParams::<f32>::zeros(4, 3, 5);
        assert_eq!(gru_encode(&p, &[2]).unwrap().0, vec![0.0; 5]);
    }

    #[test]
    fn encoding_is_order_sensitive() {
        let p = sine_params(5, 3, 4);
        let (fwd, _) = gru_encode(&p, &[0, 2, 4]).unwrap();
        let (rev, _) = gru_encode(&p, &[4, 2, 0]).unwrap();
        // Golden values from the same NumPy reference evaluation.
        let expected_fwd = [
            0.5725931083872212,
            0.12711979011463267,
            0.17747820690875116,
            -0.3409914903511511,
        ];
        let expected_rev = [
            0.5205327621676277,
            0.17250942873365221,
            0.14521051030721796,
            -0.27793654533297163,
        ];
        for i in 0..4 {
            assert!((fwd[i] - expected_fwd[i]).abs() < 1e-12, "{fwd:?}");
            assert!((rev[i] - expected_rev[i]).abs() < 1e-12, "{rev:?}");
        }
        let max_diff = fwd
            .iter()
            .zip(&rev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff > 1e-3);
    }

    #[test]
    fn out_of_range_token_is_a_vocabulary_error() {
        let p = GruParams::<f32>::zeros(4, 3, 5);
        assert!(matches!(
            gru_encode(&p, &[4]),
            Err(Error::Vocabulary { index: 4, rows: 4 })
        ));
    }

    #[test]
    fn non_finite_parameters_name_the_gate() {
        let mut p = GruParams::<f32>::zeros(1, 1, 1);
        p.b_h[0] = f32::NAN;
        let err = gru_step(&p, &[0.0], &[0.0]).unwrap_err();
        assert!(matches!(err, Error::Numeric { what } if what == "candidate state"));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let p = sine_params(4, 3, 2);
        let (_, trace) = gru_encode(&p, &[1, 3]).unwrap();
        let mut g = GruParams::<f64>::zeros(4, 3, 2);
        gru_backward(&p, &trace, &[0.0, 0.0], &mut g).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn state_stays_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = GruParams::<f32>::zeros(6, 4, 8);
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|x| *x = rng.gen_range(-2.0..2.0));
        }
        let tokens: Vec<usize> = (0..40).map(|_| rng.gen_range(0..6)).collect();
        let (_, trace) = gru_encode(&p, &tokens).unwrap();
        for s in &trace.steps {
            let prev = s.h_prev.iter().fold(0f32, |m, x| m.max(x.abs()));
            let now = s.h.iter().fold(0f32, |m, x| m.max(x.abs()));
            assert!(now <= prev.max(1.0));
        }
    }
}
