//! RMSprop: each step is scaled by the root of a decaying average of
//! squared gradients.
//!
//! ```text
//! acc ← γ·acc + (1 − γ)·g²
//! θ   ← θ − η·g / √(acc + ε)
//! ```

use crate::error::{Error, Result};
use crate::linalg::Scalar;
use crate::nn::{GradSet, W2VVParams};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    /// One accumulator per parameter tensor, in tensor order.
    pub accumulators: Vec<Vec<f64>>,
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new<T: Scalar>(model: &W2VVParams<T>, learning_rate: f64, decay: f64, epsilon: f64) -> Self {
        OptimizerState {
            accumulators: model.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
            learning_rate,
            decay,
            epsilon,
        }
    }

    /// Applies one update to `model` in place.
    pub fn update<T: Scalar>(&mut self, model: &mut W2VVParams<T>, grads: &GradSet) -> Result<()> {
        let grads = grads.tensors();
        let mut params = model.tensors_mut();
        if grads.len() != params.len() || grads.len() != self.accumulators.len() {
            return Err(Error::Layout("gradient set does not match the model".into()));
        }
        if grads.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::numeric("gradient"));
        }
        for ((p, g), acc) in params.iter_mut().zip(&grads).zip(&mut self.accumulators) {
            if p.len() != g.len() || acc.len() != g.len() {
                return Err(Error::Layout("gradient tensor shape mismatch".into()));
            }
            rmsprop_step(p, g, acc, self.learning_rate, self.decay, self.epsilon)?;
        }
        Ok(())
    }
}

/// Elementwise update of one flat tensor.
pub fn rmsprop_step<T: Scalar>(
    params: &mut [T],
    grads: &[f64],
    accumulators: &mut [f64],
    learning_rate: f64,
    decay: f64,
    epsilon: f64,
) -> Result<()> {
    for ((p, &g), acc) in params.iter_mut().zip(grads).zip(accumulators.iter_mut()) {
        *acc = decay * *acc + (1.0 - decay) * g * g;
        let next = T::narrow(p.widen() - learning_rate * g / (*acc + epsilon).sqrt());
        if !next.is_finite() {
            return Err(Error::numeric("rmsprop update"));
        }
        *p = next;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_only_decays_accumulators() {
        let mut p = [0.5f32, -1.0];
        let mut acc = [1.0, 2.0];
        rmsprop_step(&mut p, &[0.0, 0.0], &mut acc, 1e-4, 0.9, 1e-6).unwrap();
        assert_eq!(p, [0.5, -1.0]);
        assert!((acc[0] - 0.9).abs() < 1e-15 && (acc[1] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn first_step_from_fresh_state() {
        let mut p = [0.0f64];
        let mut acc = [0.0];
        rmsprop_step(&mut p, &[1.0], &mut acc, 1e-4, 0.9, 1e-6).unwrap();
        // 1e-4 / sqrt(0.1 + 1e-6)
        assert!((p[0].abs() - 3.162262e-4).abs() < 1e-9, "{}", p[0]);
    }

    #[test]
    fn successive_steps_shrink() {
        let mut p = [0.0f64];
        let mut acc = [0.0];
        rmsprop_step(&mut p, &[1.0], &mut acc, 1e-4, 0.9, 1e-6).unwrap();
        let first = p[0];
        rmsprop_step(&mut p, &[1.0], &mut acc, 1e-4, 0.9, 1e-6).unwrap();
        let second = p[0] - first;
        assert!(second.abs() < first.abs());
    }

    #[test]
    fn saturated_step_approaches_learning_rate() {
        let mut p = [0.0f64];
        let mut acc = [0.0];
        let mut last = 0.0;
        for _ in 0..200 {
            let before = p[0];
            rmsprop_step(&mut p, &[0.7], &mut acc, 1e-3, 0.9, 1e-6).unwrap();
            last = (p[0] - before).abs();
        }
        assert!((last - 1e-3).abs() <= 0.05 * 1e-3);
    }

    #[test]
    fn non_finite_update_is_an_error() {
        let mut p = [f32::MAX];
        let mut acc = [0.0];
        assert!(rmsprop_step(&mut p, &[-1.0], &mut acc, 1e38, 0.9, 1e-6).is_err());
    }

    proptest! {
        #[test]
        fn update_is_elementwise(
            values in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, 0.0f64..1.0), 1..20),
            rotate in 0usize..20,
        ) {
            let (mut p, g, mut acc): (Vec<f64>, Vec<f64>, Vec<f64>) = {
                let mut p = vec![]; let mut g = vec![]; let mut a = vec![];
                for (x, y, z) in &values { p.push(*x); g.push(*y); a.push(*z); }
                (p, g, a)
            };
            let k = rotate % p.len();
            let mut rp = p.clone(); rp.rotate_left(k);
            let mut rg = g.clone(); rg.rotate_left(k);
            let mut ra = acc.clone(); ra.rotate_left(k);
            rmsprop_step(&mut p, &g, &mut acc, 1e-3, 0.9, 1e-6).unwrap();
            rmsprop_step(&mut rp, &rg, &mut ra, 1e-3, 0.9, 1e-6).unwrap();
            p.rotate_left(k);
            acc.rotate_left(k);
            prop_assert_eq!(p, rp);
            prop_assert_eq!(acc, ra);
        }
    }
}
