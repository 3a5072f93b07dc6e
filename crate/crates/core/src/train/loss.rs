use crate::error::{Error, Result};
use crate::linalg::Scalar;

/// Mean squared error over the feature dimensions and its gradient with
/// respect to the prediction: `(1/d) Σ (r - φ)²` and `(2/d)(r - φ)`.
pub fn mse_loss<A: Scalar, B: Scalar>(prediction: &[A], target: &[B]) -> Result<(f64, Vec<f64>)> {
    if prediction.len() != target.len() {
        return Err(Error::dim(target.len(), prediction.len(), "prediction vs target"));
    }
    let d = prediction.len() as f64;
    let diff: Vec<f64> = prediction
        .iter()
        .zip(target)
        .map(|(r, t)| r.widen() - t.widen())
        .collect();
    let loss = diff.iter().map(|x| x * x).sum::<f64>() / d;
    let grad = diff.iter().map(|x| 2.0 * x / d).collect();
    Ok((loss, grad))
}
