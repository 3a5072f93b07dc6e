use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Scalar};

/// Cosine similarity, defined as 0 when either vector is all zeros.
pub fn cosine<A: Scalar, B: Scalar>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(a.len(), b.len(), "cosine operands"));
    }
    Ok(cosine_with_norms(a, norm(a), b, norm(b)))
}

pub(crate) fn cosine_with_norms<A: Scalar, B: Scalar>(a: &[A], na: f64, b: &[B], nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_similarity_is_one() {
        let a = [0.3f32, -1.2, 4.0];
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_is_zero() {
        assert_eq!(cosine(&[1.0f32, 0.0], &[0.0f32, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn zero_vector_is_zero() {
        assert_eq!(cosine(&[0.0f32, 0.0], &[3.0f32, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(cosine(&[1.0f32], &[1.0f32, 0.0]).is_err());
    }
}
