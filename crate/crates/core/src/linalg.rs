//! Dense row-major matrices and vector helpers shared by the encoder and the MLP.
//!
//! Parameters are stored in the model's scalar type; every dot product and
//! reduction accumulates in `f64`.

use std::fmt::Debug;

use num_traits::Float;
use rand::Rng;

/// Floating-point element type of a parameter set.
///
/// Training and checkpoints use `f32`; gradient checking promotes the model
/// to `f64` so finite differences are not swamped by rounding.
pub trait Scalar: Float + Debug + Default + Send + Sync + 'static {
    fn widen(self) -> f64;
    fn narrow(value: f64) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }
    #[inline]
    fn narrow(value: f64) -> Self {
        value as f32
    }
}

impl Scalar for f64 {
    #[inline]
    fn widen(self) -> f64 {
        self
    }
    #[inline]
    fn narrow(value: f64) -> Self {
        value
    }
}

#[inline]
pub fn dot<A: Scalar, B: Scalar>(a: &[A], b: &[B]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Fixed lane split: vectorizes, and the summation order depends only on
    // the length.
    const LANES: usize = 8;
    let mut acc = [0.0f64; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(&x, &y)| x.widen() * y.widen())
        .sum();
    for (xa, xb) in ca.zip(cb) {
        for k in 0..LANES {
            acc[k] += xa[k].widen() * xb[k].widen();
        }
    }
    acc.iter().sum::<f64>() + tail
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> f64 {
    dot(a, a).sqrt()
}

pub fn all_finite<T: Scalar>(values: &[T]) -> bool {
    values.iter().all(|v| v.is_finite())
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    /// Symmetric uniform draw in `[-bound, bound]`.
    pub fn uniform<R: Rng>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| T::narrow(rng.gen_range(-bound..=bound)))
            .collect();
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self · x`, accumulated in `f64`.
    pub fn matvec(&self, x: &[T]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec input length");
        let x: Vec<f64> = x.iter().map(|v| v.widen()).collect();
        (0..self.rows).map(|i| dot(self.row(i), &x)).collect()
    }

    /// `self · x` where `x` is given as sparse `(column, value)` pairs.
    pub fn matvec_sparse(&self, x: &[(usize, f64)]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| {
                let row = self.row(i);
                x.iter().map(|&(j, v)| row[j].widen() * v).sum()
            })
            .collect()
    }

    /// Adds `selfᵀ · y` into `out`.
    pub fn add_matvec_transposed(&self, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), self.rows, "transposed matvec input length");
        assert_eq!(out.len(), self.cols, "transposed matvec output length");
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(i)) {
                *o += w.widen() * yi;
            }
        }
    }
}

impl Matrix<f64> {
    /// `self += dy ⊗ x`.
    pub fn add_outer<T: Scalar>(&mut self, dy: &[f64], x: &[T]) {
        assert_eq!(dy.len(), self.rows, "outer product rows");
        assert_eq!(x.len(), self.cols, "outer product cols");
        let x: Vec<f64> = x.iter().map(|v| v.widen()).collect();
        for (i, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for (g, &xj) in self.row_mut(i).iter_mut().zip(&x) {
                *g += d * xj;
            }
        }
    }

    /// Adds `dy` into row `i`.
    pub fn add_to_row(&mut self, i: usize, dy: &[f64]) {
        for (g, &d) in self.row_mut(i).iter_mut().zip(dy) {
            *g += d;
        }
    }
}

impl<T: Scalar> Matrix<T> {
    /// Adds `(selfᵀ · y)[offset..offset + out.len()]` into `out`.
    pub fn add_matvec_transposed_cols(&self, y: &[f64], offset: usize, out: &mut [f64]) {
        assert_eq!(y.len(), self.rows, "transposed matvec input length");
        assert!(offset + out.len() <= self.cols, "column window out of range");
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            let row = &self.row(i)[offset..offset + out.len()];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += w.widen() * yi;
            }
        }
    }
}
