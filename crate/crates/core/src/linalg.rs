//! Small dense helpers shared by the propagators.

use ndarray::{Array1, Array2, ArrayView1};
use ndarray_linalg::{Eig, Eigh, Inverse, UPLO};

use crate::{Error, Result, C64};

/// Eigen-decomposition of a square matrix. Hermitian input goes through
/// `zheev` and returns exactly real eigenvalues; anything else through
/// `zgeev`. The real `dgeev` path is avoided: some OpenBLAS builds return
/// wrong eigenvalues from it for moderately sized nonsymmetric matrices.
pub(crate) fn eig_general(a: &Array2<C64>) -> Result<(Array1<C64>, Array2<C64>)> {
    let hermitian = a.indexed_iter().all(|((i, j), x)| *x == a[[j, i]].conj());
    if hermitian {
        let (e, v) = a.eigh(UPLO::Upper)?;
        Ok((e.mapv(|x| C64::new(x, 0.0)), v))
    } else {
        let (e, v) = a.eig()?;
        Ok((e, v))
    }
}

pub(crate) fn norm1(a: &Array2<C64>) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|x| x.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub(crate) fn vec_norm(v: ArrayView1<C64>) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// `exp(a)` by scaling and squaring of a degree-18 Taylor polynomial.
pub(crate) fn expm_taylor(a: &Array2<C64>) -> Array2<C64> {
    let n = a.nrows();
    let nrm = norm1(a);
    let squarings = if nrm > 0.5 { (nrm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a.mapv(|x| x / 2f64.powi(squarings));
    let mut result = Array2::<C64>::eye(n);
    let mut term = Array2::<C64>::eye(n);
    for k in 1..=18 {
        term = term.dot(&scaled).mapv(|x| x / k as f64);
        result = result + &term;
    }
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    result
}

/// Diagonalized generator `A = R diag(E) R^{-1}` used to apply
/// `exp(-i t A)` repeatedly.
#[derive(Debug, Clone)]
pub(crate) struct EigenPropagator {
    pub values: Array1<C64>,
    pub right: Array2<C64>,
    pub right_inv: Array2<C64>,
    pub condition: f64,
}

impl EigenPropagator {
    pub fn new(a: &Array2<C64>) -> Result<Self> {
        let (values, right) = eig_general(a)?;
        let right_inv = right.inv()?;
        let condition = norm1(&right) * norm1(&right_inv);
        if !condition.is_finite() {
            return Err(Error::Numerical("eigenvector matrix is singular".into()));
        }
        Ok(Self {
            values,
            right,
            right_inv,
            condition,
        })
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().map(|e| e.im).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `exp(-i t A) x`, scaled by `exp(-shift t)` to keep magnitudes finite.
    pub fn apply_shifted(&self, t: f64, shift: f64, x: ArrayView1<C64>) -> Array1<C64> {
        let c = self.right_inv.dot(&x);
        let phased: Array1<C64> = c
            .iter()
            .zip(self.values.iter())
            .map(|(ci, e)| ci * (C64::new(-shift, 0.0) * t + C64::new(0.0, -t) * e).exp())
            .collect();
        self.right.dot(&phased)
    }

    pub fn apply(&self, t: f64, x: ArrayView1<C64>) -> Array1<C64> {
        self.apply_shifted(t, 0.0, x)
    }

    /// Dense `exp(-i t A)`.
    #[cfg(test)]
    pub fn matrix(&self, t: f64) -> Array2<C64> {
        let mut scaled = self.right.clone();
        for (mut col, e) in scaled.columns_mut().into_iter().zip(self.values.iter()) {
            let f = (C64::new(0.0, -t) * e).exp();
            col.mapv_inplace(|x| x * f);
        }
        scaled.dot(&self.right_inv)
    }
}
