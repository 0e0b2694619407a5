//! Biorthogonal eigen-decomposition and statistics of complex spectra.
//!
//! Right eigenvectors come from LAPACK's general eigensolver. Left
//! eigenvectors are the conjugated rows of the inverse right-eigenvector
//! matrix, so `<<a|b> = delta_ab` holds by construction even inside
//! degenerate multiplets. Each left vector is then checked against
//! `H^dag |a>> = E_a^* |a>>` and pairs whose residual exceeds the tolerance
//! are reported in [`SpectrumResult::flagged`].

use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView1};

use crate::basis::{binomial, ManyBodyVector};
use crate::linalg::{eig_general, EigenPropagator};
use crate::model::{single_particle_hamiltonian, ModelParams, SparseHamiltonian};
use crate::{Error, Result, C64};

/// Largest dimension accepted by the dense solver (L = 16 at half filling).
pub const MAX_DENSE_DIM: usize = 13_000;

/// Default threshold on `|Im E|` for counting a complex eigenvalue.
pub const IMAG_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SpectrumResult {
    pub eigenvalues: Array1<C64>,
    /// Columns `|a>`, unit Euclidean norm.
    pub right_vectors: Array2<C64>,
    /// Columns `|a>>`, scaled so that `<<a|a> = 1`.
    pub left_vectors: Array2<C64>,
    /// `max |<<a|b> - delta_ab|`.
    pub biorthogonality_residual: f64,
    /// Indices whose left vector fails the `H^dag` eigen-equation.
    pub flagged: Vec<usize>,
    /// 1-norm condition number of the right-eigenvector matrix.
    pub condition: f64,
}

impl SpectrumResult {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn right(&self, alpha: usize) -> ArrayView1<'_, C64> {
        self.right_vectors.column(alpha)
    }

    pub fn left(&self, alpha: usize) -> ArrayView1<'_, C64> {
        self.left_vectors.column(alpha)
    }

    /// Eigenvalue indices sorted by decreasing `Im E`, ties by decreasing `Re E`.
    pub fn order_by_imag(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.dim()).collect();
        idx.sort_by(|&a, &b| {
            let (ea, eb) = (self.eigenvalues[a], self.eigenvalues[b]);
            eb.im
                .partial_cmp(&ea.im)
                .unwrap_or(Ordering::Equal)
                .then(eb.re.partial_cmp(&ea.re).unwrap_or(Ordering::Equal))
        });
        idx
    }
}

pub fn full_spectrum(h: &SparseHamiltonian) -> Result<SpectrumResult> {
    if h.dim() > MAX_DENSE_DIM {
        return Err(Error::Capacity(format!(
            "dense diagonalization of dimension {} exceeds {MAX_DENSE_DIM}",
            h.dim()
        )));
    }
    full_spectrum_dense(&h.to_dense())
}

pub fn full_spectrum_dense(h: &Array2<C64>) -> Result<SpectrumResult> {
    let prop = EigenPropagator::new(h)?;
    let n = prop.values.len();
    // rows of R^{-1} are <<a|; store their conjugates as columns
    let left_vectors = prop.right_inv.t().mapv(|x| x.conj());
    let overlap = prop.right_inv.dot(&prop.right);
    let mut residual: f64 = 0.0;
    for ((i, j), v) in overlap.indexed_iter() {
        let d = if i == j { v - 1.0 } else { *v };
        residual = residual.max(d.norm());
    }

    let scale = h.iter().map(|x| x.norm()).fold(0.0, f64::max).max(1.0);
    let tol = 1e-8 * scale;
    let hd = h.t().mapv(|x| x.conj());
    let mut flagged = Vec::new();
    for a in 0..n {
        let l = left_vectors.column(a);
        let lnorm = l.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        let r = hd.dot(&l) - &l.mapv(|x| x * prop.values[a].conj());
        let rn = r.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt() / lnorm;
        if !(rn <= tol) {
            flagged.push(a);
        }
    }
    Ok(SpectrumResult {
        eigenvalues: prop.values,
        right_vectors: prop.right,
        left_vectors,
        biorthogonality_residual: residual,
        flagged,
        condition: prop.condition,
    })
}

/// `c_a = <<a|psi>`.
pub fn expansion_coefficients(spec: &SpectrumResult, psi: &ManyBodyVector) -> Result<Array1<C64>> {
    coefficients(spec, psi.amplitudes().view())
}

pub(crate) fn coefficients(spec: &SpectrumResult, x: ArrayView1<C64>) -> Result<Array1<C64>> {
    if x.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: x.len(),
        });
    }
    Ok(spec.left_vectors.t().mapv(|v| v.conj()).dot(&x))
}

/// `sum_a c_a |a>`.
pub fn reconstruct(spec: &SpectrumResult, coeffs: &Array1<C64>) -> Array1<C64> {
    spec.right_vectors.dot(coeffs)
}

/// Fraction of eigenvalues with `|Im E| > threshold`.
pub fn imag_fraction(spec: &SpectrumResult, threshold: f64) -> f64 {
    imag_fraction_of(spec.eigenvalues.view(), threshold)
}

pub fn imag_fraction_of(eigenvalues: ArrayView1<C64>, threshold: f64) -> f64 {
    if eigenvalues.is_empty() {
        return 0.0;
    }
    let n = eigenvalues.iter().filter(|e| e.im.abs() > threshold).count();
    n as f64 / eigenvalues.len() as f64
}

/// Largest imaginary part and how it compares with the runners-up.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagGapStats {
    /// `max Im E`.
    pub top: f64,
    /// Mean of the 2nd to 5th largest `Im E`.
    pub tilde: f64,
    /// `2 (Im E_1 - Im E_nu)` for `nu = 2..D`, in decreasing-Im order.
    pub deltas: Vec<f64>,
}

pub fn imag_gap_stats(spec: &SpectrumResult) -> Result<ImagGapStats> {
    imag_gap_stats_of(spec.eigenvalues.view())
}

pub fn imag_gap_stats_of(eigenvalues: ArrayView1<C64>) -> Result<ImagGapStats> {
    if eigenvalues.len() < 5 {
        return Err(Error::Domain(format!(
            "need at least 5 eigenvalues, got {}",
            eigenvalues.len()
        )));
    }
    let mut sorted: Vec<C64> = eigenvalues.to_vec();
    sorted.sort_by(|a, b| {
        b.im.partial_cmp(&a.im)
            .unwrap_or(Ordering::Equal)
            .then(b.re.partial_cmp(&a.re).unwrap_or(Ordering::Equal))
    });
    let top = sorted[0].im;
    let tilde = sorted[1..5].iter().map(|e| e.im).sum::<f64>() / 4.0;
    let deltas = sorted[1..].iter().map(|e| 2.0 * (top - e.im)).collect();
    Ok(ImagGapStats { top, tilde, deltas })
}

/// Many-body eigenvalues of the non-interacting chain as all `N`-subsets
/// of single-particle energies. Interaction is ignored.
pub fn free_many_body_eigenvalues(p: &ModelParams) -> Result<Array1<C64>> {
    let (l, n) = (p.sites, p.particles);
    if n > l {
        return Err(Error::Domain(format!("N = {n} exceeds L = {l}")));
    }
    if binomial(l, n) > 50_000_000 {
        return Err(Error::Capacity(format!("C({l}, {n}) subset sums")));
    }
    let (eps, _) = eig_general(&single_particle_hamiltonian(p))?;
    let mut out = Vec::with_capacity(binomial(l, n));
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        out.push(idx.iter().map(|&i| eps[i]).sum::<C64>());
        let Some(pos) = (0..n).rev().find(|&i| idx[i] != i + l - n) else {
            break;
        };
        idx[pos] += 1;
        for j in pos + 1..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
    Ok(Array1::from(out))
}
