//! Many-body Hatano-Nelson Hamiltonian with nearest-neighbour interaction and
//! quasiperiodic on-site potential.
//!
//! Matrix convention: `H[new][old]`, i.e. columns are the states acted upon.
//! Fermionic signs follow the Jordan-Wigner ordering `c_0^dag c_1^dag ...`; a
//! hop between sites `a` and `b` picks up `(-1)` per occupied site strictly
//! between them, so the periodic wrap bond carries `(-1)^(N-1)`.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::basis::{FockBasis, Sector};
use crate::{Error, Result, C64};

/// Inverse golden ratio `(sqrt 5 - 1) / 2`.
pub const GOLDEN_ALPHA: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Periodic,
    Open,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(rename = "L")]
    pub sites: usize,
    #[serde(rename = "N")]
    pub particles: usize,
    #[serde(default = "default_gamma0")]
    pub gamma0: f64,
    /// Non-reciprocity `g`.
    #[serde(default)]
    pub g: f64,
    /// Nearest-neighbour interaction `V`.
    #[serde(rename = "V", default)]
    pub interaction: f64,
    /// Quasiperiodic potential strength `W`.
    #[serde(rename = "W", default)]
    pub disorder: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub boundary: Boundary,
}

fn default_gamma0() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    GOLDEN_ALPHA
}

impl ModelParams {
    /// Half-filled periodic chain with unit hopping and golden-ratio modulation.
    pub fn half_filled(sites: usize, g: f64, interaction: f64, disorder: f64) -> Self {
        Self {
            sites,
            particles: sites / 2,
            gamma0: 1.0,
            g,
            interaction,
            disorder,
            alpha: GOLDEN_ALPHA,
            theta: 0.0,
            boundary: Boundary::Periodic,
        }
    }

    /// Leftward amplitude `e^g Gamma_0` (multiplies `c_j^dag c_{j+1}`).
    pub fn gamma_left(&self) -> f64 {
        self.g.exp() * self.gamma0
    }

    /// Rightward amplitude `e^-g Gamma_0` (multiplies `c_{j+1}^dag c_j`).
    pub fn gamma_right(&self) -> f64 {
        (-self.g).exp() * self.gamma0
    }

    pub fn potential(&self) -> Vec<f64> {
        quasiperiodic_potential(self.disorder, self.alpha, self.theta, self.sites)
    }

    /// Bonds `(j, j+1)` including the wrap bond for periodic chains.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let l = self.sites;
        let mut b: Vec<_> = (0..l - 1).map(|j| (j, j + 1)).collect();
        if self.boundary == Boundary::Periodic {
            b.push((l - 1, 0));
        }
        b
    }
}

/// `W_j = W cos(2 pi alpha j + theta)`.
pub fn quasiperiodic_potential(w: f64, alpha: f64, theta: f64, sites: usize) -> Vec<f64> {
    (0..sites)
        .map(|j| w * (2.0 * PI * alpha * j as f64 + theta).cos())
        .collect()
}

/// Rational approximant `f_n / f_{n+1}` of the inverse golden ratio
/// (`f_0 = f_1 = 1`).
pub fn fibonacci_alpha(n: usize) -> f64 {
    let (mut a, mut b) = (1u64, 1u64);
    for _ in 0..n {
        (a, b) = (b, a + b);
    }
    a as f64 / b as f64
}

/// Single-particle energy `-2 Gamma_0 (cosh g cos k + i sinh g sin k)` of the
/// plane wave `e^{ikj}` on the clean periodic chain.
pub fn dispersion(k: f64, g: f64, gamma0: f64) -> C64 {
    C64::new(
        -2.0 * gamma0 * g.cosh() * k.cos(),
        -2.0 * gamma0 * g.sinh() * k.sin(),
    )
}

/// Compressed-row sparse matrix over a Fock basis.
#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<C64>,
    hermitian: bool,
}

impl SparseHamiltonian {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Set when `g = 0`: the assembled matrix is Hermitian.
    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// `(col, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.row(r)
            .filter(|&(col, _)| col == c)
            .map(|(_, v)| v)
            .sum()
    }

    /// `out = H x`.
    pub fn apply_into(&self, x: &[C64], out: &mut [C64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.cols[k]];
            }
            *o = acc;
        }
    }

    pub fn apply(&self, x: &Array1<C64>) -> Array1<C64> {
        let mut out = Array1::zeros(self.dim);
        self.apply_into(
            x.as_slice().expect("contiguous vector"),
            out.as_slice_mut().expect("contiguous vector"),
        );
        out
    }

    pub fn to_dense(&self) -> Array2<C64> {
        let mut m = Array2::zeros((self.dim, self.dim));
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                m[[r, c]] += v;
            }
        }
        m
    }

    /// True when every entry has zero imaginary part.
    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    /// Largest absolute row sum, an upper bound on the spectral radius.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Assemble the many-body Hamiltonian on `basis`.
pub fn build_hamiltonian(p: &ModelParams, basis: &FockBasis) -> Result<SparseHamiltonian> {
    if basis.sites() != p.sites {
        return Err(Error::DimensionMismatch {
            expected: p.sites,
            found: basis.sites(),
        });
    }
    if let Sector::Fixed(n) = basis.sector() {
        if n != p.particles {
            return Err(Error::Domain(format!(
                "basis has N = {n} particles but parameters specify N = {}",
                p.particles
            )));
        }
    }
    let potential = p.potential();
    let bonds = p.bonds();
    let (gl, gr) = (p.gamma_left(), p.gamma_right());

    let dim = basis.len();
    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut cols = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    let mut row: Vec<(usize, C64)> = Vec::with_capacity(2 * bonds.len() + 1);

    for (r, &state) in basis.states().iter().enumerate() {
        row.clear();
        let mut diag = 0.0;
        for j in 0..p.sites {
            if state >> j & 1 == 1 {
                diag += potential[j];
            }
        }
        for &(a, b) in &bonds {
            if state >> a & 1 == 1 && state >> b & 1 == 1 {
                diag += p.interaction;
            }
        }
        row.push((r, C64::new(diag, 0.0)));

        // Row `r` collects <state| H |source>. The term -gl c_a^dag c_b lands
        // on `state` from a source with b occupied instead of a; -gr c_b^dag c_a
        // the other way round.
        for &(a, b) in &bonds {
            let occ_a = state >> a & 1 == 1;
            let occ_b = state >> b & 1 == 1;
            if occ_a == occ_b {
                continue;
            }
            let source = state ^ (1 << a) ^ (1 << b);
            let Some(c) = basis.index_of(source) else {
                continue;
            };
            let amp = if occ_a { -gl } else { -gr };
            let sign = hop_sign(source, a, b);
            row.push((c, C64::new(amp * sign, 0.0)));
        }
        row.sort_by_key(|&(c, _)| c);
        // merge duplicate columns (L = 2 has two bonds joining the same sites)
        let start = cols.len();
        for &(c, v) in &row {
            if cols.len() > start && *cols.last().unwrap() == c {
                *values.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                values.push(v);
            }
        }
        row_ptr.push(cols.len());
    }
    Ok(SparseHamiltonian {
        dim,
        row_ptr,
        cols,
        values,
        hermitian: p.g == 0.0,
    })
}

/// `(-1)^(occupied sites strictly between a and b)` in `pattern`.
pub fn hop_sign(pattern: u32, a: usize, b: usize) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if hi - lo < 2 {
        return 1.0;
    }
    let mask = ((1u32 << hi) - 1) & !((1u32 << (lo + 1)) - 1);
    if (pattern & mask).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Dense `L x L` single-particle Hatano-Nelson matrix:
/// `H[j][j+1] = -Gamma_L`, `H[j+1][j] = -Gamma_R`, `H[j][j] = W_j`.
pub fn single_particle_hamiltonian(p: &ModelParams) -> Array2<C64> {
    let l = p.sites;
    let mut h = Array2::<C64>::zeros((l, l));
    for (j, w) in p.potential().into_iter().enumerate() {
        h[[j, j]] += w;
    }
    for (a, b) in p.bonds() {
        h[[a, b]] -= p.gamma_left();
        h[[b, a]] -= p.gamma_right();
    }
    h
}
