//! Non-interacting fast path.
//!
//! An `N`-particle Slater determinant is stored as an `L x N` orbital matrix
//! `Phi`. Under non-unitary evolution the orbitals grow at different rates and
//! lose orthogonality, but the many-body state only depends on their span, so
//! the propagation is split into chunks and the columns are re-orthonormalized
//! between chunks. The one-particle density matrix of the normalized state is
//! `<c_i^dag c_j> = [Phi (Phi^dag Phi)^{-1} Phi^dag]_{ji}`.

use std::f64::consts::PI;

use ndarray::{s, Array1, Array2, ArrayView1};
use ndarray_linalg::{Determinant, Eigh, Inverse, SVD, UPLO};

use crate::basis::{FockBasis, ManyBodyVector};
use crate::linalg::{vec_norm, EigenPropagator};
use crate::model::dispersion;
use crate::observables::{momentum_grid, OnePdm};
use crate::{Error, Result, C64};

/// Largest tolerated condition number of an evolved orbital matrix.
pub const ORBITAL_CONDITION_LIMIT: f64 = 1e12;

/// Largest growth ratio `exp(spread * tau)` allowed within one chunk.
const CHUNK_GROWTH: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct OrbitalSet {
    /// `L x N`, one orbital per column.
    pub matrix: Array2<C64>,
}

impl OrbitalSet {
    pub fn new(matrix: Array2<C64>) -> Result<Self> {
        let set = Self { matrix };
        let c = set.condition()?;
        if !(c < ORBITAL_CONDITION_LIMIT) {
            return Err(Error::Numerical(format!("orbital matrix condition number {c:.3e}")));
        }
        Ok(set)
    }

    /// One particle on each listed site.
    pub fn localized(sites: usize, occupied: &[usize]) -> Result<Self> {
        let mut m = Array2::<C64>::zeros((sites, occupied.len()));
        for (n, &j) in occupied.iter().enumerate() {
            if j >= sites {
                return Err(Error::Domain(format!("site {j} outside 0..{sites}")));
            }
            m[[j, n]] = C64::new(1.0, 0.0);
        }
        Self::new(m)
    }

    /// Particles on the even sites `0, 2, 4, ...`.
    pub fn density_wave(sites: usize) -> Result<Self> {
        if sites % 2 != 0 {
            return Err(Error::Domain(format!("density wave needs even L, got {sites}")));
        }
        let occ: Vec<usize> = (0..sites).step_by(2).collect();
        Self::localized(sites, &occ)
    }

    /// Plane waves `e^{ikj}/sqrt(L)` for the given momenta.
    pub fn plane_waves(sites: usize, momenta: &[f64]) -> Result<Self> {
        let norm = 1.0 / (sites as f64).sqrt();
        Self::new(Array2::from_shape_fn((sites, momenta.len()), |(j, n)| {
            C64::from_polar(norm, momenta[n] * j as f64)
        }))
    }

    pub fn sites(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn particles(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn gram(&self) -> Array2<C64> {
        self.matrix.t().mapv(|x| x.conj()).dot(&self.matrix)
    }

    /// Ratio of extreme singular values of `Phi`.
    pub fn condition(&self) -> Result<f64> {
        if self.particles() == 0 {
            return Ok(1.0);
        }
        let (_, sv, _) = self.matrix.svd(false, false)?;
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(max / min)
    }

    /// Expand into occupation-basis amplitudes `det Phi[occupied rows, :]`.
    pub fn to_many_body(&self, basis: std::sync::Arc<FockBasis>) -> Result<ManyBodyVector> {
        if basis.sites() != self.sites() || basis.particles() != Some(self.particles()) {
            return Err(Error::DimensionMismatch {
                expected: self.particles(),
                found: basis.particles().unwrap_or(usize::MAX),
            });
        }
        let mut amps = Array1::<C64>::zeros(basis.len());
        let n = self.particles();
        for (a, &s) in amps.iter_mut().zip(basis.states()) {
            if n == 0 {
                *a = C64::new(1.0, 0.0);
                continue;
            }
            let rows: Vec<usize> = (0..self.sites()).filter(|j| s >> j & 1 == 1).collect();
            let sub = Array2::from_shape_fn((n, n), |(r, c)| self.matrix[[rows[r], c]]);
            *a = sub.det()?;
        }
        let mut psi = ManyBodyVector::new(basis, amps)?;
        psi.renormalize()?;
        Ok(psi)
    }
}

/// Orthonormalize the columns of `m` in place (two-pass modified Gram-Schmidt).
fn orthonormalize(m: &mut Array2<C64>) -> Result<()> {
    for j in 0..m.ncols() {
        for _ in 0..2 {
            for i in 0..j {
                let c: C64 = m.column(i).iter().zip(m.column(j)).map(|(a, b)| a.conj() * b).sum();
                let ci = m.column(i).to_owned();
                m.column_mut(j).zip_mut_with(&ci, |x, y| *x -= c * y);
            }
        }
        let n = vec_norm(m.column(j));
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Numerical(format!("orbital {j} collapsed (norm {n})")));
        }
        m.column_mut(j).mapv_inplace(|x| x / n);
    }
    Ok(())
}

/// Single-particle propagator `exp(-i t H1)` reused across times.
pub struct OrbitalPropagator {
    inner: EigenPropagator,
    spread: f64,
}

impl OrbitalPropagator {
    pub fn new(h1: &Array2<C64>) -> Result<Self> {
        let inner = EigenPropagator::new(h1)?;
        let max = inner.max_imag();
        let min = inner.values.iter().map(|e| e.im).fold(f64::INFINITY, f64::min);
        Ok(Self {
            spread: max - min,
            inner,
        })
    }

    /// Span-preserving evolution of an orbital set to time `t`.
    pub fn evolve(&self, phi0: &OrbitalSet, t: f64) -> Result<OrbitalSet> {
        if t == 0.0 {
            return Ok(phi0.clone());
        }
        let chunks = if self.spread > 0.0 {
            ((t.abs() * self.spread / CHUNK_GROWTH).ceil() as usize).max(1)
        } else {
            1
        };
        let tau = t / chunks as f64;
        let shift = self.inner.max_imag();
        let mut m = phi0.matrix.clone();
        orthonormalize(&mut m)?;
        for _ in 0..chunks {
            for mut col in m.columns_mut() {
                let next = self.inner.apply_shifted(tau, shift, col.view());
                col.assign(&next);
            }
            let set = OrbitalSet { matrix: m };
            let c = set.condition()?;
            if !(c < ORBITAL_CONDITION_LIMIT) {
                return Err(Error::Numerical(format!(
                    "evolved orbitals are near rank-deficient (condition {c:.3e})"
                )));
            }
            m = set.matrix;
            orthonormalize(&mut m)?;
        }
        Ok(OrbitalSet { matrix: m })
    }

    /// Renormalized `exp(-i t H1) psi` for one particle.
    pub fn evolve_vector(&self, psi: ArrayView1<C64>, t: f64) -> Result<Array1<C64>> {
        let mut out = self.inner.apply_shifted(t, self.inner.max_imag(), psi);
        let n = vec_norm(out.view());
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Numerical(format!("single-particle norm {n}")));
        }
        out.mapv_inplace(|x| x / n);
        Ok(out)
    }
}

/// Evolve every orbital by `exp(-i t H1)`. The columns of the result are
/// orthonormal and span the evolved Slater determinant.
pub fn evolve_orbitals(h1: &Array2<C64>, phi0: &OrbitalSet, t: f64) -> Result<OrbitalSet> {
    OrbitalPropagator::new(h1)?.evolve(phi0, t)
}

/// Block of the one-particle density matrix, `matrix[i][j] = <c_i^dag c_j>`.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    pub matrix: Array2<C64>,
}

impl CorrelationMatrix {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diag().iter().map(|x| x.re).sum()
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let h = (&self.matrix + &self.matrix.t().mapv(|x| x.conj())).mapv(|x| x * 0.5);
        let (ev, _) = h.eigh(UPLO::Upper)?;
        Ok(ev.to_vec())
    }

    pub fn as_pdm(&self) -> OnePdm {
        OnePdm {
            matrix: self.matrix.clone(),
        }
    }
}

/// Full `L x L` one-particle density matrix of the normalized Slater state.
pub fn full_correlation(phi: &OrbitalSet) -> Result<CorrelationMatrix> {
    let ginv = phi.gram().inv()?;
    let p = phi.matrix.dot(&ginv).dot(&phi.matrix.t().mapv(|x| x.conj()));
    Ok(CorrelationMatrix { matrix: p.t().to_owned() })
}

pub fn correlation_matrix(phi: &OrbitalSet, ell: usize) -> Result<CorrelationMatrix> {
    if ell == 0 || ell > phi.sites() {
        return Err(Error::Domain(format!("block size {ell} outside 1..={}", phi.sites())));
    }
    let full = full_correlation(phi)?;
    Ok(CorrelationMatrix {
        matrix: full.matrix.slice(s![..ell, ..ell]).to_owned(),
    })
}

/// Binary entropy of `n`, with `0 ln 0 = 0`.
pub(crate) fn binary_entropy(n: f64) -> f64 {
    let term = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    term(n) + term(1.0 - n)
}

/// `-sum_i [l ln l + (1-l) ln(1-l)]` over the eigenvalues of the block.
pub fn ff_entropy(c: &CorrelationMatrix) -> Result<f64> {
    let mut s = 0.0;
    for lam in c.eigenvalues()? {
        if !(-1e-8..=1.0 + 1e-8).contains(&lam) {
            return Err(Error::Numerical(format!("correlation eigenvalue {lam} outside [0, 1]")));
        }
        s += binary_entropy(lam.clamp(0.0, 1.0));
    }
    Ok(s)
}

/// Momentum occupations `(1/L) sum_{ij} e^{ik(i-j)} <c_i^dag c_j>`.
pub fn momentum_occupation(c: &CorrelationMatrix) -> Vec<f64> {
    c.as_pdm().momentum_diagonal()
}

/// Long-time correlation matrix of a half-filled clean chain whose two
/// degenerate top modes `k = 0, -pi` are equally populated on top of the
/// Fermi sea `k = -2 pi q / L`, `q = 1 .. L/2 - 1`. Rows and columns are
/// sites `n = 1 .. L`.
pub fn asymptotic_corr_matrix(sites: usize, g: f64, t: f64) -> Result<Array2<C64>> {
    if sites % 2 != 0 || (sites / 2) % 2 != 0 {
        return Err(Error::Domain(format!(
            "needs L divisible by 4 for the degenerate pair, got L = {sites}"
        )));
    }
    let l = sites as f64;
    let half = sites / 2;
    let phase = 4.0 * g.cosh() * t;
    let parity = if half % 2 == 0 { 1.0 } else { -1.0 };
    Ok(Array2::from_shape_fn((sites, sites), |(a, b)| {
        let (n, m) = ((a + 1) as f64, (b + 1) as f64);
        let mut sea = C64::new(0.0, 0.0);
        for q in 1..half {
            let k = -2.0 * PI * q as f64 / l;
            sea += C64::from_polar(1.0, k * (n - m));
        }
        let pair = (C64::from_polar(1.0, -PI * (n - m)) + 1.0) / (2.0 * l);
        let osc = parity / (2.0 * l)
            * (C64::from_polar(1.0, -phase) * C64::from_polar(1.0, PI * n)
                + C64::from_polar(1.0, phase) * C64::from_polar(1.0, -PI * m));
        sea / l + pair + osc
    }))
}

/// `1/2 +- 1/2 sqrt([sin(4 cosh(g) t + phi) + 1] / 2)`, larger first.
pub fn lambda_pm(g: f64, t: f64, phi: f64) -> (f64, f64) {
    let r = 0.5 * ((((4.0 * g.cosh() * t + phi).sin() + 1.0) / 2.0).max(0.0)).sqrt();
    (0.5 + r, 0.5 - r)
}

/// Least-squares phase `phi` of [`lambda_pm`] against measured eigenvalue
/// pairs `(t, (hi, lo))`, returning `(phi, rms)`.
pub fn fit_lambda_phase(g: f64, data: &[(f64, (f64, f64))]) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Domain("no eigenvalue samples to fit".into()));
    }
    let cost = |phi: f64| {
        data.iter()
            .map(|&(t, (hi, lo))| {
                let (a, b) = lambda_pm(g, t, phi);
                (a - hi).powi(2) + (b - lo).powi(2)
            })
            .sum::<f64>()
    };
    let grid = 720;
    let (mut best, mut best_cost) = (0.0, f64::INFINITY);
    for i in 0..grid {
        let phi = 2.0 * PI * i as f64 / grid as f64;
        let c = cost(phi);
        if c < best_cost {
            best = phi;
            best_cost = c;
        }
    }
    let step = 2.0 * PI / grid as f64;
    let phi = crate::fitting::golden_section(cost, best - step, best + step, 1e-12);
    let rms = (cost(phi) / (2 * data.len()) as f64).sqrt();
    Ok((phi.rem_euclid(2.0 * PI), rms))
}

/// Position and momentum statistics of a single-particle wavefunction on a
/// ring.
#[derive(Debug, Clone, PartialEq)]
pub struct WavepacketStats {
    /// Mean position measured in a window centred on the density maximum, so
    /// it may lie outside `0..L`.
    pub mean_x: f64,
    pub variance: f64,
    /// `|psi_k|^2` on the grid of [`momentum_grid`].
    pub momentum_density: Vec<f64>,
}

pub fn wavepacket_observables(psi: ArrayView1<C64>) -> WavepacketStats {
    let l = psi.len();
    let dens: Vec<f64> = psi.iter().map(|x| x.norm_sqr()).collect();
    let total: f64 = dens.iter().sum();
    let peak = dens
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (j, &d)| if d > acc.1 { (j, d) } else { acc })
        .0 as i64;
    let half = (l / 2) as i64;
    let li = l as i64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for (j, d) in dens.iter().enumerate() {
        let x = (peak + (j as i64 - peak + half).rem_euclid(li) - half) as f64;
        m1 += x * d / total;
        m2 += x * x * d / total;
    }
    let norm = 1.0 / (l as f64 * total).sqrt();
    let momentum_density = momentum_grid(l)
        .into_iter()
        .map(|k| {
            psi.iter()
                .enumerate()
                .map(|(j, x)| x * C64::from_polar(norm, -k * j as f64))
                .sum::<C64>()
                .norm_sqr()
        })
        .collect();
    WavepacketStats {
        mean_x: m1,
        variance: m2 - m1 * m1,
        momentum_density,
    }
}

/// Remove jumps of `L` from a sequence of ring positions.
pub fn unwrap_positions(xs: &[f64], sites: usize) -> Vec<f64> {
    let l = sites as f64;
    let mut out: Vec<f64> = Vec::with_capacity(xs.len());
    for &x in xs {
        let y = match out.last() {
            Some(&prev) => x + l * ((prev - x) / l).round(),
            None => x,
        };
        out.push(y);
    }
    out
}

/// Gaussian packet `exp(-(x + 2 cosh(g) t)^2 / (4 sinh(g) t))` with the
/// carrier `e^{-i pi x / 2}` of the dominant `k = -pi/2` mode, where `x` is
/// the ring displacement from `j0`. Normalized.
pub fn trial_wavepacket(j0: usize, g: f64, t: f64, sites: usize) -> Result<Array1<C64>> {
    if !(t > 0.0) || !(g > 0.0) {
        return Err(Error::Domain(format!("trial packet needs t > 0 and g > 0, got t = {t}, g = {g}")));
    }
    let l = sites as f64;
    let shift = 2.0 * g.cosh() * t;
    let width = 4.0 * g.sinh() * t;
    let mut psi = Array1::from_shape_fn(sites, |j| {
        let d = j as f64 - j0 as f64;
        let y = (d + shift + l / 2.0).rem_euclid(l) - l / 2.0;
        let x = y - shift;
        C64::from_polar((-y * y / width).exp(), -PI * x / 2.0)
    });
    let n = vec_norm(psi.view());
    psi.mapv_inplace(|x| x / n);
    Ok(psi)
}

/// Second-order energy of the plane wave `k` in a weak cosine potential,
/// `-2[cosh g (1 + W^2/(16 cosh^2 g)) cos k + i sinh g (1 - W^2/(16 sinh^2 g)) sin k]`,
/// sign-matched to [`dispersion`] at `W = 0`. Valid for large `g`.
pub fn perturbative_dispersion(k: f64, g: f64, w: f64) -> C64 {
    let (c, sh) = (g.cosh(), g.sinh());
    let re = c * (1.0 + w * w / (16.0 * c * c));
    let im = if sh != 0.0 { sh * (1.0 - w * w / (16.0 * sh * sh)) } else { 0.0 };
    C64::new(-2.0 * re * k.cos(), -2.0 * im * k.sin())
}

/// Predicted sliding speed `2 cosh g (1 + W^2 / (16 cosh^2 g))`.
pub fn perturbative_speed(g: f64, w: f64) -> f64 {
    let c = g.cosh();
    2.0 * c * (1.0 + w * w / (16.0 * c * c))
}

/// Clean-chain momentum occupations after evolution from a state whose
/// modes `k` and `k + pi` start equally populated: `1/(1 + e^{-4 Im eps_k t})`.
pub fn paired_mode_occupation(k: f64, g: f64, t: f64) -> f64 {
    let x = -4.0 * dispersion(k, g, 1.0).im * t;
    1.0 / (1.0 + x.exp())
}
