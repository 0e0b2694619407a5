//! Bipartite entanglement entropy for the cut between sites `0..ell` and
//! `ell..L`, in nats.
//!
//! With the Jordan-Wigner order running from site 0, a basis state factorizes
//! as (creation string on A) x (creation string on B) without extra signs, so
//! the Schmidt matrix is just the amplitude vector reshaped by bit masks.

use ndarray::{Array1, Array2, ArrayView1};
use ndarray_linalg::{Eig, Eigh, SVD, UPLO};
use serde::{Deserialize, Serialize};

use crate::basis::{FockBasis, ManyBodyVector, Sector};
use crate::evolve::TrajectoryRecord;
use crate::spectral::SpectrumResult;
use crate::{Error, Result, C64};

/// Eigenvalues of reduced matrices below this magnitude are dropped.
pub const RL_DROP_THRESHOLD: f64 = 1e-12;

fn check_cut(sites: usize, ell: usize) -> Result<()> {
    if ell == 0 || ell >= sites {
        return Err(Error::Domain(format!("subsystem size {ell} outside 1..{sites}")));
    }
    Ok(())
}

fn shannon(weights: impl Iterator<Item = f64>) -> f64 {
    -weights.filter(|&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Von Neumann entropy via singular values of the Schmidt matrix, computed
/// block by block in the subsystem particle number when the state has a
/// fixed particle number.
pub fn entanglement_entropy(psi: &ManyBodyVector, ell: usize) -> Result<f64> {
    schmidt_entropy(psi.basis(), psi.amplitudes().view(), ell)
}

fn schmidt_entropy(basis: &FockBasis, amps: ArrayView1<C64>, ell: usize) -> Result<f64> {
    let l = basis.sites();
    check_cut(l, ell)?;
    let norm2: f64 = amps.iter().map(|x| x.norm_sqr()).sum();
    if !(norm2 > 0.0) {
        return Err(Error::Numerical("entropy of a zero vector".into()));
    }
    let total = match basis.sector() {
        Sector::Fixed(n) => n,
        Sector::All => {
            let m = schmidt_matrix(basis, amps, ell);
            return Ok(shannon(singular_weights(&m)?.into_iter().map(|p| p / norm2)));
        }
    };
    let mask = (1u32 << ell) - 1;
    let mut weights = Vec::new();
    for na in total.saturating_sub(l - ell)..=total.min(ell) {
        let a_pats: Vec<u32> = (0..1u32 << ell).filter(|p| p.count_ones() as usize == na).collect();
        let b_pats: Vec<u32> = (0..1u32 << (l - ell))
            .filter(|p| p.count_ones() as usize == total - na)
            .collect();
        let mut block = Array2::<C64>::zeros((a_pats.len(), b_pats.len()));
        for (&s, x) in basis.states().iter().zip(amps.iter()) {
            if (s & mask).count_ones() as usize != na {
                continue;
            }
            let r = a_pats.binary_search(&(s & mask)).expect("A pattern");
            let c = b_pats.binary_search(&(s >> ell)).expect("B pattern");
            block[[r, c]] = *x;
        }
        weights.extend(singular_weights(&block)?);
    }
    Ok(shannon(weights.into_iter().map(|p| p / norm2)))
}

fn singular_weights(m: &Array2<C64>) -> Result<Vec<f64>> {
    let (_, s, _) = m.svd(false, false)?;
    Ok(s.iter().map(|x| x * x).collect())
}

/// Dense `2^ell x 2^(L-ell)` Schmidt matrix `M[a][b] = psi(a + b << ell)`.
pub fn schmidt_matrix(basis: &FockBasis, amps: ArrayView1<C64>, ell: usize) -> Array2<C64> {
    let l = basis.sites();
    let mask = (1u32 << ell) - 1;
    let mut m = Array2::<C64>::zeros((1 << ell, 1 << (l - ell)));
    for (&s, x) in basis.states().iter().zip(amps.iter()) {
        m[[(s & mask) as usize, (s >> ell) as usize]] = *x;
    }
    m
}

/// `rho_A = Tr_B |psi><psi|` on the `2^ell` occupation patterns of A.
pub fn reduced_density_matrix(psi: &ManyBodyVector, ell: usize) -> Result<Array2<C64>> {
    check_cut(psi.basis().sites(), ell)?;
    let mut m = schmidt_matrix(psi.basis(), psi.amplitudes().view(), ell);
    let n2: f64 = psi.amplitudes().iter().map(|x| x.norm_sqr()).sum();
    m.mapv_inplace(|x| x / n2.sqrt());
    Ok(m.dot(&m.t().mapv(|x| x.conj())))
}

/// Entropy from the eigenvalues of the explicit reduced density matrix.
pub fn entanglement_entropy_rdm(psi: &ManyBodyVector, ell: usize) -> Result<f64> {
    let rho = reduced_density_matrix(psi, ell)?;
    let (ev, _) = rho.eigh(UPLO::Upper)?;
    Ok(shannon(ev.into_iter()))
}

/// Entropy time series of one subsystem with its summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntanglementCurve {
    pub ell: usize,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub s_max: f64,
    /// First time at which `s_max` is attained.
    pub t0: f64,
    /// Mean over the final decade `t >= t_final / 10`.
    pub s_inf: f64,
    /// Sample standard deviation over the same window.
    pub s_inf_std: f64,
    pub s_inf_points: usize,
}

impl EntanglementCurve {
    pub fn from_series(ell: usize, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Domain(format!(
                "entropy series needs matching non-empty times and values ({} vs {})",
                times.len(),
                values.len()
            )));
        }
        let (mut imax, mut s_max) = (0, values[0]);
        for (i, &v) in values.iter().enumerate() {
            if v > s_max {
                imax = i;
                s_max = v;
            }
        }
        let t_final = *times.last().expect("non-empty");
        let tail: Vec<f64> = times
            .iter()
            .zip(&values)
            .filter(|(t, _)| **t >= t_final / 10.0)
            .map(|(_, v)| *v)
            .collect();
        let n = tail.len() as f64;
        let s_inf = tail.iter().sum::<f64>() / n;
        let s_inf_std = if tail.len() > 1 {
            (tail.iter().map(|v| (v - s_inf).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            ell,
            t0: times[imax],
            times,
            values,
            s_max,
            s_inf,
            s_inf_std,
            s_inf_points: tail.len(),
        })
    }
}

/// Summarize `S(t)` for subsystem `ell`, using recorded entropies when present
/// and recorded states otherwise.
pub fn entanglement_scan(traj: &TrajectoryRecord, ell: usize) -> Result<EntanglementCurve> {
    if traj.snapshots.is_empty() {
        return Err(Error::Domain("empty trajectory".into()));
    }
    let values = match traj.entropy_series(ell) {
        Some(v) => v,
        None => traj
            .snapshots
            .iter()
            .map(|s| match &s.state {
                Some(psi) => entanglement_entropy(psi, ell),
                None => Err(Error::Domain(format!(
                    "trajectory has neither S(ell={ell}) nor states"
                ))),
            })
            .collect::<Result<_>>()?,
    };
    EntanglementCurve::from_series(ell, traj.times(), values)
}

/// Which eigenvectors enter an eigenstate entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EigenVariant {
    /// Normalized right eigenvector.
    RR,
    /// Normalized left eigenvector.
    LL,
    /// Mixed `|a><<a|` reduced matrix, generally non-Hermitian.
    RL,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenstateEntropy {
    pub value: C64,
    /// Reduced-matrix eigenvalues dropped for being smaller than
    /// [`RL_DROP_THRESHOLD`] in magnitude.
    pub dropped: usize,
    /// Kept eigenvalues lying on the negative real axis.
    pub negative: usize,
}

impl EigenstateEntropy {
    pub fn flagged(&self) -> bool {
        self.dropped > 0 || self.negative > 0
    }
}

pub fn eigenstate_entropy(
    spec: &SpectrumResult,
    basis: &FockBasis,
    alpha: usize,
    ell: usize,
    variant: EigenVariant,
) -> Result<EigenstateEntropy> {
    if alpha >= spec.dim() {
        return Err(Error::Domain(format!("eigenstate index {alpha} >= {}", spec.dim())));
    }
    if basis.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: basis.len(),
        });
    }
    let plain = |v: ArrayView1<C64>| -> Result<EigenstateEntropy> {
        Ok(EigenstateEntropy {
            value: C64::new(schmidt_entropy(basis, v, ell)?, 0.0),
            dropped: 0,
            negative: 0,
        })
    };
    match variant {
        EigenVariant::RR => plain(spec.right(alpha)),
        EigenVariant::LL => plain(spec.left(alpha)),
        EigenVariant::RL => {
            check_cut(basis.sites(), ell)?;
            let r = schmidt_matrix(basis, spec.right(alpha), ell);
            let l = schmidt_matrix(basis, spec.left(alpha), ell);
            let overlap: C64 = spec
                .left(alpha)
                .iter()
                .zip(spec.right(alpha).iter())
                .map(|(a, b)| a.conj() * b)
                .sum();
            if overlap.norm() < RL_DROP_THRESHOLD {
                return Err(Error::Numerical(format!("<<a|a> = {overlap} for eigenstate {alpha}")));
            }
            let rho = r.dot(&l.t().mapv(|x| x.conj())).mapv(|x| x / overlap);
            let (ev, _): (Array1<C64>, _) = rho.eig()?;
            let mut out = EigenstateEntropy {
                value: C64::new(0.0, 0.0),
                dropped: 0,
                negative: 0,
            };
            for lam in ev {
                if lam.norm() < RL_DROP_THRESHOLD {
                    out.dropped += 1;
                    continue;
                }
                if lam.re < 0.0 && lam.im.abs() <= RL_DROP_THRESHOLD {
                    out.negative += 1;
                }
                out.value -= lam * lam.ln();
            }
            Ok(out)
        }
    }
}
