//! Occupation-number basis for spinless fermions on a ring.
//!
//! Site `j` is bit `j` of a `u32` pattern. States are stored in ascending
//! integer order, so `index_of` is a binary search.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use ndarray_linalg::Determinant;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result, C64};

/// Largest chain handled by the bit-pattern encoding.
pub const MAX_SITES: usize = 24;

/// Largest chain for which the full 2^L Fock space is materialised.
pub const MAX_FULL_FOCK_SITES: usize = 14;

/// Which particle-number sectors a basis spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sector {
    /// Exactly `N` particles.
    Fixed(usize),
    /// Direct sum of all sectors `N = 0..=L`.
    All,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FockBasis {
    sites: usize,
    sector: Sector,
    states: Vec<u32>,
}

impl FockBasis {
    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    /// Particle number for a fixed sector, `None` for the full Fock space.
    pub fn particles(&self) -> Option<usize> {
        match self.sector {
            Sector::Fixed(n) => Some(n),
            Sector::All => None,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[u32] {
        &self.states
    }

    pub fn state(&self, i: usize) -> u32 {
        self.states[i]
    }

    pub fn index_of(&self, pattern: u32) -> Option<usize> {
        self.states.binary_search(&pattern).ok()
    }

    /// Site-ordered occupation string `n_0 n_1 ... n_{L-1}`.
    pub fn pattern_string(&self, pattern: u32) -> String {
        (0..self.sites)
            .map(|j| if pattern >> j & 1 == 1 { '1' } else { '0' })
            .collect()
    }
}

/// Enumerate all patterns of `sites` bits with exactly `particles` set bits.
pub fn build_basis(sites: usize, particles: usize) -> Result<FockBasis> {
    if sites > MAX_SITES {
        return Err(Error::Capacity(format!(
            "L = {sites} exceeds the supported maximum of {MAX_SITES} sites"
        )));
    }
    if sites < 2 {
        return Err(Error::Domain(format!("L = {sites}, need at least 2 sites")));
    }
    if particles > sites {
        return Err(Error::Domain(format!("N = {particles} exceeds L = {sites}")));
    }
    let mut states = Vec::with_capacity(binomial(sites, particles));
    if particles == 0 {
        states.push(0);
    } else {
        // Gosper's hack walks same-popcount integers in ascending order.
        let limit: u64 = 1 << sites;
        let mut v: u64 = (1 << particles) - 1;
        while v < limit {
            states.push(v as u32);
            let c = v & v.wrapping_neg();
            let r = v + c;
            v = (((r ^ v) >> 2) / c) | r;
        }
    }
    Ok(FockBasis {
        sites,
        sector: Sector::Fixed(particles),
        states,
    })
}

/// The full Fock space of `sites` modes, all particle numbers.
pub fn build_full_fock(sites: usize) -> Result<FockBasis> {
    if sites > MAX_FULL_FOCK_SITES {
        return Err(Error::Capacity(format!(
            "full Fock space of L = {sites} exceeds the limit L <= {MAX_FULL_FOCK_SITES}"
        )));
    }
    if sites < 2 {
        return Err(Error::Domain(format!("L = {sites}, need at least 2 sites")));
    }
    Ok(FockBasis {
        sites,
        sector: Sector::All,
        states: (0..1u32 << sites).collect(),
    })
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Complex amplitudes over a shared [`FockBasis`].
#[derive(Debug, Clone)]
pub struct ManyBodyVector {
    basis: Arc<FockBasis>,
    amplitudes: Array1<C64>,
}

impl ManyBodyVector {
    pub fn new(basis: Arc<FockBasis>, amplitudes: Array1<C64>) -> Result<Self> {
        if amplitudes.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                found: amplitudes.len(),
            });
        }
        Ok(Self { basis, amplitudes })
    }

    pub fn zeros(basis: Arc<FockBasis>) -> Self {
        let n = basis.len();
        Self {
            basis,
            amplitudes: Array1::zeros(n),
        }
    }

    /// Single occupation-pattern state.
    pub fn basis_state(basis: Arc<FockBasis>, pattern: u32) -> Result<Self> {
        let idx = basis.index_of(pattern).ok_or_else(|| {
            Error::Domain(format!(
                "pattern {} not in basis",
                basis.pattern_string(pattern)
            ))
        })?;
        let mut v = Self::zeros(basis);
        v.amplitudes[idx] = C64::new(1.0, 0.0);
        Ok(v)
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn shared_basis(&self) -> Arc<FockBasis> {
        Arc::clone(&self.basis)
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut Array1<C64> {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Array1<C64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Rescale to unit norm, returning the norm before rescaling.
    pub fn renormalize(&mut self) -> Result<f64> {
        let n = self.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(Error::Numerical(format!("cannot renormalize a state of norm {n}")));
        }
        self.amplitudes.mapv_inplace(|a| a / n);
        Ok(n)
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &ManyBodyVector) -> C64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|<self|other>|` for normalized states.
    pub fn fidelity(&self, other: &ManyBodyVector) -> f64 {
        self.inner(other).norm() / (self.norm() * other.norm())
    }
}

/// Density-wave pattern `|1010...10>` with site 0 occupied.
pub fn density_wave_pattern(sites: usize) -> u32 {
    (0..sites).step_by(2).fold(0u32, |p, j| p | 1 << j)
}

pub fn prepare_density_wave(basis: Arc<FockBasis>) -> Result<ManyBodyVector> {
    let l = basis.sites();
    if l % 2 != 0 || basis.particles() != Some(l / 2) {
        return Err(Error::Domain(format!(
            "density wave needs even L at half filling, got L = {l}, sector {:?}",
            basis.sector()
        )));
    }
    ManyBodyVector::basis_state(basis, density_wave_pattern(l))
}

/// Equal-weight superposition over fillings `Q = 0..=L` of one momentum-space
/// Fock state per sector, each drawn uniformly from the `C(L, Q)` choices of
/// occupied momenta `k_m = 2 pi m / L`. Amplitudes are expressed in the
/// real-space occupation basis of the full Fock space.
pub fn prepare_mixed_filling(sites: usize, seed: u64) -> Result<ManyBodyVector> {
    let basis = Arc::new(build_full_fock(sites)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = momentum_labels(sites);
    let weight = 1.0 / ((sites + 1) as f64).sqrt();
    let mut amps = Array1::<C64>::zeros(basis.len());

    for q in 0..=sites {
        let mut chosen: Vec<usize> = sample(&mut rng, sites, q).into_vec();
        chosen.sort_unstable();
        let ks: Vec<f64> = chosen
            .iter()
            .map(|&i| 2.0 * PI * grid[i] as f64 / sites as f64)
            .collect();
        let sector = build_basis(sites, q)?;
        for &pattern in sector.states() {
            let occupied: Vec<usize> = (0..sites).filter(|j| pattern >> j & 1 == 1).collect();
            let amp = slater_amplitude(&ks, &occupied, sites)?;
            amps[pattern as usize] = amp * weight;
        }
    }
    ManyBodyVector::new(basis, amps)
}

/// `<n|prod_k a_k^dagger|0>` for plane-wave orbitals `e^{ikj}/sqrt(L)`.
fn slater_amplitude(ks: &[f64], occupied: &[usize], sites: usize) -> Result<C64> {
    let q = ks.len();
    if q == 0 {
        return Ok(C64::new(1.0, 0.0));
    }
    let norm = 1.0 / (sites as f64).sqrt();
    let m = Array2::from_shape_fn((q, q), |(a, b)| {
        C64::from_polar(norm, ks[b] * occupied[a] as f64)
    });
    Ok(m.det()?)
}

/// Integer momentum labels `m = -floor(L/2) .. L - 1 - floor(L/2)`.
pub fn momentum_labels(sites: usize) -> Vec<i64> {
    let lo = -((sites / 2) as i64);
    (0..sites as i64).map(|i| lo + i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn four_choose_two() {
        let b = build_basis(4, 2).unwrap();
        assert_eq!(b.states(), &[0b0011, 0b0101, 0b0110, 0b1001, 0b1010, 0b1100]);
    }

    #[test]
    fn sizes() {
        assert_eq!(build_basis(12, 6).unwrap().len(), 924);
        let b = build_basis(8, 4).unwrap();
        assert_eq!(b.len(), 70);
        for (i, &s) in b.states().iter().enumerate() {
            assert_eq!(b.index_of(s), Some(i));
        }
        assert_eq!(build_basis(5, 0).unwrap().states(), &[0]);
        assert_eq!(build_basis(5, 5).unwrap().states(), &[0b11111]);
    }

    #[test]
    fn range_errors_are_distinguished() {
        assert!(matches!(build_basis(25, 3), Err(Error::Capacity(_))));
        assert!(matches!(build_basis(1, 0), Err(Error::Domain(_))));
        assert!(matches!(build_basis(6, 7), Err(Error::Domain(_))));
        assert!(matches!(build_full_fock(15), Err(Error::Capacity(_))));
    }

    #[test]
    fn density_wave_four_sites() {
        let b = Arc::new(build_basis(4, 2).unwrap());
        let psi = prepare_density_wave(b.clone()).unwrap();
        let idx = b.index_of(0b0101).unwrap();
        assert_eq!(b.pattern_string(0b0101), "1010");
        for (i, a) in psi.amplitudes().iter().enumerate() {
            let want = if i == idx { 1.0 } else { 0.0 };
            assert_eq!(*a, C64::new(want, 0.0));
        }
        assert!((psi.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn density_wave_rejects_wrong_filling() {
        let b = Arc::new(build_basis(6, 2).unwrap());
        assert!(prepare_density_wave(b).is_err());
        let b = Arc::new(build_basis(5, 2).unwrap());
        assert!(prepare_density_wave(b).is_err());
    }

    #[test]
    fn mixed_filling_is_normalized_and_seeded() {
        let a = prepare_mixed_filling(8, 17).unwrap();
        let b = prepare_mixed_filling(8, 17).unwrap();
        let c = prepare_mixed_filling(8, 18).unwrap();
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert_eq!(a.amplitudes(), b.amplitudes());
        assert_ne!(a.amplitudes(), c.amplitudes());
        // each sector carries weight 1/(L+1)
        for q in 0..=8u32 {
            let w: f64 = a
                .basis()
                .states()
                .iter()
                .zip(a.amplitudes())
                .filter(|(s, _)| s.count_ones() == q)
                .map(|(_, x)| x.norm_sqr())
                .sum();
            assert!((w - 1.0 / 9.0).abs() < 1e-12, "sector {q}: {w}");
        }
        assert!(matches!(prepare_mixed_filling(15, 0), Err(Error::Capacity(_))));
    }

    proptest! {
        #[test]
        fn basis_round_trip(l in 2usize..=14, frac in 0.0f64..=1.0) {
            let n = ((l as f64) * frac).round() as usize;
            let b = build_basis(l, n).unwrap();
            prop_assert_eq!(b.len(), binomial(l, n));
            for (i, &s) in b.states().iter().enumerate() {
                prop_assert_eq!(s.count_ones() as usize, n);
                prop_assert_eq!(b.index_of(s), Some(i));
            }
            prop_assert!(b.states().windows(2).all(|w| w[0] < w[1]));
        }
    }
}
