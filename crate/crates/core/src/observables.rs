//! Densities and one-particle correlations of a many-body state.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};

use crate::basis::{build_basis, momentum_labels, FockBasis, ManyBodyVector, Sector};
use crate::model::hop_sign;
use crate::{Result, C64};

/// Momenta `k_m = 2 pi m / L` for `m = -L/2 .. L/2 - 1`.
pub fn momentum_grid(sites: usize) -> Vec<f64> {
    momentum_labels(sites)
        .into_iter()
        .map(|m| 2.0 * PI * m as f64 / sites as f64)
        .collect()
}

/// `<n_j>` on each site.
pub fn density_real(psi: &ManyBodyVector) -> Vec<f64> {
    let l = psi.basis().sites();
    let mut n = vec![0.0; l];
    for (&s, a) in psi.basis().states().iter().zip(psi.amplitudes()) {
        let w = a.norm_sqr();
        if w == 0.0 {
            continue;
        }
        for (j, nj) in n.iter_mut().enumerate() {
            if s >> j & 1 == 1 {
                *nj += w;
            }
        }
    }
    n
}

/// One-particle density matrix `pdm[i][j] = <c_i^dag c_j>`.
#[derive(Debug, Clone)]
pub struct OnePdm {
    pub matrix: Array2<C64>,
}

impl OnePdm {
    pub fn sites(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diag().iter().map(|x| x.re).sum()
    }

    /// Upper-left `ell x ell` block.
    pub fn block(&self, ell: usize) -> Array2<C64> {
        self.matrix.slice(ndarray::s![..ell, ..ell]).to_owned()
    }

    /// `(1/L) sum_{ij} e^{ik(i-j)} <c_i^dag c_j>` on the momentum grid.
    pub fn momentum_diagonal(&self) -> Vec<f64> {
        let l = self.sites();
        momentum_grid(l)
            .into_iter()
            .map(|k| {
                let mut acc = C64::new(0.0, 0.0);
                for ((i, j), v) in self.matrix.indexed_iter() {
                    acc += v * C64::from_polar(1.0, k * (i as f64 - j as f64));
                }
                acc.re / l as f64
            })
            .collect()
    }
}

pub fn one_particle_dm(psi: &ManyBodyVector) -> OnePdm {
    let basis = psi.basis();
    let l = basis.sites();
    let amps = psi.amplitudes();
    let mut m = Array2::<C64>::zeros((l, l));
    for (idx, &s) in basis.states().iter().enumerate() {
        let a = amps[idx];
        if a == C64::new(0.0, 0.0) {
            continue;
        }
        for j in (0..l).filter(|&j| s >> j & 1 == 1) {
            m[[j, j]] += a.norm_sqr();
            for i in (0..l).filter(|&i| s >> i & 1 == 0) {
                let target = s ^ (1 << j) ^ (1 << i);
                if let Some(t) = basis.index_of(target) {
                    // <target| c_i^dag c_j |s>
                    m[[i, j]] += amps[t].conj() * a * hop_sign(s, i, j);
                }
            }
        }
    }
    OnePdm { matrix: m }
}

/// `<a_k^dag a_k>` with `a_k = L^{-1/2} sum_j e^{-ikj} c_j`, evaluated by
/// applying `a_k` to the state and taking the squared norm.
pub fn density_momentum(psi: &ManyBodyVector) -> Result<Vec<f64>> {
    let basis = psi.basis();
    let l = basis.sites();
    let target = removal_target(basis)?;
    let norm = 1.0 / (l as f64).sqrt();
    let grid = momentum_grid(l);
    let mut out = Vec::with_capacity(l);
    let mut buf = Array1::<C64>::zeros(target.len());
    for k in grid {
        buf.fill(C64::new(0.0, 0.0));
        for (&s, a) in basis.states().iter().zip(psi.amplitudes()) {
            if *a == C64::new(0.0, 0.0) {
                continue;
            }
            for j in (0..l).filter(|&j| s >> j & 1 == 1) {
                let below = (s & ((1u32 << j) - 1)).count_ones();
                let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
                let t = target.index(s ^ (1 << j));
                buf[t] += a * C64::from_polar(norm * sign, -k * j as f64);
            }
        }
        out.push(buf.iter().map(|x| x.norm_sqr()).sum());
    }
    Ok(out)
}

/// Index space of states with one particle removed.
enum RemovalTarget {
    Sector(FockBasis),
    Full(usize),
}

impl RemovalTarget {
    fn len(&self) -> usize {
        match self {
            RemovalTarget::Sector(b) => b.len(),
            RemovalTarget::Full(n) => *n,
        }
    }

    fn index(&self, pattern: u32) -> usize {
        match self {
            RemovalTarget::Sector(b) => b.index_of(pattern).expect("pattern in N-1 sector"),
            RemovalTarget::Full(_) => pattern as usize,
        }
    }
}

fn removal_target(basis: &FockBasis) -> Result<RemovalTarget> {
    Ok(match basis.sector() {
        Sector::Fixed(0) => RemovalTarget::Full(1),
        Sector::Fixed(n) => RemovalTarget::Sector(build_basis(basis.sites(), n - 1)?),
        Sector::All => RemovalTarget::Full(1 << basis.sites()),
    })
}

/// Site-averaged magnitude `C(l) = (1/L) sum_j |<c_j^dag c_{j+l}>|` for
/// `l = 1 .. L-1` (index 0 of the result is `l = 1`).
pub fn correlation_profile(pdm: &OnePdm) -> Vec<f64> {
    let l = pdm.sites();
    (1..l)
        .map(|d| (0..l).map(|j| pdm.matrix[[j, (j + d) % l]].norm()).sum::<f64>() / l as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_basis, prepare_density_wave, prepare_mixed_filling};
    use approx::assert_abs_diff_eq;
    use ndarray_linalg::{Eigh, UPLO};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn random_state(l: usize, n: usize, seed: u64) -> ManyBodyVector {
        let b = Arc::new(build_basis(l, n).unwrap());
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let amps = Array1::from_shape_fn(b.len(), |_| {
            let mut next = || {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            };
            C64::new(next(), next())
        });
        let mut psi = ManyBodyVector::new(b, amps).unwrap();
        psi.renormalize().unwrap();
        psi
    }

    #[test]
    fn density_wave_observables() {
        let b = Arc::new(build_basis(8, 4).unwrap());
        let psi = prepare_density_wave(b).unwrap();
        assert_eq!(density_real(&psi), vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let pdm = one_particle_dm(&psi);
        for ((i, j), v) in pdm.matrix.indexed_iter() {
            let want = if i == j && i % 2 == 0 { 1.0 } else { 0.0 };
            assert_eq!(*v, C64::new(want, 0.0));
        }
        for nk in density_momentum(&psi).unwrap() {
            assert_abs_diff_eq!(nk, 0.5, epsilon = 1e-14);
        }
        assert!(correlation_profile(&pdm).iter().all(|&c| c == 0.0));
    }

    #[test]
    fn single_particle_superposition() {
        let b = Arc::new(build_basis(2, 1).unwrap());
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = ManyBodyVector::new(b, Array1::from(vec![C64::new(s, 0.0), C64::new(s, 0.0)])).unwrap();
        let pdm = one_particle_dm(&psi);
        assert!(pdm.matrix.iter().all(|v| (v - 0.5).norm() < 1e-15));
    }

    #[test]
    fn plane_wave_lands_on_its_momentum() {
        let l = 6;
        let b = Arc::new(build_basis(l, 1).unwrap());
        let k = momentum_grid(l)[1];
        let amps = Array1::from_shape_fn(l, |j| {
            // basis state index j is the single particle on site j
            C64::from_polar(1.0 / (l as f64).sqrt(), k * j as f64)
        });
        let psi = ManyBodyVector::new(b, amps).unwrap();
        let nk = density_momentum(&psi).unwrap();
        for (m, v) in nk.iter().enumerate() {
            assert_abs_diff_eq!(*v, if m == 1 { 1.0 } else { 0.0 }, epsilon = 1e-12);
        }
    }

    #[test]
    fn mixed_filling_momentum_occupations_are_binary_per_sector() {
        // Each sector is a momentum Fock state, so n_k is a sum over sectors of
        // 0/1 values weighted by 1/(L+1).
        let psi = prepare_mixed_filling(6, 3).unwrap();
        let nk = density_momentum(&psi).unwrap();
        let via_pdm = one_particle_dm(&psi).momentum_diagonal();
        for (a, b) in nk.iter().zip(&via_pdm) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            let scaled = a * 7.0;
            assert_abs_diff_eq!(scaled, scaled.round(), epsilon = 1e-10);
        }
        assert_abs_diff_eq!(nk.iter().sum::<f64>(), 3.0, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn opdm_invariants(l in 2usize..=9, frac in 0.0f64..=1.0, seed in any::<u64>()) {
            let n = ((l as f64) * frac).round() as usize;
            let psi = random_state(l, n, seed);
            let pdm = one_particle_dm(&psi);
            let nj = density_real(&psi);
            prop_assert!((pdm.trace() - n as f64).abs() < 1e-10);
            prop_assert!((nj.iter().sum::<f64>() - n as f64).abs() < 1e-10);
            for j in 0..l {
                prop_assert!((pdm.matrix[[j, j]].re - nj[j]).abs() < 1e-12);
            }
            let herm = pdm.matrix.t().mapv(|x| x.conj());
            prop_assert!((&pdm.matrix - &herm).iter().all(|x| x.norm() < 1e-10));
            let (ev, _) = pdm.matrix.eigh(UPLO::Upper).unwrap();
            prop_assert!(ev.iter().all(|&e| (-1e-10..=1.0 + 1e-10).contains(&e)));

            let nk = density_momentum(&psi).unwrap();
            let dft = pdm.momentum_diagonal();
            for (a, b) in nk.iter().zip(&dft) {
                prop_assert!((a - b).abs() < 1e-12);
                prop_assert!((-1e-10..=1.0 + 1e-10).contains(a));
            }
            prop_assert!((nk.iter().sum::<f64>() - n as f64).abs() < 1e-10);
            prop_assert!(nj.iter().all(|x| (-1e-10..=1.0 + 1e-10).contains(x)));
        }
    }
}
