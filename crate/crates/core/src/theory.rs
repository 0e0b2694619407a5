//! Closed-form curves for the clean non-interacting chain: generalized Gibbs
//! occupations and the quasiparticle picture of entanglement spreading.

use serde::{Deserialize, Serialize};

use crate::freefermion::binary_entropy;
use crate::model::dispersion;
use crate::observables::momentum_grid;
use crate::{Error, Result};

/// `1 / (1 + e^{lambda_k - 2 Im(eps) t})` with `eps = dispersion(k, g, 1)`, or
/// `2 eps` when `factor2` is set.
pub fn gge_nk(k: f64, g: f64, t: f64, lambda_k: f64, factor2: bool) -> f64 {
    let scale = if factor2 { 2.0 } else { 1.0 };
    let im = scale * dispersion(k, g, 1.0).im;
    let x = lambda_k - 2.0 * im * t;
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// GGE occupations on the momentum grid of an `L`-site ring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GgePrediction {
    pub k_grid: Vec<f64>,
    pub lambda_k: Vec<f64>,
    pub g: f64,
    pub factor2: bool,
}

impl GgePrediction {
    /// Density-wave start: every `lambda_k = 0`.
    pub fn density_wave(sites: usize, g: f64, factor2: bool) -> Self {
        let k_grid = momentum_grid(sites);
        Self {
            lambda_k: vec![0.0; k_grid.len()],
            k_grid,
            g,
            factor2,
        }
    }

    pub fn nk(&self, t: f64) -> Vec<f64> {
        self.k_grid
            .iter()
            .zip(&self.lambda_k)
            .map(|(&k, &lam)| gge_nk(k, self.g, t, lam, self.factor2))
            .collect()
    }
}

/// `-n ln n - (1-n) ln(1-n)`.
pub fn entropy_density(n: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&n) {
        return Err(Error::Domain(format!("occupation {n} outside [0, 1]")));
    }
    Ok(binary_entropy(n))
}

/// Group velocity `-2 cosh(g) sin(k)` of the real part of the dispersion.
pub fn group_velocity(k: f64, g: f64) -> f64 {
    -2.0 * g.cosh() * k.sin()
}

/// Fraction of pairs of separation `x` with exactly one member in a block of
/// `ell` sites on a ring of `L`, scaled so its average over `x` is `ell'/L`
/// with `ell' = min(ell, L - ell)`.
pub fn straddle_weight(x: f64, ell: usize, sites: usize) -> f64 {
    let l = sites as f64;
    let e = ell.min(sites - ell) as f64;
    let kappa = l / (l - e);
    kappa * x.min(e).min(l - x).max(0.0) / l
}

/// Quasiparticle-picture entropy `sum_k s_k(t) P(x_k(t), ell, L)` with
/// `x_k = 2 |v(k)| t mod L`.
pub fn qpp_entropy(
    sites: usize,
    ell: usize,
    g: f64,
    t: f64,
    time_dependent_weights: bool,
    factor2: bool,
) -> Result<f64> {
    if ell == 0 || ell >= sites {
        return Err(Error::Domain(format!("subsystem size {ell} outside 1..{sites}")));
    }
    let l = sites as f64;
    let mut s = 0.0;
    for k in momentum_grid(sites) {
        let sk = if time_dependent_weights {
            binary_entropy(gge_nk(k, g, t, 0.0, factor2))
        } else {
            std::f64::consts::LN_2
        };
        let x = (2.0 * group_velocity(k, g).abs() * t).rem_euclid(l);
        s += sk * straddle_weight(x, ell, sites);
    }
    Ok(s)
}

/// `(ell'/L) sum_k s_k` with `ell' = min(ell, L - ell)`.
pub fn qpp_saturation(sites: usize, ell: usize, s_k: &[f64]) -> f64 {
    ell.min(sites - ell) as f64 / sites as f64 * s_k.iter().sum::<f64>()
}

/// Time after which the fastest pair has wrapped once around the ring,
/// `L / (2 max|v|)`.
pub fn revival_period(sites: usize, g: f64) -> f64 {
    sites as f64 / (4.0 * g.cosh())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{LN_2, PI};

    #[test]
    fn gge_limits() {
        assert_eq!(gge_nk(0.7, 0.5, 0.0, 0.0, true), 0.5);
        assert!((gge_nk(-1.0, 0.5, 200.0, 0.0, false) - 1.0).abs() < 1e-12);
        assert!(gge_nk(1.0, 0.5, 200.0, 0.0, false) < 1e-12);
        assert!(gge_nk(1.0, 0.5, 1e6, 0.0, true).is_finite());
        let a = gge_nk(-PI / 2.0, 0.5, 1.0, 0.0, false);
        let b = gge_nk(-PI / 2.0, 0.5, 0.5, 0.0, true);
        assert!((a - b).abs() < 1e-15);
        let p = GgePrediction::density_wave(8, 0.5, true);
        assert_eq!(p.nk(0.0), vec![0.5; 8]);
    }

    #[test]
    fn entropy_density_values() {
        assert!((entropy_density(0.5).unwrap() - LN_2).abs() < 1e-15);
        assert_eq!(entropy_density(0.0).unwrap(), 0.0);
        assert_eq!(entropy_density(1.0).unwrap(), 0.0);
        assert!(entropy_density(1.2).is_err());
        assert!(entropy_density(-0.1).is_err());
    }

    #[test]
    fn qpp_start_and_early_growth() {
        assert_eq!(qpp_entropy(20, 5, 0.5, 0.0, true, true).unwrap(), 0.0);
        assert!(qpp_entropy(20, 0, 0.5, 1.0, true, true).is_err());
        // linear growth in t cosh(g) before the block saturates
        let a = qpp_entropy(200, 50, 0.0, 1.0, false, false).unwrap();
        let b = qpp_entropy(200, 50, 0.0, 2.0, false, false).unwrap();
        assert!((b / a - 2.0).abs() < 1e-12);
        let c = qpp_entropy(200, 50, 0.5, 1.0 / 0.5f64.cosh(), false, false).unwrap();
        assert!((c - a).abs() < 1e-12);
    }

    #[test]
    fn saturation_identity_by_time_average() {
        let (l, g) = (16, 0.5);
        // modes at k = 0 and -pi do not move and never straddle the cut
        let sk: Vec<f64> = momentum_grid(l)
            .into_iter()
            .filter(|&k| group_velocity(k, g).abs() > 1e-12)
            .map(|_| LN_2)
            .collect();
        for ell in [3, 8, 12] {
            let period = revival_period(l, g);
            let n = 20000;
            let avg: f64 = (0..n)
                .map(|i| qpp_entropy(l, ell, g, 1000.0 * period * (i as f64 + 0.5) / n as f64, false, false).unwrap())
                .sum::<f64>()
                / n as f64;
            let want = qpp_saturation(l, ell, &sk);
            assert!((avg - want).abs() < 2e-2 * want, "ell={ell}: {avg} vs {want}");
        }
    }

    #[test]
    fn time_dependent_weights_vanish_late() {
        let s = qpp_entropy(16, 4, 0.5, 200.0, true, true).unwrap();
        // only k = 0 and k = -pi keep n_k = 1/2
        assert!(s <= 2.0 * LN_2 + 1e-12);
        let s = qpp_entropy(18, 4, 0.5, 200.0, true, true).unwrap();
        assert!(s < LN_2 + 1e-12);
    }

    #[test]
    fn revival_dips() {
        let (l, ell, g) = (40, 10, 0.0);
        let tr = revival_period(l, g);
        let peak = qpp_entropy(l, ell, g, 0.5 * tr, false, false).unwrap();
        let dip = qpp_entropy(l, ell, g, tr, false, false).unwrap();
        assert!(dip < 0.8 * peak, "{dip} {peak}");
    }

    #[test]
    fn gge_particle_hole() {
        for k in [0.3, 1.0, 2.5] {
            for t in [0.1, 1.0, 4.0] {
                let s = gge_nk(k, 0.5, t, 0.0, true) + gge_nk(-k, 0.5, t, 0.0, true);
                assert!((s - 1.0).abs() < 1e-14);
            }
        }
    }
}
