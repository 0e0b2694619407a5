//! Renormalized non-unitary time evolution.
//!
//! The Arnoldi stepper projects `H` onto the Krylov space spanned by
//! `psi, H psi, ..., H^{M-1} psi`, exponentiates the small Hessenberg matrix
//! and maps back. The state is rescaled to unit norm after every step; the
//! norm before rescaling is kept so that growth and drift can be inspected.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::basis::ManyBodyVector;
use crate::entanglement::entanglement_entropy;
use crate::linalg::{expm_taylor, norm1, EigenPropagator};
use crate::model::SparseHamiltonian;
use crate::observables::{correlation_profile, density_momentum, density_real, one_particle_dm};
use crate::{Error, Result, C64};

/// Eigenbases worse conditioned than this are not trusted for `exp`.
const CONDITION_LIMIT: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrylovConfig {
    pub dt: f64,
    #[serde(rename = "M")]
    pub krylov_dim: usize,
    #[serde(default = "default_breakdown_tol")]
    pub breakdown_tol: f64,
    #[serde(default = "default_true")]
    pub renorm_each_step: bool,
}

fn default_breakdown_tol() -> f64 {
    1e-12
}

fn default_true() -> bool {
    true
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            krylov_dim: 15,
            breakdown_tol: default_breakdown_tol(),
            renorm_each_step: true,
        }
    }
}

impl KrylovConfig {
    pub fn new(dt: f64, krylov_dim: usize) -> Self {
        Self {
            dt,
            krylov_dim,
            ..Self::default()
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Domain(format!("dt must be positive, got {}", self.dt)));
        }
        if self.krylov_dim == 0 || self.krylov_dim > dim {
            return Err(Error::Domain(format!(
                "Krylov dimension {} outside 1..={dim}",
                self.krylov_dim
            )));
        }
        Ok(())
    }
}

/// Diagnostics of one propagation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Norm of the propagated state before rescaling.
    pub norm_before: f64,
    /// Krylov dimension actually used (smaller after a happy breakdown).
    pub krylov_dim: usize,
    pub used_taylor: bool,
}

/// Reusable Arnoldi workspace for one Hamiltonian.
pub struct ArnoldiStepper<'a> {
    h: &'a SparseHamiltonian,
    cfg: KrylovConfig,
    basis_vecs: Vec<Vec<C64>>,
    scale: f64,
}

impl<'a> ArnoldiStepper<'a> {
    pub fn new(h: &'a SparseHamiltonian, cfg: KrylovConfig) -> Result<Self> {
        cfg.validate(h.dim())?;
        let m = cfg.krylov_dim;
        Ok(Self {
            h,
            cfg,
            basis_vecs: vec![vec![C64::new(0.0, 0.0); h.dim()]; m + 1],
            scale: h.norm_inf().max(1.0),
        })
    }

    pub fn config(&self) -> &KrylovConfig {
        &self.cfg
    }

    /// Propagate `x` in place by `exp(-i dt H)`, then rescale to unit norm if
    /// the configuration asks for it.
    pub fn step(&mut self, x: &mut Array1<C64>, dt: f64) -> Result<StepInfo> {
        let n = self.h.dim();
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: x.len(),
            });
        }
        let beta = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Numerical(format!("state norm {beta} before Krylov step")));
        }
        let m = self.cfg.krylov_dim;
        let mut hess = Array2::<C64>::zeros((m, m));
        for (v, xi) in self.basis_vecs[0].iter_mut().zip(x.iter()) {
            *v = xi / beta;
        }
        let mut used = m;
        for j in 0..m {
            let (head, tail) = self.basis_vecs.split_at_mut(j + 1);
            let w = &mut tail[0];
            self.h.apply_into(&head[j], w);
            // modified Gram-Schmidt, two passes
            for _ in 0..2 {
                for (i, v) in head.iter().enumerate() {
                    let c: C64 = v.iter().zip(w.iter()).map(|(a, b)| a.conj() * b).sum();
                    for (wk, vk) in w.iter_mut().zip(v) {
                        *wk -= c * vk;
                    }
                    hess[[i, j]] += c;
                }
            }
            let hn = w.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if !hn.is_finite() {
                return Err(Error::Numerical(
                    "non-finite Arnoldi vector; try a smaller dt".into(),
                ));
            }
            if j + 1 == m {
                break;
            }
            if hn < self.cfg.breakdown_tol * self.scale {
                used = j + 1;
                break;
            }
            hess[[j + 1, j]] = C64::new(hn, 0.0);
            w.iter_mut().for_each(|v| *v /= hn);
        }

        let small = hess.slice(ndarray::s![..used, ..used]).to_owned();
        let (coeffs, used_taylor) = exp_first_column(&small, dt)?;
        x.fill(C64::new(0.0, 0.0));
        for (c, v) in coeffs.iter().zip(&self.basis_vecs[..used]) {
            let c = c * beta;
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi += c * vi;
            }
        }
        let norm_before = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if !(norm_before.is_finite() && norm_before > 0.0) {
            return Err(Error::Numerical(format!(
                "propagated norm {norm_before}; try a smaller dt"
            )));
        }
        if self.cfg.renorm_each_step {
            x.mapv_inplace(|v| v / norm_before);
        }
        Ok(StepInfo {
            norm_before: norm_before / beta,
            krylov_dim: used,
            used_taylor,
        })
    }
}

/// First column of `exp(-i dt A)` for a small matrix.
fn exp_first_column(a: &Array2<C64>, dt: f64) -> Result<(Array1<C64>, bool)> {
    let n = a.nrows();
    let mut e1 = Array1::<C64>::zeros(n);
    e1[0] = C64::new(1.0, 0.0);
    if let Ok(p) = EigenPropagator::new(a) {
        if p.condition < 1e6 {
            let y = p.apply(dt, e1.view());
            if y.iter().all(|v| v.is_finite()) {
                return Ok((y, false));
            }
        }
    }
    let y = expm_taylor(&a.mapv(|v| v * C64::new(0.0, -dt))).column(0).to_owned();
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("overflow in Hessenberg exponential; try a smaller dt".into()));
    }
    Ok((y, true))
}

/// One Krylov step of length `cfg.dt`, returning the renormalized state.
pub fn arnoldi_step(h: &SparseHamiltonian, psi: &ManyBodyVector, cfg: &KrylovConfig) -> Result<ManyBodyVector> {
    let mut stepper = ArnoldiStepper::new(h, KrylovConfig { renorm_each_step: true, ..*cfg })?;
    let mut x = psi.amplitudes().clone();
    stepper.step(&mut x, cfg.dt)?;
    ManyBodyVector::new(psi.shared_basis(), x)
}

/// How [`dense_propagate_oracle`] evaluated the exponential.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    Eigen,
    Taylor { substeps: usize },
}

/// Reference propagation through the full biorthogonal eigenbasis,
/// `sum_a <<a|psi0> e^{-i E_a t} |a>`, renormalized. Falls back to substepped
/// Taylor propagation when the eigenbasis is too ill-conditioned.
pub fn dense_propagate_oracle(
    h: &Array2<C64>,
    psi0: &ManyBodyVector,
    t: f64,
) -> Result<(ManyBodyVector, OracleMethod)> {
    if h.nrows() != psi0.amplitudes().len() {
        return Err(Error::DimensionMismatch {
            expected: h.nrows(),
            found: psi0.amplitudes().len(),
        });
    }
    if t == 0.0 {
        return Ok((psi0.clone(), OracleMethod::Eigen));
    }
    match EigenPropagator::new(h) {
        Ok(p) if p.condition < CONDITION_LIMIT => {
            let shift = p.max_imag();
            let x = p.apply_shifted(t, shift, psi0.amplitudes().view());
            let mut out = ManyBodyVector::new(psi0.shared_basis(), x)?;
            out.renormalize()?;
            Ok((out, OracleMethod::Eigen))
        }
        _ => {
            let (out, substeps) = taylor_propagate(h, psi0, t)?;
            Ok((out, OracleMethod::Taylor { substeps }))
        }
    }
}

fn taylor_propagate(h: &Array2<C64>, psi0: &ManyBodyVector, t: f64) -> Result<(ManyBodyVector, usize)> {
    let substeps = ((t.abs() * norm1(h)).ceil() as usize).max(1);
    let tau = t / substeps as f64;
    let u = expm_taylor(&h.mapv(|v| v * C64::new(0.0, -tau)));
    let mut out = psi0.clone();
    for _ in 0..substeps {
        let next = u.dot(out.amplitudes());
        *out.amplitudes_mut() = next;
        out.renormalize()?;
    }
    Ok((out, substeps))
}

/// Exact propagation through a precomputed eigenbasis, suitable for long
/// trajectories on small spaces.
pub struct SpectralPropagator {
    inner: EigenPropagator,
}

impl SpectralPropagator {
    pub fn new(h: &SparseHamiltonian) -> Result<Self> {
        let inner = EigenPropagator::new(&h.to_dense())?;
        if inner.condition >= CONDITION_LIMIT {
            return Err(Error::Numerical(format!(
                "eigenbasis condition number {:.3e} too large for spectral propagation",
                inner.condition
            )));
        }
        Ok(Self { inner })
    }

    pub fn condition(&self) -> f64 {
        self.inner.condition
    }

    /// Renormalized `exp(-i t H) psi0`.
    pub fn propagate(&self, psi0: &ManyBodyVector, t: f64) -> Result<ManyBodyVector> {
        let x = self
            .inner
            .apply_shifted(t, self.inner.max_imag(), psi0.amplitudes().view());
        let mut out = ManyBodyVector::new(psi0.shared_basis(), x)?;
        out.renormalize()?;
        Ok(out)
    }
}

/// `n` logarithmically spaced times from `t_min` to `t_max` inclusive.
pub fn log_time_grid(t_min: f64, t_max: f64, n: usize) -> Result<Vec<f64>> {
    if !(t_min > 0.0 && t_max > t_min) || n < 2 {
        return Err(Error::Domain(format!(
            "log grid needs 0 < t_min < t_max and n >= 2, got ({t_min}, {t_max}, {n})"
        )));
    }
    let (a, b) = (t_min.ln(), t_max.ln());
    Ok((0..n)
        .map(|i| {
            if i + 1 == n {
                t_max
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect())
}

/// `n` evenly spaced times from `0` to `t_max` inclusive.
pub fn linear_time_grid(t_max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| t_max * i as f64 / (n - 1).max(1) as f64).collect()
}

/// Which observables to record, and when.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordSpec {
    /// Non-negative, strictly increasing record times.
    pub times: Vec<f64>,
    pub density: bool,
    pub momentum: bool,
    pub correlations: bool,
    /// Subsystem sizes for the entanglement entropy.
    pub entropy_ells: Vec<usize>,
    pub keep_states: bool,
}

impl RecordSpec {
    pub fn at(times: Vec<f64>) -> Self {
        Self {
            times,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() {
            return Err(Error::Domain("no record times".into()));
        }
        if self.times[0] < 0.0 || !self.times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Domain("record times must be non-negative and strictly increasing".into()));
        }
        Ok(())
    }
}

/// Observables at one record time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    /// Norm of the recorded state (1 up to rounding).
    pub norm: f64,
    pub density: Option<Vec<f64>>,
    pub momentum: Option<Vec<f64>>,
    pub correlations: Option<Vec<f64>>,
    /// `(ell, S)` pairs.
    pub entropy: Vec<(usize, f64)>,
    pub state: Option<ManyBodyVector>,
}

/// Disorder-sample label of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SampleTag {
    pub theta: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub sample: SampleTag,
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
    /// `sum |norm_before - 1|` over all steps.
    pub cumulative_norm_drift: f64,
    /// `sum ln(norm_before)`, the log of the unnormalized norm.
    pub log_norm_growth: f64,
    pub taylor_fallbacks: usize,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    /// `S(t)` for one subsystem size.
    pub fn entropy_series(&self, ell: usize) -> Option<Vec<f64>> {
        self.snapshots
            .iter()
            .map(|s| s.entropy.iter().find(|(l, _)| *l == ell).map(|(_, v)| *v))
            .collect()
    }
}

fn snapshot(psi: &ManyBodyVector, t: f64, spec: &RecordSpec) -> Result<Snapshot> {
    let pdm = spec.correlations.then(|| one_particle_dm(psi));
    Ok(Snapshot {
        t,
        norm: psi.norm(),
        density: spec.density.then(|| density_real(psi)),
        momentum: if spec.momentum { Some(density_momentum(psi)?) } else { None },
        correlations: pdm.as_ref().map(correlation_profile),
        entropy: spec
            .entropy_ells
            .iter()
            .map(|&ell| entanglement_entropy(psi, ell).map(|s| (ell, s)))
            .collect::<Result<_>>()?,
        state: spec.keep_states.then(|| psi.clone()),
    })
}

/// Krylov-propagate `psi0` through all record times. Steps never exceed
/// `cfg.dt` and are shortened so that each record time is hit exactly.
pub fn evolve_trajectory(
    h: &SparseHamiltonian,
    psi0: &ManyBodyVector,
    cfg: &KrylovConfig,
    spec: &RecordSpec,
) -> Result<TrajectoryRecord> {
    spec.validate()?;
    let mut stepper = ArnoldiStepper::new(h, KrylovConfig { renorm_each_step: true, ..*cfg })?;
    let mut psi = psi0.clone();
    psi.renormalize()?;
    let mut rec = TrajectoryRecord {
        sample: SampleTag::default(),
        snapshots: Vec::with_capacity(spec.times.len()),
        steps: 0,
        cumulative_norm_drift: 0.0,
        log_norm_growth: 0.0,
        taylor_fallbacks: 0,
    };
    let mut t = 0.0;
    for &target in &spec.times {
        let span = target - t;
        if span > 0.0 {
            let n = (span / cfg.dt - 1e-9).ceil().max(1.0) as usize;
            let dt = span / n as f64;
            for _ in 0..n {
                let info = stepper.step(psi.amplitudes_mut(), dt)?;
                rec.steps += 1;
                rec.cumulative_norm_drift += (info.norm_before - 1.0).abs();
                rec.log_norm_growth += info.norm_before.ln();
                rec.taylor_fallbacks += info.used_taylor as usize;
            }
            t = target;
        }
        rec.snapshots.push(snapshot(&psi, target, spec)?);
    }
    Ok(rec)
}

/// Same record as [`evolve_trajectory`] but each snapshot is computed by
/// exact eigenbasis propagation from `psi0`.
pub fn evolve_trajectory_spectral(
    prop: &SpectralPropagator,
    psi0: &ManyBodyVector,
    spec: &RecordSpec,
) -> Result<TrajectoryRecord> {
    spec.validate()?;
    let snapshots = spec
        .times
        .iter()
        .map(|&t| snapshot(&prop.propagate(psi0, t)?, t, spec))
        .collect::<Result<_>>()?;
    Ok(TrajectoryRecord {
        sample: SampleTag::default(),
        snapshots,
        steps: 0,
        cumulative_norm_drift: 0.0,
        log_norm_growth: 0.0,
        taylor_fallbacks: 0,
    })
}
