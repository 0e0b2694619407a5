//! One PASS/FAIL line per acceptance criterion.
//!
//! Run with `cargo test --test acceptance`. The report is printed in full
//! even when a criterion fails; the process exit status is non-zero only if
//! a criterion could not be evaluated at all.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array1;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hatano_nelson::basis::{build_basis, build_full_fock, momentum_labels};
use hatano_nelson::cli::{sample_theta, sliding_speed, track_wavepacket};
use hatano_nelson::entanglement::{entanglement_entropy, entanglement_entropy_rdm, EntanglementCurve};
use hatano_nelson::evolve::{
    dense_propagate_oracle, evolve_trajectory, evolve_trajectory_spectral, linear_time_grid, log_time_grid,
    KrylovConfig, RecordSpec, SpectralPropagator,
};
use hatano_nelson::fitting::{fit_ceff, fit_nk_relaxation, CeffOptions};
use hatano_nelson::freefermion::{
    correlation_matrix, ff_entropy, fit_lambda_phase, perturbative_speed, OrbitalPropagator, OrbitalSet,
};
use hatano_nelson::model::{build_hamiltonian, dispersion, single_particle_hamiltonian, ModelParams};
use hatano_nelson::observables::{momentum_grid, one_particle_dm};
use hatano_nelson::spectral::{
    free_many_body_eigenvalues, full_spectrum, imag_fraction, imag_fraction_of, imag_gap_stats, IMAG_THRESHOLD,
};
use hatano_nelson::{prepare_density_wave, FockBasis, ManyBodyVector, Result, C64};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn half_filled(l: usize, g: f64, v: f64, w: f64, theta: f64) -> ModelParams {
    let mut p = ModelParams::half_filled(l, g, v, w);
    p.theta = theta;
    p
}

fn dw(l: usize) -> Result<(Arc<FockBasis>, ManyBodyVector)> {
    let b = Arc::new(build_basis(l, l / 2)?);
    let psi = prepare_density_wave(b.clone())?;
    Ok((b, psi))
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn oracle_equivalence() -> Result<Outcome> {
    let p = half_filled(8, 0.5, 2.0, 3.0, sample_theta(0));
    let (b, psi0) = dw(8)?;
    let h = build_hamiltonian(&p, &b)?;
    let mut spec = RecordSpec::at(vec![1.0]);
    spec.keep_states = true;
    let rec = evolve_trajectory(&h, &psi0, &KrylovConfig::new(0.01, 20), &spec)?;
    let krylov = rec.snapshots[0].state.clone().expect("kept state");
    let (exact, method) = dense_propagate_oracle(&h.to_dense(), &psi0, 1.0)?;
    let f = krylov.fidelity(&exact);
    outcome(f > 1.0 - 1e-8, format!("1 - fidelity = {:.2e} ({method:?} oracle)", 1.0 - f))
}

fn hermitian_limit() -> Result<Outcome> {
    let (b, psi0) = dw(12)?;
    let cfg = KrylovConfig::default();
    let h = build_hamiltonian(&half_filled(12, 0.0, 2.0, 3.0, sample_theta(0)), &b)?;
    let rec = evolve_trajectory(&h, &psi0, &cfg, &RecordSpec::at(vec![10.0]))?;
    let drift = rec.cumulative_norm_drift;

    let h = build_hamiltonian(&half_filled(12, 0.0, 0.0, 0.0, 0.0), &b)?;
    let mut spec = RecordSpec::at(linear_time_grid(10.0, 21));
    spec.momentum = true;
    let rec = evolve_trajectory(&h, &psi0, &cfg, &spec)?;
    let n0 = rec.snapshots[0].momentum.clone().expect("n_k");
    let dev = rec
        .snapshots
        .iter()
        .flat_map(|s| s.momentum.as_ref().expect("n_k").iter().zip(&n0).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    outcome(
        drift < 1e-8 && dev < 1e-10,
        format!("norm drift {drift:.2e} over {} steps, max |n_k(t) - n_k(0)| = {dev:.2e}", rec.steps),
    )
}

fn fermi_sea_collapse() -> Result<Outcome> {
    let (l, g) = (12, 0.5);
    let (b, psi0) = dw(l)?;
    let h = build_hamiltonian(&half_filled(l, g, 0.0, 0.0, 0.0), &b)?;
    let mut spec = RecordSpec::at(linear_time_grid(20.0, 81));
    spec.momentum = true;
    let rec = evolve_trajectory(&h, &psi0, &KrylovConfig::default(), &spec)?;
    let ks = momentum_grid(l);
    let last = rec.snapshots.last().expect("t = 20").momentum.clone().expect("n_k");
    let mut step_err: f64 = 0.0;
    let mut ratios = Vec::new();
    for (i, &k) in ks.iter().enumerate() {
        let im = dispersion(k, g, 1.0).im;
        let step = if im.abs() < 1e-12 { 0.5 } else if im > 0.0 { 1.0 } else { 0.0 };
        step_err = step_err.max((last[i] - step).abs());
        if im.abs() > 1e-12 {
            let series: Vec<(f64, f64)> = rec
                .snapshots
                .iter()
                .map(|s| (s.t, s.momentum.as_ref().expect("n_k")[i]))
                .collect();
            let fit = fit_nk_relaxation(&series, k, g)?;
            ratios.push(fit.get("ratio").expect("ratio"));
        }
    }
    let worst = ratios.iter().map(|r| (r / 2.0 - 1.0).abs()).fold(0.0, f64::max);
    let (lo, hi) = ratios.iter().fold((f64::MAX, f64::MIN), |(a, b), &r| (a.min(r), b.max(r)));
    outcome(
        step_err < 1e-3 && worst < 0.15,
        format!(
            "max |n_k - step| = {step_err:.2e}; rate ratio over {} modes in [{lo:.4}, {hi:.4}]",
            ratios.len()
        ),
    )
}

fn cross_method_entanglement() -> Result<Outcome> {
    let (l, g) = (10, 0.5);
    let (b, psi0) = dw(l)?;
    let times = log_time_grid(0.1, 100.0, 20)?;
    let mut worst: f64 = 0.0;
    for w in [0.0, 1.0] {
        let p = half_filled(l, g, 0.0, w, sample_theta(1));
        let h = build_hamiltonian(&p, &b)?;
        let mut spec = RecordSpec::at(times.clone());
        spec.entropy_ells = (1..l).collect();
        let rec = evolve_trajectory(&h, &psi0, &KrylovConfig::new(0.02, 20), &spec)?;
        let prop = OrbitalPropagator::new(&single_particle_hamiltonian(&p))?;
        let dw = OrbitalSet::density_wave(l)?;
        for s in &rec.snapshots {
            let phi = prop.evolve(&dw, s.t)?;
            for &(ell, svd) in &s.entropy {
                let corr = ff_entropy(&correlation_matrix(&phi, ell)?)?;
                worst = worst.max((svd - corr).abs());
            }
        }
    }
    outcome(worst < 1e-8, format!("max |S_svd - S_corr| = {worst:.2e} over 20 times, all ell, W in {{0, 1}}"))
}

fn log_scaling() -> Result<Outcome> {
    let (l, g) = (16, 0.5);
    let p = half_filled(l, g, 0.0, 0.0, 0.0);
    let prop = OrbitalPropagator::new(&single_particle_hamiltonian(&p))?;
    let dw = OrbitalSet::density_wave(l)?;
    let times = log_time_grid(0.1, 1000.0, 201)?;
    let phis = times.iter().map(|&t| prop.evolve(&dw, t)).collect::<Result<Vec<_>>>()?;
    let mut pts = Vec::new();
    for ell in 2..=14 {
        let s = phis
            .iter()
            .map(|phi| ff_entropy(&correlation_matrix(phi, ell)?))
            .collect::<Result<Vec<_>>>()?;
        pts.push((ell, EntanglementCurve::from_series(ell, times.clone(), s)?.s_inf));
    }
    let fit = fit_ceff(&pts, l, CeffOptions::default())?;
    let c = fit.get("c_eff").expect("c_eff");
    outcome(
        (0.9..=1.1).contains(&c),
        format!("c_eff = {c:.4} +- {:.4} ({} points)", fit.stderr[0], fit.points_used),
    )
}

fn non_monotonic() -> Result<Outcome> {
    let (l, ell, samples) = (12, 6, 20);
    let (b, psi0) = dw(l)?;
    let times = log_time_grid(0.1, 1000.0, 81)?;
    let mut spec = RecordSpec::at(times.clone());
    spec.entropy_ells = vec![ell];
    let mut s_max = Vec::new();
    let mut s_inf = Vec::new();
    for i in 0..samples {
        let h = build_hamiltonian(&half_filled(l, 0.5, 2.0, 3.0, sample_theta(i)), &b)?;
        let rec = evolve_trajectory_spectral(&SpectralPropagator::new(&h)?, &psi0, &spec)?;
        let c = EntanglementCurve::from_series(ell, times.clone(), rec.entropy_series(ell).expect("S"))?;
        s_max.push(c.s_max);
        s_inf.push(c.s_inf);
    }
    let (a, sa) = mean_se(&s_max);
    let (z, sz) = mean_se(&s_inf);
    let se = (sa * sa + sz * sz).sqrt();
    outcome(
        a - z > 3.0 * se,
        format!("{samples} samples: S_max = {a:.4} +- {sa:.4}, S_final = {z:.4} +- {sz:.4}, gap = {:.1} SE", (a - z) / se),
    )
}

fn f_im_crossing() -> Result<Outcome> {
    let g = 0.5;
    let samples = 200;
    let sizes = [8usize, 10, 12];
    let ws: Vec<f64> = (0..=45).map(|i| 0.5 + 0.1 * i as f64).collect();

    // the subset-sum spectrum agrees with exact diagonalization
    let mut mismatch: f64 = 0.0;
    for &w in &[1.0, 3.3, 5.0] {
        for i in 0..3 {
            let p = half_filled(8, g, 0.0, w, sample_theta(i));
            let full = full_spectrum(&build_hamiltonian(&p, &build_basis(8, 4)?)?)?;
            let free = free_many_body_eigenvalues(&p)?;
            mismatch = mismatch.max((imag_fraction(&full, IMAG_THRESHOLD) - imag_fraction_of(free.view(), IMAG_THRESHOLD)).abs());
        }
    }

    let mut curves = Vec::new();
    for &l in &sizes {
        let mut c = Vec::new();
        for &w in &ws {
            let mut f = 0.0;
            for i in 0..samples {
                let ev = free_many_body_eigenvalues(&half_filled(l, g, 0.0, w, sample_theta(i)))?;
                f += imag_fraction_of(ev.view(), IMAG_THRESHOLD);
            }
            c.push(f / samples as f64);
        }
        curves.push(c);
    }
    let mut all_inside = true;
    let mut report = Vec::new();
    for a in 0..sizes.len() {
        for b in a + 1..sizes.len() {
            let d: Vec<f64> = curves[b].iter().zip(&curves[a]).map(|(x, y)| x - y).collect();
            let crossings: Vec<f64> = (1..ws.len())
                .filter(|&i| d[i - 1] * d[i] < 0.0)
                .map(|i| ws[i - 1] + (ws[i] - ws[i - 1]) * d[i - 1] / (d[i - 1] - d[i]))
                .collect();
            if crossings.is_empty() || crossings.iter().any(|w| (w - 3.3).abs() > 0.5) {
                all_inside = false;
            }
            let list: Vec<String> = crossings.iter().map(|w| format!("{w:.2}")).collect();
            report.push(format!("L{}/L{}: [{}]", sizes[a], sizes[b], list.join(", ")));
        }
    }
    let at = |w: f64| -> String {
        let i = ws.iter().position(|x| (x - w).abs() < 1e-9).expect("grid point");
        let vals: Vec<String> = curves.iter().map(|c| format!("{:.3}", c[i])).collect();
        format!("f(W={w}) = [{}]", vals.join(", "))
    };
    outcome(
        all_inside && mismatch < 1e-12,
        format!(
            "crossings {}; {} {} {}; free vs dense f_Im mismatch {mismatch:.1e}",
            report.join(" "),
            at(2.0),
            at(3.3),
            at(4.5)
        ),
    )
}

fn degeneracy_dichotomy() -> Result<Outcome> {
    let b = build_basis(10, 5)?;
    let samples = 10;
    let mut worst_free: f64 = 0.0;
    let mut min_gap = f64::INFINITY;
    for i in 0..samples {
        let free = imag_gap_stats(&full_spectrum(&build_hamiltonian(&half_filled(10, 0.5, 0.0, 5.0, sample_theta(i)), &b)?)?)?;
        worst_free = worst_free.max((free.top - free.tilde).abs());
        let int = imag_gap_stats(&full_spectrum(&build_hamiltonian(&half_filled(10, 0.5, 2.0, 5.0, sample_theta(i)), &b)?)?)?;
        min_gap = min_gap.min(int.top - int.tilde);
    }
    outcome(
        worst_free < 1e-8 && min_gap > 1e-8,
        format!("{samples} samples: V=0 max |E_top - E_tilde| = {worst_free:.1e}; V=2 min (E_top - E_tilde) = {min_gap:.3e}"),
    )
}

fn two_mode_oscillation() -> Result<Outcome> {
    let g: f64 = 0.5;
    let p = half_filled(4, g, 0.0, 0.0, 0.0);
    let prop = OrbitalPropagator::new(&single_particle_hamiltonian(&p))?;
    let dw = OrbitalSet::density_wave(4)?;
    let dt = 0.01;
    let times: Vec<f64> = (0..=3000).map(|i| dt * i as f64).collect();
    let mut pairs = Vec::new();
    let mut s = Vec::new();
    for &t in &times {
        let c = correlation_matrix(&prop.evolve(&dw, t)?, 2)?;
        let ev = c.eigenvalues()?;
        s.push(ff_entropy(&c)?);
        if t > 1.0 {
            pairs.push((t, (ev[0].max(ev[1]), ev[0].min(ev[1]))));
        }
    }
    let (phi, rms) = fit_lambda_phase(g, &pairs)?;
    let mut peaks = Vec::new();
    for i in 1..s.len() - 1 {
        if times[i] > 2.0 && s[i] > s[i - 1] && s[i] >= s[i + 1] {
            let (a, b, c) = (s[i - 1], s[i], s[i + 1]);
            peaks.push(times[i] + dt * 0.5 * (a - c) / (a - 2.0 * b + c));
        }
    }
    let period = (peaks[peaks.len() - 1] - peaks[0]) / (peaks.len() - 1) as f64;
    let omega = 2.0 * PI / period;
    let want = 4.0 * g.cosh();
    outcome(
        rms < 1e-2 && (omega / want - 1.0).abs() < 0.02,
        format!("lambda rms {rms:.2e} (phi = {phi:.4}); omega = {omega:.5} vs 4 cosh g = {want:.5}"),
    )
}

fn wavepacket() -> Result<Outcome> {
    let g: f64 = 1.0;
    let times: Vec<f64> = (0..=60).map(|i| 0.5 * i as f64).collect();
    let wc = 2.0 * g.exp();
    let speed = |w: f64, samples: u64| -> Result<f64> {
        let mut v = 0.0;
        for i in 0..samples {
            let mut p = half_filled(201, g, 0.0, w, sample_theta(i));
            p.particles = 1;
            v -= sliding_speed(&track_wavepacket(&p, 100, &times)?)?;
        }
        Ok(v / samples as f64)
    };
    let v0 = speed(0.0, 1)?;
    let free_err = (v0 / (2.0 * g.cosh()) - 1.0).abs();
    let mut worst: f64 = 0.0;
    for frac in [0.1, 0.2, 0.3] {
        let w = frac * wc;
        worst = worst.max((perturbative_speed(g, w) / speed(w, 8)? - 1.0).abs());
    }
    outcome(
        free_err < 0.02 && worst < 0.05,
        format!("W=0 speed {v0:.4} vs 2 cosh 1 (err {:.2e}); perturbative max rel err {:.2}% for W <= 0.3 W_c", free_err, 100.0 * worst),
    )
}

fn random_state(l: usize, n: Option<usize>, seed: u64) -> Result<ManyBodyVector> {
    let b = Arc::new(match n {
        Some(n) => build_basis(l, n)?,
        None => build_full_fock(l)?,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amps = Array1::from_shape_fn(b.len(), |_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let mut psi = ManyBodyVector::new(b, amps)?;
    psi.renormalize()?;
    Ok(psi)
}

fn reflected(psi: &ManyBodyVector) -> ManyBodyVector {
    let b = psi.shared_basis();
    let l = b.sites();
    let mut out = ManyBodyVector::zeros(b.clone());
    for (i, &s) in b.states().iter().enumerate() {
        let r = s.reverse_bits() >> (32 - l);
        out.amplitudes_mut()[b.index_of(r).expect("reflected pattern")] = psi.amplitudes()[i];
    }
    out
}

fn property_suites() -> Result<Outcome> {
    let mut failures = Vec::new();
    let runner = || TestRunner::new(Config { cases: 64, failure_persistence: None, ..Config::default() });

    let r = runner().run(&(2usize..=16, 0.0f64..=1.0), |(l, frac)| {
        let n = (l as f64 * frac).round() as usize;
        let b = build_basis(l, n).unwrap();
        prop_assert_eq!(b.len(), hatano_nelson::basis::binomial(l, n));
        for (i, &s) in b.states().iter().enumerate() {
            prop_assert_eq!(s.count_ones() as usize, n);
            prop_assert_eq!(b.index_of(s), Some(i));
        }
        prop_assert!(b.states().windows(2).all(|w| w[0] < w[1]));
        Ok(())
    });
    if let Err(e) = r {
        failures.push(format!("basis round-trip: {e}"));
    }

    let r = runner().run(&(2usize..=10, -1.5f64..1.5, 0.0f64..3.0, 0.0f64..4.0, 0.0f64..6.3), |(l, g, v, w, th)| {
        let b = build_basis(l, l / 2).unwrap();
        let h = build_hamiltonian(&half_filled(l, g, v, w, th), &b).unwrap().to_dense();
        let hm = build_hamiltonian(&half_filled(l, -g, v, w, th), &b).unwrap().to_dense();
        prop_assert!((&h.t() - &hm).iter().all(|x| x.norm() < 1e-14));
        Ok(())
    });
    if let Err(e) = r {
        failures.push(format!("transpose / g-negation: {e}"));
    }

    let r = runner().run(&(2usize..=10, prop::option::of(0.0f64..=1.0), any::<u64>()), |(l, frac, seed)| {
        let n = frac.map(|f| (l as f64 * f).round() as usize);
        let psi = random_state(l, n, seed).unwrap();
        let mirror = reflected(&psi);
        for ell in 1..l {
            let s = entanglement_entropy(&psi, ell).unwrap();
            prop_assert!((s - entanglement_entropy(&mirror, l - ell).unwrap()).abs() < 1e-10);
            prop_assert!(s >= -1e-12 && s <= ell.min(l - ell) as f64 * std::f64::consts::LN_2 + 1e-10);
            prop_assert!((s - entanglement_entropy_rdm(&psi, ell).unwrap()).abs() < 1e-9);
        }
        Ok(())
    });
    if let Err(e) = r {
        failures.push(format!("Schmidt symmetry / entropy bounds: {e}"));
    }

    let r = runner().run(&(2usize..=10, 0.0f64..=1.0, any::<u64>()), |(l, frac, seed)| {
        let n = (l as f64 * frac).round() as usize;
        let pdm = one_particle_dm(&random_state(l, Some(n), seed).unwrap());
        prop_assert!((pdm.trace() - n as f64).abs() < 1e-10);
        let hermitian = pdm.matrix.indexed_iter().all(|((i, j), x)| (x - pdm.matrix[[j, i]].conj()).norm() < 1e-12);
        prop_assert!(hermitian);
        use ndarray_linalg::{Eigh, UPLO};
        let (ev, _) = pdm.matrix.eigh(UPLO::Upper).unwrap();
        prop_assert!(ev.iter().all(|&x| (-1e-10..=1.0 + 1e-10).contains(&x)));
        Ok(())
    });
    if let Err(e) = r {
        failures.push(format!("OPDM spectrum: {e}"));
    }

    let labels_ok = (2..=16).all(|l| momentum_labels(l).len() == l);
    if !labels_ok {
        failures.push("momentum labels".into());
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "basis, transpose/g-negation, Schmidt mirror, entropy bounds, OPDM spectrum: 64 cases each".into()
        } else {
            failures.join("; ")
        },
    )
}

type Criterion = (&'static str, fn() -> Result<Outcome>);

fn main() {
    let criteria: [Criterion; 11] = [
        ("oracle equivalence", oracle_equivalence),
        ("hermitian limit", hermitian_limit),
        ("fermi-sea collapse", fermi_sea_collapse),
        ("cross-method entanglement", cross_method_entanglement),
        ("log scaling c_eff", log_scaling),
        ("non-monotonic dynamics", non_monotonic),
        ("f_Im crossing", f_im_crossing),
        ("Im(E) degeneracy dichotomy", degeneracy_dichotomy),
        ("two-mode oscillation", two_mode_oscillation),
        ("wavepacket sliding", wavepacket),
        ("property suites", property_suites),
    ];
    let mut failed = 0;
    let mut errored = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let result = run();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(o) => {
                if !o.pass {
                    failed += 1;
                }
                println!("{} {name}: {} [{secs:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            }
            Err(e) => {
                errored += 1;
                println!("FAIL {name}: error: {e} [{secs:.1}s]");
            }
        }
    }
    println!(
        "acceptance: {} passed, {} failed, {} errored",
        criteria.len() - failed - errored,
        failed,
        errored
    );
    if errored > 0 {
        std::process::exit(1);
    }
}
