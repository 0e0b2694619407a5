// Momentum occupations of the clean ring relax to a step; the logistic fit
// measures each rate against the bare amplification rate.

use hatano_nelson::fitting::fit_nk_relaxation;
use hatano_nelson::freefermion::{full_correlation, momentum_occupation, OrbitalPropagator, OrbitalSet};
use hatano_nelson::model::single_particle_hamiltonian;
use hatano_nelson::observables::momentum_grid;
use hatano_nelson::{dispersion, ModelParams, Result};

pub fn run_example() -> Result<Vec<(f64, f64)>> {
    let (l, g) = (12, 0.5);
    let p = ModelParams::half_filled(l, g, 0.0, 0.0);
    let prop = OrbitalPropagator::new(&single_particle_hamiltonian(&p))?;
    let start = OrbitalSet::density_wave(l)?;
    let times: Vec<f64> = (0..=60).map(|i| 0.1 * i as f64).collect();
    let nk = times
        .iter()
        .map(|&t| Ok(momentum_occupation(&full_correlation(&prop.evolve(&start, t)?)?)))
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::new();
    for (i, k) in momentum_grid(l).into_iter().enumerate() {
        if dispersion(k, g, 1.0).im.abs() < 1e-12 {
            continue;
        }
        let series: Vec<(f64, f64)> = times.iter().zip(&nk).map(|(&t, n)| (t, n[i])).collect();
        let fit = fit_nk_relaxation(&series, k, g)?;
        let ratio = fit.get("ratio").expect("ratio");
        println!("k = {k:+.4}  rate = {:+.4}  ratio = {ratio:.4}", fit.params[0]);
        out.push((k, ratio));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
