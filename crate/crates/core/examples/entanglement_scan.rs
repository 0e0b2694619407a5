// Late-time entanglement versus subsystem size for the clean free chain and
// the effective central charge from the chord-length fit.

use hatano_nelson::entanglement::EntanglementCurve;
use hatano_nelson::evolve::log_time_grid;
use hatano_nelson::fitting::{fit_ceff, CeffOptions};
use hatano_nelson::freefermion::{correlation_matrix, ff_entropy, OrbitalPropagator, OrbitalSet};
use hatano_nelson::model::single_particle_hamiltonian;
use hatano_nelson::{ModelParams, Result};

pub fn run_example() -> Result<f64> {
    let l = 16;
    let p = ModelParams::half_filled(l, 0.5, 0.0, 0.0);
    let prop = OrbitalPropagator::new(&single_particle_hamiltonian(&p))?;
    let start = OrbitalSet::density_wave(l)?;
    let times = log_time_grid(0.1, 1000.0, 81)?;
    let states = times.iter().map(|&t| prop.evolve(&start, t)).collect::<Result<Vec<_>>>()?;

    let mut points = Vec::new();
    for ell in 1..l {
        let s = states
            .iter()
            .map(|phi| ff_entropy(&correlation_matrix(phi, ell)?))
            .collect::<Result<Vec<_>>>()?;
        let curve = EntanglementCurve::from_series(ell, times.clone(), s)?;
        println!("ell = {ell:2}  S_max = {:.4}  S_inf = {:.4}", curve.s_max, curve.s_inf);
        points.push((ell, curve.s_inf));
    }
    let fit = fit_ceff(&points, l, CeffOptions::default())?;
    let c = fit.get("c_eff").expect("c_eff");
    println!("c_eff = {c:.3} +- {:.3}", fit.stderr[0]);
    Ok(c)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
