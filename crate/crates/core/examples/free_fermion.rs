// Slater-determinant evolution against the many-body state: the entropy
// from the correlation matrix matches the Schmidt decomposition.

use std::sync::Arc;

use hatano_nelson::entanglement::entanglement_entropy;
use hatano_nelson::evolve::{evolve_trajectory, KrylovConfig, RecordSpec};
use hatano_nelson::freefermion::{correlation_matrix, ff_entropy, full_correlation, momentum_occupation, OrbitalPropagator, OrbitalSet};
use hatano_nelson::model::single_particle_hamiltonian;
use hatano_nelson::{build_basis, build_hamiltonian, prepare_density_wave, ModelParams, Result};

pub fn run_example() -> Result<f64> {
    let mut p = ModelParams::half_filled(8, 0.5, 0.0, 1.0);
    p.theta = 2.0;
    let t = 3.0;

    let phi = OrbitalPropagator::new(&single_particle_hamiltonian(&p))?.evolve(&OrbitalSet::density_wave(8)?, t)?;

    let basis = Arc::new(build_basis(8, 4)?);
    let h = build_hamiltonian(&p, &basis)?;
    let mut spec = RecordSpec::at(vec![t]);
    spec.keep_states = true;
    let rec = evolve_trajectory(&h, &prepare_density_wave(basis)?, &KrylovConfig::new(0.02, 20), &spec)?;
    let psi = rec.snapshots[0].state.as_ref().expect("kept");

    let mut worst: f64 = 0.0;
    for ell in 1..8 {
        let a = ff_entropy(&correlation_matrix(&phi, ell)?)?;
        let b = entanglement_entropy(psi, ell)?;
        println!("ell = {ell}  S_corr = {a:.10}  S_svd = {b:.10}");
        worst = worst.max((a - b).abs());
    }
    let nk = momentum_occupation(&full_correlation(&phi)?);
    println!("n_k = {:?}", nk.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>());
    println!("max difference {worst:.2e}");
    Ok(worst)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
