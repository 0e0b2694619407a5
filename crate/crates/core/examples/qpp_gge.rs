// Quasiparticle-picture entropy with GGE mode weights next to the exact
// free-fermion entropy of a clean ring.

use hatano_nelson::freefermion::{correlation_matrix, ff_entropy, OrbitalPropagator, OrbitalSet};
use hatano_nelson::model::single_particle_hamiltonian;
use hatano_nelson::theory::{qpp_entropy, GgePrediction};
use hatano_nelson::{ModelParams, Result};

pub fn run_example() -> Result<Vec<(f64, f64, f64)>> {
    let (l, ell, g) = (40, 10, 0.3);
    let p = ModelParams::half_filled(l, g, 0.0, 0.0);
    let prop = OrbitalPropagator::new(&single_particle_hamiltonian(&p))?;
    let start = OrbitalSet::density_wave(l)?;
    let mut out = Vec::new();
    for i in 0..=10 {
        let t = 0.5 * i as f64;
        let exact = ff_entropy(&correlation_matrix(&prop.evolve(&start, t)?, ell)?)?;
        let qpp = qpp_entropy(l, ell, g, t, true, true)?;
        println!("t = {t:4.1}  S_exact = {exact:.4}  S_qpp = {qpp:.4}");
        out.push((t, exact, qpp));
    }
    let gge = GgePrediction::density_wave(8, g, true);
    println!("GGE n_k at t = 2 on L = 8: {:?}", gge.nk(2.0).iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>());
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
