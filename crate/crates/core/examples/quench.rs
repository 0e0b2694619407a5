// Density-wave quench of the interacting chain with Krylov propagation.

use std::sync::Arc;

use hatano_nelson::evolve::{evolve_trajectory, log_time_grid, KrylovConfig, RecordSpec};
use hatano_nelson::{build_basis, build_hamiltonian, prepare_density_wave, ModelParams, Result};

pub fn run_example() -> Result<Vec<(f64, f64)>> {
    let mut p = ModelParams::half_filled(10, 0.5, 2.0, 3.0);
    p.theta = 1.3;
    let basis = Arc::new(build_basis(p.sites, p.particles)?);
    let h = build_hamiltonian(&p, &basis)?;
    let psi0 = prepare_density_wave(basis)?;

    let mut spec = RecordSpec::at(log_time_grid(0.1, 20.0, 12)?);
    spec.density = true;
    spec.entropy_ells = vec![p.sites / 2];
    let rec = evolve_trajectory(&h, &psi0, &KrylovConfig::new(0.05, 15), &spec)?;

    let s = rec.entropy_series(p.sites / 2).expect("recorded");
    for (snap, s) in rec.snapshots.iter().zip(&s) {
        let imbalance: f64 = snap
            .density
            .as_ref()
            .expect("recorded")
            .iter()
            .enumerate()
            .map(|(j, n)| if j % 2 == 0 { *n } else { -*n })
            .sum::<f64>()
            / p.particles as f64;
        println!("t = {:8.3}  S = {s:.5}  imbalance = {imbalance:+.5}", snap.t);
    }
    println!("{} steps, norm drift {:.2e}", rec.steps, rec.cumulative_norm_drift);
    Ok(rec.times().into_iter().zip(s).collect())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
