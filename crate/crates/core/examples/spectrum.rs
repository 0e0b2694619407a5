// Complex many-body spectrum: fraction of complex eigenvalues and the gap
// between the top imaginary part and the next few.

use hatano_nelson::spectral::{free_many_body_eigenvalues, imag_fraction, imag_gap_stats, IMAG_THRESHOLD};
use hatano_nelson::{build_basis, build_hamiltonian, full_spectrum, ModelParams, Result};

pub fn run_example() -> Result<Vec<(f64, f64, f64)>> {
    let basis = build_basis(8, 4)?;
    let mut out = Vec::new();
    for w in [1.0, 3.0, 5.0] {
        for v in [0.0, 2.0] {
            let mut p = ModelParams::half_filled(8, 0.5, v, w);
            p.theta = 0.4;
            let spec = full_spectrum(&build_hamiltonian(&p, &basis)?)?;
            let f = imag_fraction(&spec, IMAG_THRESHOLD);
            let gap = imag_gap_stats(&spec)?;
            println!(
                "W = {w}  V = {v}  f_Im = {f:.3}  Im E_top = {:.5}  Im E_tilde = {:.5}",
                gap.top, gap.tilde
            );
            if v == 0.0 {
                let free = free_many_body_eigenvalues(&p)?;
                let ff = hatano_nelson::spectral::imag_fraction_of(free.view(), IMAG_THRESHOLD);
                println!("           subset-sum f_Im = {ff:.3}");
            }
            out.push((w, v, f));
        }
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
