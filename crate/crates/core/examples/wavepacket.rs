// A single particle on a long ring slides at a speed set by the
// non-reciprocity, slowed down by the quasiperiodic potential.

use hatano_nelson::cli::{sample_theta, sliding_speed, track_wavepacket};
use hatano_nelson::freefermion::perturbative_speed;
use hatano_nelson::{ModelParams, Result};

pub fn run_example() -> Result<Vec<(f64, f64, f64)>> {
    let g: f64 = 1.0;
    let wc = 2.0 * g.exp();
    let times: Vec<f64> = (0..=40).map(|i| 0.5 * i as f64).collect();
    let mut out = Vec::new();
    for frac in [0.0, 0.1, 0.2] {
        let mut p = ModelParams::half_filled(121, g, 0.0, frac * wc);
        p.particles = 1;
        p.theta = sample_theta(3);
        let track = track_wavepacket(&p, 60, &times)?;
        let v = -sliding_speed(&track)?;
        let want = perturbative_speed(g, p.disorder);
        let (_, x, var) = track.last().copied().expect("non-empty");
        println!("W/W_c = {frac:.1}  v = {v:.4}  perturbative = {want:.4}  x(t_end) = {x:.1}  var = {var:.2}");
        out.push((frac, v, want));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
