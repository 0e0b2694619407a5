// Drive the `evolve` command from a JSON config and read back the
// ensemble-averaged entropy table.

use hatano_nelson::cli::{read_averaged_csv, run_command, Command, ExperimentConfig};
use hatano_nelson::Result;

pub fn run_example() -> Result<usize> {
    let out = std::env::temp_dir().join(format!("hn-cli-example-{}", std::process::id()));
    let cfg = ExperimentConfig::from_json(&format!(
        r#"{{
            "model": {{"L": 8, "N": 4, "g": 0.5, "V": 2.0, "W": 3.0}},
            "run": {{"dt": 0.05, "M": 12, "grid": {{"kind": "log", "t_min": 0.1, "t_max": 10.0, "points": 8}}}},
            "ensemble": {{"n_samples": 4, "base_seed": 7}},
            "observables": {{"entropy_ells": [2, 4]}},
            "output": {:?}
        }}"#,
        out.display().to_string()
    ))?;
    let manifest = run_command(Command::Evolve, &cfg, 2)?;
    println!("{} wrote {:?}", manifest.command, manifest.files);
    let rows = read_averaged_csv(&out.join("sent.csv"))?;
    for r in rows.iter().filter(|r| r.index == 4) {
        println!("t = {:7.3}  S = {:.4} +- {:.4}  (n = {})", r.t, r.mean, r.stderr, r.n);
    }
    std::fs::remove_dir_all(&out)?;
    Ok(rows.len())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
