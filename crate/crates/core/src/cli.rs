//! Experiment driver behind the `hn` binary.
//!
//! A run is fully determined by a JSON config plus command-line overrides.
//! Sample `i` uses seed `base_seed + i`, which fixes its disorder phase and
//! any random initial state, so outputs do not depend on the worker count.
//!
//! Per-sample tables use the long layout `sample,t,key,index,value`;
//! ensemble averages use `t,key,index,mean,stderr,n`. Floats are written with
//! 17 significant digits.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{
    build_basis, build_full_fock, momentum_labels, prepare_density_wave, prepare_mixed_filling, ManyBodyVector,
};
use crate::entanglement::EntanglementCurve;
use crate::evolve::{
    evolve_trajectory, evolve_trajectory_spectral, linear_time_grid, log_time_grid, KrylovConfig, RecordSpec,
    SpectralPropagator, TrajectoryRecord,
};
use crate::fitting::{chord_length, fit_ceff, fit_nk_relaxation, CeffOptions};
use crate::freefermion::{
    correlation_matrix, ff_entropy, full_correlation, momentum_occupation, unwrap_positions, wavepacket_observables,
    OrbitalPropagator, OrbitalSet, perturbative_speed,
};
use crate::model::{build_hamiltonian, single_particle_hamiltonian, ModelParams};
use crate::observables::{correlation_profile, momentum_grid};
use crate::spectral::{full_spectrum, imag_fraction, imag_gap_stats, IMAG_THRESHOLD, MAX_DENSE_DIM};
use crate::theory::{gge_nk, qpp_entropy};
use crate::{Error, Result};

/// Rough memory ceiling for Krylov workspaces, in bytes.
const MEMORY_LIMIT: f64 = 8e9;

#[derive(Debug, Parser)]
#[command(name = "hn", version, about = "Non-unitary dynamics of the interacting Hatano-Nelson chain")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Quench dynamics: densities, entropies and correlations vs time.
    Evolve,
    /// Complex-spectrum statistics over a (W, L) sweep.
    Spectrum,
    /// Late-time entropy for every subsystem size, plus the c_eff fit.
    ScanEntanglement,
    /// Single-particle wavepacket sliding.
    SingleParticle,
    /// Quasiparticle-picture and GGE theory curves.
    Qpp,
    /// Fits on previously written tables.
    Fit,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long = "L", global = true)]
    pub sites: Option<usize>,
    #[arg(long = "N", global = true)]
    pub particles: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub g: Option<f64>,
    #[arg(long = "V", global = true, allow_hyphen_values = true)]
    pub interaction: Option<f64>,
    #[arg(long = "W", global = true)]
    pub disorder: Option<f64>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long = "M", global = true)]
    pub krylov_dim: Option<usize>,
    #[arg(long = "t-max", global = true)]
    pub t_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub observables: ObservableConfig,
    #[serde(default)]
    pub spectrum: Option<SpectrumConfig>,
    #[serde(default)]
    pub scan: Option<ScanConfig>,
    #[serde(default)]
    pub single_particle: Option<SingleParticleConfig>,
    #[serde(default)]
    pub qpp: Option<QppConfig>,
    #[serde(default)]
    pub fit: Option<FitConfig>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TimeGrid {
    Log {
        t_min: f64,
        t_max: f64,
        points: usize,
        #[serde(default)]
        include_zero: bool,
    },
    Linear { t_max: f64, points: usize },
    Explicit { times: Vec<f64> },
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid::Log {
            t_min: 0.1,
            t_max: 1000.0,
            points: 41,
            include_zero: false,
        }
    }
}

impl TimeGrid {
    pub fn times(&self) -> Result<Vec<f64>> {
        match self {
            TimeGrid::Log {
                t_min,
                t_max,
                points,
                include_zero,
            } => {
                let mut v = log_time_grid(*t_min, *t_max, *points).map_err(config_err)?;
                if *include_zero {
                    v.insert(0, 0.0);
                }
                Ok(v)
            }
            TimeGrid::Linear { t_max, points } => {
                if *points < 2 || !(*t_max > 0.0) {
                    return Err(Error::Config("linear grid needs t_max > 0 and points >= 2".into()));
                }
                Ok(linear_time_grid(*t_max, *points))
            }
            TimeGrid::Explicit { times } => Ok(times.clone()),
        }
    }

    fn set_t_max(&mut self, t: f64) {
        match self {
            TimeGrid::Log { t_max, .. } | TimeGrid::Linear { t_max, .. } => *t_max = t,
            TimeGrid::Explicit { times } => times.retain(|&x| x <= t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Free fermions when `V = 0` and the start is a density wave, Krylov otherwise.
    #[default]
    Auto,
    Krylov,
    /// Exact propagation through the dense eigenbasis.
    Spectral,
    FreeFermion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    DensityWave,
    MixedFilling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(rename = "M", default = "default_m")]
    pub krylov_dim: usize,
    #[serde(default)]
    pub grid: TimeGrid,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub initial_state: InitialState,
}

fn default_dt() -> f64 {
    0.05
}

fn default_m() -> usize {
    15
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            krylov_dim: default_m(),
            grid: TimeGrid::default(),
            method: Method::Auto,
            initial_state: InitialState::DensityWave,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMode {
    #[default]
    Sampled,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub theta_mode: ThetaMode,
    #[serde(default)]
    pub thetas: Vec<f64>,
}

fn default_samples() -> usize {
    1
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_samples: 1,
            base_seed: 0,
            theta_mode: ThetaMode::Sampled,
            thetas: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    #[serde(default = "default_true")]
    pub density: bool,
    #[serde(default = "default_true")]
    pub momentum: bool,
    #[serde(default = "default_true")]
    pub correlations: bool,
    /// Defaults to `[L/2]`.
    #[serde(default)]
    pub entropy_ells: Option<Vec<usize>>,
}

fn default_true() -> bool {
    true
}

impl Default for ObservableConfig {
    fn default() -> Self {
        Self {
            density: true,
            momentum: true,
            correlations: true,
            entropy_ells: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    #[serde(rename = "W_values")]
    pub w_values: Vec<f64>,
    #[serde(rename = "L_values")]
    pub l_values: Vec<usize>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    IMAG_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    /// Defaults to `1 .. L-1`.
    #[serde(default)]
    pub ells: Option<Vec<usize>>,
    #[serde(default = "default_true")]
    pub exclude_edges: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleParticleConfig {
    /// Defaults to `L/2`.
    #[serde(default)]
    pub j0: Option<usize>,
    pub t_max: f64,
    #[serde(default = "default_sp_points")]
    pub points: usize,
    #[serde(rename = "W_values")]
    pub w_values: Vec<f64>,
}

fn default_sp_points() -> usize {
    41
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QppConfig {
    pub ells: Vec<usize>,
    #[serde(default = "default_true")]
    pub time_dependent_weights: bool,
    #[serde(default = "default_true")]
    pub factor2: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Ceff,
    Relaxation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub kind: FitKind,
    /// `scan.csv` for `ceff`, an averaged `nk.csv` for `relaxation`.
    pub input: PathBuf,
    #[serde(default = "default_true")]
    pub exclude_edges: bool,
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Domain(m) => Error::Config(m),
        other => other,
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.out {
            self.output = Some(v.clone());
        }
        if let Some(v) = o.samples {
            self.ensemble.n_samples = v;
        }
        if let Some(v) = o.seed {
            self.ensemble.base_seed = v;
        }
        if let Some(v) = o.sites {
            self.model.sites = v;
            if o.particles.is_none() {
                self.model.particles = v / 2;
            }
        }
        if let Some(v) = o.particles {
            self.model.particles = v;
        }
        if let Some(v) = o.g {
            self.model.g = v;
        }
        if let Some(v) = o.interaction {
            self.model.interaction = v;
        }
        if let Some(v) = o.disorder {
            self.model.disorder = v;
        }
        if let Some(v) = o.dt {
            self.run.dt = v;
        }
        if let Some(v) = o.krylov_dim {
            self.run.krylov_dim = v;
        }
        if let Some(v) = o.t_max {
            self.run.grid.set_t_max(v);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.sites < 2 || m.particles > m.sites {
            return Err(Error::Config(format!("invalid (L, N) = ({}, {})", m.sites, m.particles)));
        }
        if !(m.gamma0.is_finite() && m.g.is_finite() && m.interaction.is_finite() && m.disorder.is_finite()) {
            return Err(Error::Config("model parameters must be finite".into()));
        }
        if !(self.run.dt > 0.0) || self.run.krylov_dim == 0 {
            return Err(Error::Config("run needs dt > 0 and M >= 1".into()));
        }
        if self.ensemble.theta_mode == ThetaMode::Explicit {
            if self.ensemble.thetas.is_empty() {
                return Err(Error::Config("explicit theta mode needs a non-empty thetas list".into()));
            }
        } else if self.ensemble.n_samples == 0 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        let times = self.run.grid.times()?;
        RecordSpec::at(times).validate().map_err(config_err)
    }

    pub fn output_dir(&self) -> Result<PathBuf> {
        self.output
            .clone()
            .ok_or_else(|| Error::Config("no output directory (set \"output\" or --out)".into()))
    }

    /// Disorder samples `(index, seed, theta)`.
    pub fn samples(&self) -> Vec<SampleInfo> {
        let e = &self.ensemble;
        match e.theta_mode {
            ThetaMode::Explicit => e
                .thetas
                .iter()
                .enumerate()
                .map(|(i, &theta)| SampleInfo {
                    index: i,
                    seed: e.base_seed.wrapping_add(i as u64),
                    theta,
                })
                .collect(),
            ThetaMode::Sampled => (0..e.n_samples)
                .map(|i| {
                    let seed = e.base_seed.wrapping_add(i as u64);
                    SampleInfo {
                        index: i,
                        seed,
                        theta: sample_theta(seed),
                    }
                })
                .collect(),
        }
    }
}

/// Disorder phase drawn uniformly from `[0, 2 pi)`.
pub fn sample_theta(seed: u64) -> f64 {
    ChaCha8Rng::seed_from_u64(seed).random::<f64>() * 2.0 * PI
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleInfo {
    pub index: usize,
    pub seed: u64,
    pub theta: f64,
}

/// One line of a per-sample table.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub t: f64,
    pub key: &'static str,
    pub index: i64,
    pub value: f64,
}

/// Format a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub const SAMPLE_HEADER: [&str; 5] = ["sample", "t", "key", "index", "value"];
pub const AVERAGE_HEADER: [&str; 6] = ["t", "key", "index", "mean", "stderr", "n"];

pub fn write_sample_csv(path: &Path, sample: usize, rows: &[Row]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(SAMPLE_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            sample.to_string(),
            fmt_f64(r.t),
            r.key.to_string(),
            r.index.to_string(),
            fmt_f64(r.value),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(csv::Writer::from_writer(fs::File::create(path)?))
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Schema(format!("{other:?}")),
    }
}

/// Ensemble mean of one `(t, key, index)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedRow {
    pub t: f64,
    pub key: String,
    pub index: i64,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// `(t, key, index, value)` records of a per-sample table.
pub fn read_sample_csv(path: &Path) -> Result<Vec<(f64, String, i64, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if header != SAMPLE_HEADER {
        return Err(Error::Schema(format!("{}: header {header:?}", path.display())));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let parse = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| Error::Schema(format!("{}: column {i}: {e}", path.display())))
        };
        let index = rec[3]
            .parse::<i64>()
            .map_err(|e| Error::Schema(format!("{}: index: {e}", path.display())))?;
        out.push((parse(1)?, rec[2].to_string(), index, parse(4)?));
    }
    Ok(out)
}

/// Mean and standard error per cell over files with identical cell layout.
pub fn average_ensemble(files: &[PathBuf]) -> Result<Vec<AveragedRow>> {
    if files.is_empty() {
        return Err(Error::Schema("no files to average".into()));
    }
    let tables = files.iter().map(|f| read_sample_csv(f)).collect::<Result<Vec<_>>>()?;
    average_tables(&tables, files)
}

fn average_tables(tables: &[Vec<(f64, String, i64, f64)>], names: &[PathBuf]) -> Result<Vec<AveragedRow>> {
    let first = &tables[0];
    for (tab, name) in tables.iter().zip(names).skip(1) {
        let same = tab.len() == first.len()
            && tab
                .iter()
                .zip(first)
                .all(|(a, b)| a.0 == b.0 && a.1 == b.1 && a.2 == b.2);
        if !same {
            return Err(Error::Schema(format!(
                "{} does not have the same (t, key, index) cells as {}",
                name.display(),
                names[0].display()
            )));
        }
    }
    let n = tables.len();
    Ok((0..first.len())
        .map(|i| {
            let vals: Vec<f64> = tables.iter().map(|t| t[i].3).collect();
            let (mean, stderr) = mean_stderr(&vals);
            AveragedRow {
                t: first[i].0,
                key: first[i].1.clone(),
                index: first[i].2,
                mean,
                stderr,
                n,
            }
        })
        .collect())
}

/// Sample mean and standard error of the mean (zero for one value).
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn write_averaged_csv(path: &Path, rows: &[AveragedRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(AVERAGE_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            fmt_f64(r.t),
            r.key.clone(),
            r.index.to_string(),
            fmt_f64(r.mean),
            fmt_f64(r.stderr),
            r.n.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_averaged_csv(path: &Path) -> Result<Vec<AveragedRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if header != AVERAGE_HEADER {
        return Err(Error::Schema(format!("{}: header {header:?}", path.display())));
    }
    let bad = |e: String| Error::Schema(format!("{}: {e}", path.display()));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        out.push(AveragedRow {
            t: rec[0].parse().map_err(|e| bad(format!("{e}")))?,
            key: rec[1].to_string(),
            index: rec[2].parse().map_err(|e| bad(format!("{e}")))?,
            mean: rec[3].parse().map_err(|e| bad(format!("{e}")))?,
            stderr: rec[4].parse().map_err(|e| bad(format!("{e}")))?,
            n: rec[5].parse().map_err(|e| bad(format!("{e}")))?,
        });
    }
    Ok(out)
}

/// Wide table with a fixed header.
fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Run `f` on every item with up to `threads` workers; results keep input order.
pub fn parallel_map<T, R, F>(items: &[T], threads: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    let workers = threads.clamp(1, items.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("result slots")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

/// Summary of a finished run.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub samples: Vec<SampleInfo>,
    pub files: Vec<String>,
    pub wall_time_s: f64,
    pub threads: usize,
    pub notes: BTreeMap<String, serde_json::Value>,
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(m)?)?;
    Ok(())
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Parse arguments, run, and map failures onto exit codes.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(m) => {
            println!("{}: wrote {} files", m.command, m.files.len());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<Manifest> {
    let path = cli
        .opts
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply(&cli.opts);
    let threads = cli.opts.threads.unwrap_or_else(default_threads).max(1);
    run_command(cli.command, &cfg, threads)
}

pub fn run_command(command: Command, cfg: &ExperimentConfig, threads: usize) -> Result<Manifest> {
    cfg.validate()?;
    let out = cfg.output_dir()?;
    fs::create_dir_all(&out)?;
    let start = Instant::now();
    let mut notes = BTreeMap::new();
    let (name, files, samples) = match command {
        Command::Evolve => ("evolve", run_evolve(cfg, &out, threads, &mut notes)?, cfg.samples()),
        Command::Spectrum => ("spectrum", run_spectrum(cfg, &out, threads)?, cfg.samples()),
        Command::ScanEntanglement => (
            "scan-entanglement",
            run_scan(cfg, &out, threads, &mut notes)?,
            cfg.samples(),
        ),
        Command::SingleParticle => ("single-particle", run_single_particle(cfg, &out, threads)?, cfg.samples()),
        Command::Qpp => ("qpp", run_qpp(cfg, &out)?, Vec::new()),
        Command::Fit => ("fit", run_fit(cfg, &out, &mut notes)?, Vec::new()),
    };
    let manifest = Manifest {
        command: name.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        samples,
        files,
        wall_time_s: start.elapsed().as_secs_f64(),
        threads,
        notes,
    };
    write_manifest(&out, &manifest)?;
    Ok(manifest)
}

fn resolve_method(cfg: &ExperimentConfig) -> Result<Method> {
    let free_ok = cfg.model.interaction == 0.0 && cfg.run.initial_state == InitialState::DensityWave;
    Ok(match cfg.run.method {
        Method::Auto if free_ok => Method::FreeFermion,
        Method::Auto => Method::Krylov,
        Method::FreeFermion if !free_ok => {
            return Err(Error::Config(
                "free_fermion method needs V = 0 and a density-wave start".into(),
            ))
        }
        m => m,
    })
}

/// Observable tables of one sample, keyed by file stem.
pub type SampleTables = BTreeMap<&'static str, Vec<Row>>;

fn entropy_ells(cfg: &ExperimentConfig) -> Vec<usize> {
    cfg.observables
        .entropy_ells
        .clone()
        .unwrap_or_else(|| vec![cfg.model.sites / 2])
}

/// Trajectory of one disorder sample as output tables.
pub fn simulate_sample(cfg: &ExperimentConfig, sample: &SampleInfo, ells: &[usize]) -> Result<SampleTables> {
    let mut p = cfg.model.clone();
    p.theta = sample.theta;
    let times = cfg.run.grid.times()?;
    let obs = &cfg.observables;
    let mut tables: SampleTables = BTreeMap::new();
    let labels = momentum_labels(p.sites);
    match resolve_method(cfg)? {
        Method::FreeFermion => {
            let prop = OrbitalPropagator::new(&single_particle_hamiltonian(&p))?;
            let phi0 = OrbitalSet::density_wave(p.sites)?;
            for &t in &times {
                let phi = prop.evolve(&phi0, t)?;
                let c = full_correlation(&phi)?;
                if obs.density {
                    let rows = tables.entry("nj").or_default();
                    for (j, v) in c.matrix.diag().iter().enumerate() {
                        rows.push(Row { t, key: "n_j", index: j as i64, value: v.re });
                    }
                }
                if obs.momentum {
                    let rows = tables.entry("nk").or_default();
                    for (m, v) in labels.iter().zip(momentum_occupation(&c)) {
                        rows.push(Row { t, key: "n_k", index: *m, value: v });
                    }
                }
                if obs.correlations {
                    let rows = tables.entry("corr").or_default();
                    for (d, v) in correlation_profile(&c.as_pdm()).into_iter().enumerate() {
                        rows.push(Row { t, key: "C", index: d as i64 + 1, value: v });
                    }
                }
                let rows = tables.entry("sent").or_default();
                for &ell in ells {
                    let s = ff_entropy(&correlation_matrix(&phi, ell)?)?;
                    rows.push(Row { t, key: "S", index: ell as i64, value: s });
                }
            }
        }
        method => {
            let basis = Arc::new(match cfg.run.initial_state {
                InitialState::DensityWave => build_basis(p.sites, p.particles)?,
                InitialState::MixedFilling => build_full_fock(p.sites)?,
            });
            let psi0: ManyBodyVector = match cfg.run.initial_state {
                InitialState::DensityWave => prepare_density_wave(basis.clone())?,
                InitialState::MixedFilling => prepare_mixed_filling(p.sites, sample.seed)?,
            };
            let bytes = basis.len() as f64 * (cfg.run.krylov_dim as f64 + 4.0) * 16.0;
            if bytes > MEMORY_LIMIT {
                return Err(Error::Capacity(format!(
                    "Krylov workspace of {:.1} GB exceeds the {:.0} GB limit",
                    bytes / 1e9,
                    MEMORY_LIMIT / 1e9
                )));
            }
            let h = build_hamiltonian(&p, &basis)?;
            let spec = RecordSpec {
                density: obs.density,
                momentum: obs.momentum,
                correlations: obs.correlations,
                entropy_ells: ells.to_vec(),
                keep_states: false,
                times,
            };
            let rec = if method == Method::Spectral {
                if h.dim() > MAX_DENSE_DIM {
                    return Err(Error::Capacity(format!(
                        "spectral propagation of dimension {} exceeds {MAX_DENSE_DIM}",
                        h.dim()
                    )));
                }
                evolve_trajectory_spectral(&SpectralPropagator::new(&h)?, &psi0, &spec)?
            } else {
                let kc = KrylovConfig::new(cfg.run.dt, cfg.run.krylov_dim.min(h.dim()));
                evolve_trajectory(&h, &psi0, &kc, &spec)?
            };
            trajectory_tables(&rec, &labels, &mut tables);
        }
    }
    Ok(tables)
}

fn trajectory_tables(rec: &TrajectoryRecord, labels: &[i64], tables: &mut SampleTables) {
    for s in &rec.snapshots {
        let t = s.t;
        if let Some(v) = &s.density {
            let rows = tables.entry("nj").or_default();
            rows.extend(v.iter().enumerate().map(|(j, &value)| Row { t, key: "n_j", index: j as i64, value }));
        }
        if let Some(v) = &s.momentum {
            let rows = tables.entry("nk").or_default();
            rows.extend(v.iter().zip(labels).map(|(&value, &m)| Row { t, key: "n_k", index: m, value }));
        }
        if let Some(v) = &s.correlations {
            let rows = tables.entry("corr").or_default();
            rows.extend(v.iter().enumerate().map(|(d, &value)| Row { t, key: "C", index: d as i64 + 1, value }));
        }
        let rows = tables.entry("sent").or_default();
        rows.extend(s.entropy.iter().map(|&(ell, value)| Row { t, key: "S", index: ell as i64, value }));
    }
}

fn sample_dir(out: &Path, index: usize) -> PathBuf {
    out.join("samples").join(format!("sample_{index:04}"))
}

fn rel(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).display().to_string()
}

/// Write per-sample tables and their ensemble averages.
fn write_ensemble(out: &Path, samples: &[SampleInfo], results: &[SampleTables]) -> Result<Vec<String>> {
    let mut files = Vec::new();
    let stems: Vec<&'static str> = results.first().map(|r| r.keys().copied().collect()).unwrap_or_default();
    for stem in stems {
        let mut paths = Vec::new();
        let mut tables = Vec::new();
        for (s, r) in samples.iter().zip(results) {
            let path = sample_dir(out, s.index).join(format!("{stem}.csv"));
            let rows = &r[stem];
            write_sample_csv(&path, s.index, rows)?;
            files.push(rel(out, &path));
            tables.push(rows.iter().map(|r| (r.t, r.key.to_string(), r.index, r.value)).collect::<Vec<_>>());
            paths.push(path);
        }
        let avg = average_tables(&tables, &paths)?;
        let path = out.join(format!("{stem}.csv"));
        write_averaged_csv(&path, &avg)?;
        files.push(rel(out, &path));
    }
    Ok(files)
}

fn run_evolve(
    cfg: &ExperimentConfig,
    out: &Path,
    threads: usize,
    notes: &mut BTreeMap<String, serde_json::Value>,
) -> Result<Vec<String>> {
    let samples = cfg.samples();
    let ells = entropy_ells(cfg);
    for &ell in &ells {
        if ell == 0 || ell >= cfg.model.sites {
            return Err(Error::Config(format!("entropy ell {ell} outside 1..{}", cfg.model.sites)));
        }
    }
    let method = resolve_method(cfg)?;
    notes.insert("method".into(), serde_json::to_value(method)?);
    let results = parallel_map(&samples, threads, |s| simulate_sample(cfg, s, &ells))?;
    write_ensemble(out, &samples, &results)
}

/// `(f_Im, E_top, E_tilde)` of one disorder sample.
pub fn spectrum_sample(p: &ModelParams, threshold: f64) -> Result<(f64, f64, f64)> {
    let basis = build_basis(p.sites, p.particles)?;
    let h = build_hamiltonian(p, &basis)?;
    let spec = full_spectrum(&h)?;
    let stats = imag_gap_stats(&spec)?;
    Ok((imag_fraction(&spec, threshold), stats.top, stats.tilde))
}

fn run_spectrum(cfg: &ExperimentConfig, out: &Path, threads: usize) -> Result<Vec<String>> {
    let sc = cfg
        .spectrum
        .as_ref()
        .ok_or_else(|| Error::Config("spectrum command needs a \"spectrum\" section".into()))?;
    if sc.w_values.is_empty() || sc.l_values.is_empty() {
        return Err(Error::Config("spectrum sweep needs W_values and L_values".into()));
    }
    let samples = cfg.samples();
    let mut jobs = Vec::new();
    for &l in &sc.l_values {
        if crate::basis::binomial(l, l / 2) > MAX_DENSE_DIM {
            return Err(Error::Capacity(format!(
                "L = {l} half filling exceeds the dense limit {MAX_DENSE_DIM}"
            )));
        }
        for &w in &sc.w_values {
            for s in &samples {
                jobs.push((l, w, *s));
            }
        }
    }
    let results = parallel_map(&jobs, threads, |&(l, w, s)| {
        let mut p = cfg.model.clone();
        p.sites = l;
        p.particles = l / 2;
        p.disorder = w;
        p.theta = s.theta;
        spectrum_sample(&p, sc.threshold)
    })?;
    let mut per_sample = Vec::new();
    let mut summary = Vec::new();
    let ns = samples.len();
    for (chunk_jobs, chunk) in jobs.chunks(ns).zip(results.chunks(ns)) {
        let (l, w, _) = chunk_jobs[0];
        for (&(_, _, s), &(f, top, tilde)) in chunk_jobs.iter().zip(chunk) {
            per_sample.push(vec![
                fmt_f64(w),
                l.to_string(),
                s.index.to_string(),
                fmt_f64(s.theta),
                fmt_f64(f),
                fmt_f64(top),
                fmt_f64(tilde),
            ]);
        }
        let (fm, fe) = mean_stderr(&chunk.iter().map(|r| r.0).collect::<Vec<_>>());
        let (tm, _) = mean_stderr(&chunk.iter().map(|r| r.1).collect::<Vec<_>>());
        let (em, _) = mean_stderr(&chunk.iter().map(|r| r.2).collect::<Vec<_>>());
        summary.push(vec![fmt_f64(w), l.to_string(), fmt_f64(fm), fmt_f64(fe), fmt_f64(tm), fmt_f64(em)]);
    }
    let a = out.join("fim.csv");
    write_table(&a, &["W", "L", "f_im_mean", "f_im_err", "E_top_mean", "E_tilde_mean"], &summary)?;
    let b = out.join("spectrum_samples.csv");
    write_table(&b, &["W", "L", "sample", "theta", "f_im", "E_top", "E_tilde"], &per_sample)?;
    Ok(vec![rel(out, &a), rel(out, &b)])
}

fn run_scan(
    cfg: &ExperimentConfig,
    out: &Path,
    threads: usize,
    notes: &mut BTreeMap<String, serde_json::Value>,
) -> Result<Vec<String>> {
    let l = cfg.model.sites;
    let sc = cfg.scan.clone().unwrap_or(ScanConfig {
        ells: None,
        exclude_edges: true,
    });
    let ells = sc.ells.clone().unwrap_or_else(|| (1..l).collect());
    if ells.iter().any(|&e| e == 0 || e >= l) {
        return Err(Error::Config(format!("scan ells must lie in 1..{l}")));
    }
    let mut local = cfg.clone();
    local.observables = ObservableConfig {
        density: false,
        momentum: false,
        correlations: false,
        entropy_ells: Some(ells.clone()),
    };
    let samples = cfg.samples();
    notes.insert("method".into(), serde_json::to_value(resolve_method(&local)?)?);
    let results = parallel_map(&samples, threads, |s| simulate_sample(&local, s, &ells))?;
    let mut files = write_ensemble(out, &samples, &results)?;

    let times = cfg.run.grid.times()?;
    let mut rows = Vec::new();
    let mut fit_points = Vec::new();
    for &ell in &ells {
        let mut s_inf = Vec::new();
        let mut s_max = Vec::new();
        for r in &results {
            let vals: Vec<f64> = r["sent"].iter().filter(|x| x.index == ell as i64).map(|x| x.value).collect();
            let c = EntanglementCurve::from_series(ell, times.clone(), vals)?;
            s_inf.push(c.s_inf);
            s_max.push(c.s_max);
        }
        let (im, ie) = mean_stderr(&s_inf);
        let (mm, me) = mean_stderr(&s_max);
        fit_points.push((ell, im));
        rows.push(vec![
            ell.to_string(),
            fmt_f64(ell as f64 / l as f64),
            fmt_f64(chord_length(ell, l)?),
            fmt_f64(im),
            fmt_f64(ie),
            fmt_f64(mm),
            fmt_f64(me),
            samples.len().to_string(),
        ]);
    }
    let path = out.join("scan.csv");
    write_table(
        &path,
        &["ell", "ell_over_L", "chord", "S_inf_mean", "S_inf_err", "S_max_mean", "S_max_err", "n"],
        &rows,
    )?;
    files.push(rel(out, &path));
    match fit_ceff(&fit_points, l, CeffOptions { exclude_edges: sc.exclude_edges }) {
        Ok(fit) => {
            let path = out.join("ceff.csv");
            write_ceff(&path, &fit)?;
            files.push(rel(out, &path));
        }
        Err(e) => {
            notes.insert("ceff".into(), serde_json::Value::String(format!("not fitted: {e}")));
        }
    }
    Ok(files)
}

fn write_ceff(path: &Path, fit: &crate::fitting::FitResult) -> Result<()> {
    write_table(
        path,
        &["c_eff", "c_eff_err", "const", "const_err", "residual_rms", "points_used", "points_excluded"],
        &[vec![
            fmt_f64(fit.params[0]),
            fmt_f64(fit.stderr[0]),
            fmt_f64(fit.params[1]),
            fmt_f64(fit.stderr[1]),
            fmt_f64(fit.residual_rms),
            fit.points_used.to_string(),
            fit.points_excluded.to_string(),
        ]],
    )
}

/// Unwrapped packet centre and variance at each time, starting from a
/// particle on site `j0`.
pub fn track_wavepacket(p: &ModelParams, j0: usize, times: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    if j0 >= p.sites {
        return Err(Error::Config(format!("j0 = {j0} outside 0..{}", p.sites)));
    }
    let prop = OrbitalPropagator::new(&single_particle_hamiltonian(p))?;
    let mut psi0 = ndarray::Array1::zeros(p.sites);
    psi0[j0] = crate::C64::new(1.0, 0.0);
    let mut xs = Vec::with_capacity(times.len());
    let mut vars = Vec::with_capacity(times.len());
    for &t in times {
        let w = wavepacket_observables(prop.evolve_vector(psi0.view(), t)?.view());
        xs.push(w.mean_x);
        vars.push(w.variance);
    }
    let xs = unwrap_positions(&xs, p.sites);
    Ok(times.iter().zip(xs).zip(vars).map(|((&t, x), v)| (t, x, v)).collect())
}

/// Slope of `x(t)` over the second half of the track.
pub fn sliding_speed(track: &[(f64, f64, f64)]) -> Result<f64> {
    let tail = &track[track.len() / 2..];
    if tail.len() < 2 {
        return Err(Error::Domain("need at least two late-time points".into()));
    }
    let n = tail.len() as f64;
    let mt = tail.iter().map(|r| r.0).sum::<f64>() / n;
    let mx = tail.iter().map(|r| r.1).sum::<f64>() / n;
    let stt: f64 = tail.iter().map(|r| (r.0 - mt).powi(2)).sum();
    let stx: f64 = tail.iter().map(|r| (r.0 - mt) * (r.1 - mx)).sum();
    Ok(stx / stt)
}

fn run_single_particle(cfg: &ExperimentConfig, out: &Path, threads: usize) -> Result<Vec<String>> {
    let sp = cfg
        .single_particle
        .as_ref()
        .ok_or_else(|| Error::Config("single-particle command needs a \"single_particle\" section".into()))?;
    let l = cfg.model.sites;
    let j0 = sp.j0.unwrap_or(l / 2);
    if sp.points < 2 || !(sp.t_max > 0.0) {
        return Err(Error::Config("single_particle needs t_max > 0 and points >= 2".into()));
    }
    let times: Vec<f64> = linear_time_grid(sp.t_max, sp.points);
    let samples = cfg.samples();
    let jobs: Vec<(f64, SampleInfo)> = sp
        .w_values
        .iter()
        .flat_map(|&w| samples.iter().map(move |s| (w, *s)))
        .collect();
    let tracks = parallel_map(&jobs, threads, |&(w, s)| {
        let mut p = cfg.model.clone();
        p.disorder = w;
        p.theta = s.theta;
        track_wavepacket(&p, j0, &times)
    })?;
    let mut track_rows = Vec::new();
    let mut speed_rows = Vec::new();
    let wc = 2.0 * cfg.model.g.exp() * cfg.model.gamma0;
    for (chunk_jobs, chunk) in jobs.chunks(samples.len()).zip(tracks.chunks(samples.len())) {
        let w = chunk_jobs[0].0;
        let mut speeds = Vec::new();
        for (&(_, s), track) in chunk_jobs.iter().zip(chunk) {
            for &(t, x, v) in track {
                track_rows.push(vec![fmt_f64(w), s.index.to_string(), fmt_f64(t), fmt_f64(x), fmt_f64(v)]);
            }
            speeds.push(-sliding_speed(track)?);
        }
        let (vm, ve) = mean_stderr(&speeds);
        speed_rows.push(vec![
            fmt_f64(w),
            fmt_f64(w / wc),
            fmt_f64(vm),
            fmt_f64(ve),
            fmt_f64(perturbative_speed(cfg.model.g, w / cfg.model.gamma0) * cfg.model.gamma0),
            speeds.len().to_string(),
        ]);
    }
    let a = out.join("wavepacket.csv");
    write_table(&a, &["W", "sample", "t", "mean_x", "variance"], &track_rows)?;
    let b = out.join("speeds.csv");
    write_table(&b, &["W", "W_over_Wc", "v_mean", "v_err", "v_pert", "n"], &speed_rows)?;
    Ok(vec![rel(out, &a), rel(out, &b)])
}

fn run_qpp(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let q = cfg
        .qpp
        .as_ref()
        .ok_or_else(|| Error::Config("qpp command needs a \"qpp\" section".into()))?;
    let l = cfg.model.sites;
    let g = cfg.model.g;
    let times = cfg.run.grid.times()?;
    let mut rows = Vec::new();
    for &t in &times {
        for &ell in &q.ells {
            let s = qpp_entropy(l, ell, g, t, q.time_dependent_weights, q.factor2).map_err(config_err)?;
            rows.push(vec![fmt_f64(t), ell.to_string(), fmt_f64(s)]);
        }
    }
    let a = out.join("qpp.csv");
    write_table(&a, &["t", "ell", "S"], &rows)?;
    let mut gge = Vec::new();
    let labels = momentum_labels(l);
    for &t in &times {
        for (k, m) in momentum_grid(l).into_iter().zip(&labels) {
            gge.push(vec![
                fmt_f64(t),
                m.to_string(),
                fmt_f64(k),
                fmt_f64(gge_nk(k, g, t, 0.0, q.factor2)),
            ]);
        }
    }
    let b = out.join("gge.csv");
    write_table(&b, &["t", "index", "k", "n_k"], &gge)?;
    Ok(vec![rel(out, &a), rel(out, &b)])
}

fn run_fit(cfg: &ExperimentConfig, out: &Path, notes: &mut BTreeMap<String, serde_json::Value>) -> Result<Vec<String>> {
    let f = cfg
        .fit
        .as_ref()
        .ok_or_else(|| Error::Config("fit command needs a \"fit\" section".into()))?;
    let l = cfg.model.sites;
    match f.kind {
        FitKind::Ceff => {
            let mut r = csv::Reader::from_path(&f.input).map_err(csv_err)?;
            let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
            let col = |name: &str| {
                header
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::Schema(format!("{}: missing column {name}", f.input.display())))
            };
            let (ce, cs) = (col("ell")?, col("S_inf_mean")?);
            let mut pts = Vec::new();
            for rec in r.records() {
                let rec = rec.map_err(csv_err)?;
                let ell: usize = rec[ce].parse().map_err(|e| Error::Schema(format!("ell: {e}")))?;
                let s: f64 = rec[cs].parse().map_err(|e| Error::Schema(format!("S_inf_mean: {e}")))?;
                pts.push((ell, s));
            }
            let fit = fit_ceff(&pts, l, CeffOptions { exclude_edges: f.exclude_edges })?;
            let path = out.join("ceff.csv");
            write_ceff(&path, &fit)?;
            Ok(vec![rel(out, &path)])
        }
        FitKind::Relaxation => {
            let rows = read_averaged_csv(&f.input)?;
            let grid = momentum_grid(l);
            let labels = momentum_labels(l);
            let mut table = Vec::new();
            let mut skipped = Vec::new();
            for (k, m) in grid.iter().zip(&labels) {
                let series: Vec<(f64, f64)> = rows
                    .iter()
                    .filter(|r| r.key == "n_k" && r.index == *m)
                    .map(|r| (r.t, r.mean))
                    .collect();
                if series.is_empty() {
                    return Err(Error::Schema(format!("{}: no n_k rows for index {m}", f.input.display())));
                }
                match fit_nk_relaxation(&series, *k, cfg.model.g) {
                    Ok(fit) => table.push(vec![
                        m.to_string(),
                        fmt_f64(*k),
                        fmt_f64(fit.params[0]),
                        fmt_f64(fit.params[1]),
                        fmt_f64(fit.stderr[1]),
                        fmt_f64(fit.residual_rms),
                        fit.points_used.to_string(),
                    ]),
                    Err(_) => skipped.push(*m),
                }
            }
            notes.insert("skipped_indices".into(), serde_json::to_value(skipped)?);
            let path = out.join("relaxation.csv");
            write_table(&path, &["index", "k", "r", "ratio", "ratio_err", "residual_rms", "points"], &table)?;
            Ok(vec![rel(out, &path)])
        }
    }
}
