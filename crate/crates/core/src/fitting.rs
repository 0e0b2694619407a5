//! Logarithmic entanglement scaling and logistic relaxation fits.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::model::dispersion;
use crate::{Error, Result};

/// `2 L sin(pi ell / L)`.
pub fn chord_length(ell: usize, sites: usize) -> Result<f64> {
    if ell == 0 || ell >= sites {
        return Err(Error::Domain(format!("ell = {ell} outside 1..{sites}")));
    }
    Ok(2.0 * sites as f64 * (PI * ell as f64 / sites as f64).sin())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    /// Standard errors from the covariance diagonal.
    pub stderr: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub residual_rms: f64,
    pub points_used: usize,
    /// Points present in the input but excluded by the fit options.
    pub points_excluded: usize,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.params[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CeffOptions {
    /// Drop `ell = 1` and `ell = L - 1`.
    pub exclude_edges: bool,
}

impl Default for CeffOptions {
    fn default() -> Self {
        Self { exclude_edges: true }
    }
}

/// Least squares of `S = c_eff * (1/3) ln d(ell) + const`. Parameters are
/// named `c_eff` and `const`.
pub fn fit_ceff(points: &[(usize, f64)], sites: usize, opts: CeffOptions) -> Result<FitResult> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ells = Vec::new();
    let mut excluded = 0;
    for &(ell, s) in points {
        if opts.exclude_edges && (ell == 1 || ell + 1 == sites) {
            excluded += 1;
            continue;
        }
        xs.push(chord_length(ell, sites)?.ln() / 3.0);
        ys.push(s);
        ells.push(ell);
    }
    ells.sort_unstable();
    ells.dedup();
    if ells.len() < 3 {
        return Err(Error::Domain(format!("need at least 3 distinct ell, got {}", ells.len())));
    }
    linear_fit(&xs, &ys, excluded)
}

fn linear_fit(xs: &[f64], ys: &[f64], excluded: usize) -> Result<FitResult> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 1e-14 * (1.0 + mx * mx) * n) {
        return Err(Error::Numerical("degenerate design matrix: all chord lengths coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - icept).powi(2)).sum();
    let sigma2 = if xs.len() > 2 { rss / (n - 2.0) } else { 0.0 };
    let var_slope = sigma2 / sxx;
    let var_icept = sigma2 * (1.0 / n + mx * mx / sxx);
    let cov = -mx * sigma2 / sxx;
    Ok(FitResult {
        names: vec!["c_eff".into(), "const".into()],
        params: vec![slope, icept],
        stderr: vec![var_slope.sqrt(), var_icept.sqrt()],
        covariance: vec![vec![var_slope, cov], vec![cov, var_icept]],
        residual_rms: (rss / n).sqrt(),
        points_used: xs.len(),
        points_excluded: excluded,
    })
}

/// Minimize a unimodal function on `[a, b]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol * (1.0 + c.abs() + d.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

fn logistic(r: f64, t: f64) -> f64 {
    let x = -r * t;
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// One-parameter fit of `n(t) = 1 / (1 + e^{-r t})`. Parameters are `r` and
/// `ratio = r / (2 Im eps_k)`, the rate in units of the bare amplification
/// rate (signed so that both decaying and growing modes give the same
/// ratio).
pub fn fit_nk_relaxation(series: &[(f64, f64)], k: f64, g: f64) -> Result<FitResult> {
    let informative = series.iter().filter(|(_, n)| (0.01..=0.99).contains(n)).count();
    if informative == 0 {
        return Err(Error::Domain("series is saturated everywhere; no rate information".into()));
    }
    let im = dispersion(k, g, 1.0).im;
    if im.abs() < 1e-14 {
        return Err(Error::Domain(format!("Im eps vanishes at k = {k}")));
    }
    let cost = |r: f64| -> f64 { series.iter().map(|&(t, n)| (n - logistic(r, t)).powi(2)).sum() };
    let mut grid: Vec<f64> = (0..=400).map(|i| 10f64.powf(-4.0 + 7.0 * i as f64 / 400.0)).collect();
    let neg: Vec<f64> = grid.iter().map(|r| -r).collect();
    grid.extend(neg);
    grid.push(0.0);
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    let best = (0..grid.len())
        .min_by(|&i, &j| cost(grid[i]).partial_cmp(&cost(grid[j])).expect("finite cost"))
        .expect("non-empty grid");
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let r = golden_section(cost, lo, hi, 1e-13);
    let rss = cost(r);
    let n = series.len() as f64;
    // curvature of the cost gives a Gauss-Newton standard error
    let jac2: f64 = series
        .iter()
        .map(|&(t, _)| {
            let p = logistic(r, t);
            (t * p * (1.0 - p)).powi(2)
        })
        .sum();
    let sigma2 = if series.len() > 1 { rss / (n - 1.0) } else { 0.0 };
    let var_r = if jac2 > 0.0 { sigma2 / jac2 } else { f64::INFINITY };
    let scale = 1.0 / (2.0 * im);
    Ok(FitResult {
        names: vec!["r".into(), "ratio".into()],
        params: vec![r, r * scale],
        stderr: vec![var_r.sqrt(), var_r.sqrt() * scale.abs()],
        covariance: vec![vec![var_r, var_r * scale], vec![var_r * scale, var_r * scale * scale]],
        residual_rms: (rss / n).sqrt(),
        points_used: series.len(),
        points_excluded: 0,
    })
}
