//! Recovery and rate diagnostics: the R criterion, log-log power-law fits,
//! population eigengaps, weighted L1 spectral error and the main term of the
//! feasible-filter error.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::eigenproj::{eigengap, hermitian_eig, hermitian_op_norm};
use crate::error::domain;
use crate::filterbank::{apply_filter, feasible_bank, oracle_bank, FeasibleConfig, FilterBank};
use crate::fracsim::{analytic_spectrum, derive_seed, simulate_panel, ModelSpec, SimOptions};
use crate::spectral::{FrequencyGrid, GridKind, KernelSpec, SpectralField};
use crate::theory::{delta_rate, truncation_m};
use crate::{Error, Result};

/// `sum (chi_hat - chi)^2 / sum chi^2`.
pub fn r_criterion(chi_hat: &DMatrix<f64>, chi: &DMatrix<f64>) -> Result<f64> {
    if chi_hat.shape() != chi.shape() {
        return Err(domain(format!(
            "shape mismatch: {:?} vs {:?}",
            chi_hat.shape(),
            chi.shape()
        )));
    }
    let den = chi.norm_squared();
    if !(den > 0.0) {
        return Err(domain("R criterion undefined for a zero common component"));
    }
    Ok((chi_hat - chi).norm_squared() / den)
}

/// OLS fit of `ln y = intercept + slope * ln x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
    /// Points in range discarded because `y <= 0`.
    pub dropped: usize,
}

pub const MIN_FIT_POINTS: usize = 5;

/// Log-log OLS over all points with positive coordinates.
pub fn loglog_fit(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let dropped = points.iter().filter(|p| !(p.1 > 0.0)).count();
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(domain(format!(
            "slope fit needs at least {MIN_FIT_POINTS} positive points, got {}",
            pts.len()
        )));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(domain("slope fit needs at least two distinct x values"));
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { (sxy * sxy / (sxx * syy)).min(1.0) } else { 1.0 };
    let xs = points.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0).map(|p| p.0);
    Ok(SlopeFit {
        slope,
        intercept: my - slope * mx,
        r2,
        x_min: xs.clone().fold(f64::INFINITY, f64::min),
        x_max: xs.fold(0.0, f64::max),
        points: pts.len(),
        dropped,
    })
}

/// Tail decay rate of a coefficient-norm sequence over `h >= h_min`.
pub fn decay_slope(norms: &[(usize, f64)], h_min: usize) -> Result<SlopeFit> {
    decay_slope_range(norms, h_min, usize::MAX)
}

pub fn decay_slope_range(norms: &[(usize, f64)], h_min: usize, h_max: usize) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64)> = norms
        .iter()
        .filter(|(h, _)| (h_min..=h_max).contains(h))
        .map(|&(h, v)| (h as f64, v))
        .collect();
    loglog_fit(&pts)
}

/// `(theta, lambda_q - lambda_{q+1})` of the population spectrum.
pub fn eigengap_curve(spec: &ModelSpec, q: usize, thetas: &[f64]) -> Result<Vec<(f64, f64)>> {
    if thetas.iter().any(|&t| t == 0.0) {
        return Err(domain("eigengap curve must avoid theta = 0"));
    }
    thetas
        .par_iter()
        .map(|&theta| {
            let e = hermitian_eig(&analytic_spectrum(spec, theta)?)?;
            Ok((theta, eigengap(&e, q)?))
        })
        .collect()
}

/// Default eigengap fitting window: 50 log-spaced points on `[1e-3, 1e-1]`.
pub fn default_gap_thetas() -> Vec<f64> {
    FrequencyGrid::log_spaced(1e-3, 1e-1, 50)
        .expect("valid log grid")
        .points()
        .to_vec()
}

/// Rectangle-rule weights of a grid on `[-pi, pi]`: `2 pi / N` on uniform
/// grids, half the distance between neighbours otherwise.
fn quadrature_weights(grid: &FrequencyGrid) -> Vec<f64> {
    let pts = grid.points();
    match grid.kind() {
        GridKind::Uniform { size, .. } => vec![2.0 * PI / size as f64; size],
        _ => (0..pts.len())
            .map(|k| {
                let lo = if k == 0 { pts[0] } else { 0.5 * (pts[k - 1] + pts[k]) };
                let hi = if k + 1 == pts.len() { pts[k] } else { 0.5 * (pts[k] + pts[k + 1]) };
                hi - lo
            })
            .collect(),
    }
}

/// `int |theta|^{2 d_tilde} ||est(theta) - truth(theta)||_op dtheta` by the
/// rectangle rule on the shared grid.
pub fn l1_spectral_error(est: &SpectralField, truth: &SpectralField, d_tilde: f64) -> Result<f64> {
    if est.grid() != truth.grid() {
        return Err(Error::Input("spectral fields live on different grids".into()));
    }
    if est.n() != truth.n() {
        return Err(Error::Input("spectral fields have different dimensions".into()));
    }
    let w = quadrature_weights(est.grid());
    let terms = est
        .grid()
        .points()
        .par_iter()
        .enumerate()
        .map(|(k, &theta)| {
            let diff = est.at(k) - truth.at(k);
            Ok(w[k] * theta.abs().powf(2.0 * d_tilde) * hermitian_op_norm(&diff)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(terms.iter().sum())
}

/// `|sum_h (K_hat_h - K_h) X_{t-h}|` for row `i` at 1-based `t`.
pub fn main_term_value(
    k_hat: &FilterBank,
    k: &FilterBank,
    panel: &crate::fracsim::TimeSeriesPanel,
    i: usize,
    t: usize,
) -> Result<f64> {
    if k_hat.max_lag() != k.max_lag() {
        return Err(domain("filter banks must share the truncation lag"));
    }
    let pos = |b: &FilterBank| {
        b.rows()
            .iter()
            .position(|&r| r == i)
            .ok_or_else(|| domain(format!("row {i} is not held by the filter bank")))
    };
    let (a, b) = (pos(k_hat)?, pos(k)?);
    Ok((apply_filter(k_hat, panel, t)?[a] - apply_filter(k, panel, t)?[b]).abs())
}

/// Root mean square `sqrt(mean Z^2)` of a replication sample.
pub fn rms(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(domain("empty sample"));
    }
    Ok((values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt())
}

/// Settings of the main-term experiment; `i` is 0-based, `t` 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MainTermConfig {
    pub i: usize,
    pub t: usize,
    pub b: f64,
    pub beta: f64,
    pub c_m: f64,
    pub reps: usize,
    pub kernel: KernelSpec,
    /// Population bank quadrature size.
    pub oracle_grid: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MainTermPoint {
    pub t_len: usize,
    pub max_lag: usize,
    pub delta: f64,
    /// `sqrt(E Z^2)` over replications.
    pub rms: f64,
    /// `M delta sqrt(n)`.
    pub m_delta_sqrt_n: f64,
    /// `delta sqrt(n)`.
    pub delta_sqrt_n: f64,
    pub failures: usize,
}

/// `sqrt(E Z^2_{i,t})` at one sample size with `B_T = T^-b` and the
/// truncation rule `M = floor((C_M / (delta sqrt n))^beta)`.
pub fn main_term_moment(spec: &ModelSpec, cfg: &MainTermConfig, t_len: usize, seed: u64) -> Result<MainTermPoint> {
    if cfg.reps < 10 {
        return Err(domain("main-term moment needs at least 10 replications"));
    }
    let n = spec.n();
    let spread = spec.max_memory() - spec.min_memory();
    let bandwidth = (t_len as f64).powf(-cfg.b);
    let delta = delta_rate(t_len, bandwidth, spread)?;
    let m = truncation_m(delta, n, cfg.beta, cfg.c_m)?;
    if cfg.t < 1 || cfg.t > t_len {
        return Err(domain(format!("t = {} outside 1..={t_len}", cfg.t)));
    }
    let oracle = oracle_bank(spec, m, cfg.oracle_grid.max(8 * m), None)?;
    let fcfg = FeasibleConfig {
        q: spec.q(),
        bandwidth,
        kernel: cfg.kernel,
        max_lag: m,
        grid_size: crate::filterbank::estimation_grid_size(t_len, m),
    };
    let zs: Vec<Option<f64>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let s = derive_seed(&[seed, n as u64, t_len as u64, r as u64]);
            let panel = simulate_panel(spec, t_len, s, SimOptions::default()).ok()?;
            let k_hat = feasible_bank(&panel, &fcfg).ok()?;
            main_term_value(&k_hat, &oracle, &panel, cfg.i, cfg.t).ok()
        })
        .collect();
    let ok: Vec<f64> = zs.iter().flatten().copied().collect();
    let sn = (n as f64).sqrt();
    Ok(MainTermPoint {
        t_len,
        max_lag: m,
        delta,
        rms: rms(&ok)?,
        m_delta_sqrt_n: m as f64 * delta * sn,
        delta_sqrt_n: delta * sn,
        failures: zs.len() - ok.len(),
    })
}

/// `x,y` rows, with fit columns when a fit is supplied.
pub fn write_xy_csv<W: Write>(points: &[(f64, f64)], fit: Option<&SlopeFit>, mut out: W) -> Result<()> {
    match fit {
        Some(f) => {
            writeln!(out, "x,y,fit_slope,fit_intercept")?;
            for (x, y) in points {
                writeln!(out, "{x:.17e},{y:.17e},{:.17e},{:.17e}", f.slope, f.intercept)?;
            }
        }
        None => {
            writeln!(out, "x,y")?;
            for (x, y) in points {
                writeln!(out, "{x:.17e},{y:.17e}")?;
            }
        }
    }
    Ok(())
}
