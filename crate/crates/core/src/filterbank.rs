//! Lag/lead coefficients of the common-component filter and their use.
//!
//! The coefficient of lag `h` is `K_h = (1/2pi) int K(theta) e^{-i h theta} dtheta`,
//! approximated by the rectangle rule on a uniform grid (one FFT per matrix
//! entry), so that `sum_h K_h e^{i h theta}` reconstructs `K(theta)`.

use std::io::Write;
use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::eigenproj::ProjectionField;
use crate::error::{config, domain};
use crate::fracsim::{analytic_spectrum, ModelSpec, TimeSeriesPanel};
use crate::spectral::{smoothed_spectrum, FrequencyGrid, GridKind, KernelSpec};
use crate::{Error, Result, C64};

/// Relative imaginary residue tolerated before coefficients are declared non-real.
pub const REALITY_TOL: f64 = 1e-7;

/// Real filter coefficients `K_h`, `h = -M..=M`, for a subset of target rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    max_lag: usize,
    grid_size: usize,
    n: usize,
    rows: Vec<usize>,
    /// `coeffs[h + M]` is `rows.len() x n`.
    coeffs: Vec<DMatrix<f64>>,
    imag_ratio: f64,
}

impl FilterBank {
    /// Bank covering every row, from explicit coefficients `K_{-M}..=K_M`.
    pub fn from_coefficients(coeffs: Vec<DMatrix<f64>>) -> Result<Self> {
        if coeffs.len() % 2 == 0 {
            return Err(domain("need an odd number of coefficients (lags -M..=M)"));
        }
        let n = coeffs[0].ncols();
        let rows = coeffs[0].nrows();
        if coeffs.iter().any(|k| k.shape() != (rows, n)) {
            return Err(domain("coefficient matrices must share one shape"));
        }
        Ok(Self {
            max_lag: coeffs.len() / 2,
            grid_size: 0,
            n,
            rows: (0..rows).collect(),
            coeffs,
            imag_ratio: 0.0,
        })
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Target rows held by the bank, in storage order.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn is_full(&self) -> bool {
        self.rows.len() == self.n && self.rows.iter().enumerate().all(|(a, &b)| a == b)
    }

    /// `K_h` for `-M <= h <= M`.
    pub fn coefficient(&self, h: i64) -> &DMatrix<f64> {
        &self.coeffs[(h + self.max_lag as i64) as usize]
    }

    /// Largest `|Im K_h|` relative to the largest `|Re K_h|` before the
    /// imaginary part was discarded.
    pub fn imag_ratio(&self) -> f64 {
        self.imag_ratio
    }

    /// `sum_{|h| <= M} K_h e^{i h theta}`.
    pub fn transfer(&self, theta: f64) -> DMatrix<C64> {
        let m = self.max_lag as i64;
        let mut out = DMatrix::zeros(self.rows.len(), self.n);
        for h in -m..=m {
            let e = C64::from_polar(1.0, h as f64 * theta);
            out += self.coefficient(h).map(|v| e * v);
        }
        out
    }

    /// Sum of `||K_h||_F^2` over all stored lags.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|k| k.norm_squared()).sum()
    }

    /// Coefficients restricted to `|h| <= m`.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m > self.max_lag {
            return Err(domain(format!("cannot extend a bank of lag {} to {m}", self.max_lag)));
        }
        let off = self.max_lag - m;
        Ok(Self {
            max_lag: m,
            coeffs: self.coeffs[off..off + 2 * m + 1].to_vec(),
            ..self.clone()
        })
    }

    /// Rows `(h, i, j, value)` with 0-based `i`, `j`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "h,i,j,value")?;
        let m = self.max_lag as i64;
        for h in -m..=m {
            let k = self.coefficient(h);
            for (r, &i) in self.rows.iter().enumerate() {
                for j in 0..self.n {
                    writeln!(out, "{h},{i},{j},{:.17e}", k[(r, j)])?;
                }
            }
        }
        Ok(())
    }
}

/// Rectangle-rule Fourier coefficients of every row of the projection field.
pub fn fourier_coefficients(field: &ProjectionField, max_lag: usize) -> Result<FilterBank> {
    let rows: Vec<usize> = (0..field.n()).collect();
    fourier_coefficients_rows(field, &rows, max_lag)
}

/// Fourier coefficients `K_h = (2 pi)^-1 int K_i(theta) e^{-i h theta}` of the
/// filter rows `K_i(theta) = sum_l conj(p_{l,i}) p_l`, i.e. row `i` of
/// `conj(P(theta))`, so that `sum_h K_h X_{t-h}` reproduces the projection.
pub fn fourier_coefficients_rows(
    field: &ProjectionField,
    rows: &[usize],
    max_lag: usize,
) -> Result<FilterBank> {
    let (size, offset) = match field.grid().kind() {
        GridKind::Uniform { size, offset } => (size, offset),
        other => {
            return Err(Error::UnsupportedGrid(format!(
                "Fourier inversion needs a uniform grid, got {other:?}"
            )))
        }
    };
    if size < 4 * max_lag {
        return Err(config(format!(
            "grid of {size} points cannot resolve lags up to {max_lag} (need N >= 4M)"
        )));
    }
    let n = field.n();
    if let Some(&bad) = rows.iter().find(|&&i| i >= n) {
        return Err(domain(format!("row {bad} out of range for n = {n}")));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(size);
    let m = max_lag as i64;
    // e^{-i h theta_k} = (-1)^h e^{-2 pi i h offset / N} e^{-2 pi i h k / N}
    let twiddle: Vec<C64> = (-m..=m)
        .map(|h| {
            let sign = if h.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            C64::from_polar(sign / size as f64, -2.0 * std::f64::consts::PI * h as f64 * offset / size as f64)
        })
        .collect();

    // per row: (2M+1) x n complex coefficients
    let per_row: Vec<DMatrix<C64>> = rows
        .par_iter()
        .map(|&i| {
            let mut buf = vec![C64::new(0.0, 0.0); size];
            let mut out = DMatrix::zeros(2 * max_lag + 1, n);
            for j in 0..n {
                for (k, slot) in buf.iter_mut().enumerate() {
                    // conj(P)_{ij} = P_{ji}
                    *slot = field.entry(k, j, i);
                }
                fft.process(&mut buf);
                for (a, h) in (-m..=m).enumerate() {
                    out[(a, j)] = buf[h.rem_euclid(size as i64) as usize] * twiddle[a];
                }
            }
            out
        })
        .collect();

    let (mut max_re, mut max_im) = (0.0f64, 0.0f64);
    for c in &per_row {
        for z in c.iter() {
            max_re = max_re.max(z.re.abs());
            max_im = max_im.max(z.im.abs());
        }
    }
    let imag_ratio = if max_re > 0.0 { max_im / max_re } else { max_im };
    if imag_ratio > REALITY_TOL {
        return Err(Error::Domain(format!(
            "filter coefficients are not real (relative imaginary part {imag_ratio:.3e}); \
             the projection field is not conjugate-symmetric"
        )));
    }
    let coeffs = (0..2 * max_lag + 1)
        .map(|a| DMatrix::from_fn(rows.len(), n, |r, j| per_row[r][(a, j)].re))
        .collect();
    Ok(FilterBank {
        max_lag,
        grid_size: size,
        n,
        rows: rows.to_vec(),
        coeffs,
        imag_ratio,
    })
}

/// Lags `h` used at (1-based) time `t`: `max(t - T, -M)..=min(t - 1, M)`.
pub fn lag_window(t: usize, t_len: usize, max_lag: usize) -> RangeInclusive<i64> {
    let (t, big_t, m) = (t as i64, t_len as i64, max_lag as i64);
    (t - big_t).max(-m)..=(t - 1).min(m)
}

/// `chi_hat_t = sum_h K_h X_{t-h}` over the in-sample lag window, 1-based `t`.
pub fn apply_filter(bank: &FilterBank, panel: &TimeSeriesPanel, t: usize) -> Result<DVector<f64>> {
    let t_len = panel.len();
    if t == 0 || t > t_len {
        return Err(domain(format!("time index {t} outside 1..={t_len}")));
    }
    if panel.n() != bank.n {
        return Err(Error::Input(format!("panel has {} series, filter expects {}", panel.n(), bank.n)));
    }
    let x = panel.observations();
    let mut out = DVector::zeros(bank.rows.len());
    for h in lag_window(t, t_len, bank.max_lag) {
        let s = t as i64 - h;
        debug_assert!((1..=t_len as i64).contains(&s));
        out.gemv(1.0, bank.coefficient(h), &x.column((s - 1) as usize), 1.0);
    }
    Ok(out)
}

/// Filtered values for every `t` in `times` (1-based), one column each.
pub fn apply_filter_range(
    bank: &FilterBank,
    panel: &TimeSeriesPanel,
    times: RangeInclusive<usize>,
) -> Result<DMatrix<f64>> {
    let ts: Vec<usize> = times.collect();
    let mut out = DMatrix::zeros(bank.rows.len(), ts.len());
    for (c, &t) in ts.iter().enumerate() {
        out.set_column(c, &apply_filter(bank, panel, t)?);
    }
    Ok(out)
}

/// Grid size for inverting population projections: `max(2^12, 8M)`.
pub fn oracle_grid_size(max_lag: usize) -> usize {
    (8 * max_lag).max(1 << 12)
}

/// Grid size for estimated fields: `2^ceil(log2(8T))`, at least `8M`.
pub fn estimation_grid_size(t_len: usize, max_lag: usize) -> usize {
    (8 * t_len).next_power_of_two().max(8 * max_lag)
}

/// Filter bank of the population (oracle) eigenprojection of `spec`.
pub fn oracle_bank(spec: &ModelSpec, max_lag: usize, grid_size: usize, rows: Option<&[usize]>) -> Result<FilterBank> {
    let grid = FrequencyGrid::midpoint(grid_size)?;
    let field = ProjectionField::from_fn(&grid, spec.q(), |theta| analytic_spectrum(spec, theta))?;
    match rows {
        Some(r) => fourier_coefficients_rows(&field, r, max_lag),
        None => fourier_coefficients(&field, max_lag),
    }
}

pub fn oracle_estimate(
    spec: &ModelSpec,
    panel: &TimeSeriesPanel,
    t: usize,
    max_lag: usize,
    grid_size: usize,
) -> Result<DVector<f64>> {
    let bank = oracle_bank(spec, max_lag, grid_size, None)?;
    apply_filter(&bank, panel, t)
}

/// Tuning of the feasible estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibleConfig {
    pub q: usize,
    pub bandwidth: f64,
    pub kernel: KernelSpec,
    pub max_lag: usize,
    pub grid_size: usize,
}

/// Smoothed periodogram, leading eigenprojection and Fourier inversion.
pub fn feasible_bank(panel: &TimeSeriesPanel, cfg: &FeasibleConfig) -> Result<FilterBank> {
    let grid = FrequencyGrid::midpoint(cfg.grid_size)?;
    let est = smoothed_spectrum(panel, &grid, cfg.bandwidth, cfg.kernel)?;
    let field = crate::eigenproj::projection_field(&est.field, cfg.q)?;
    fourier_coefficients(&field, cfg.max_lag)
}

pub fn feasible_estimate(panel: &TimeSeriesPanel, cfg: &FeasibleConfig, t: usize) -> Result<DVector<f64>> {
    apply_filter(&feasible_bank(panel, cfg)?, panel, t)
}

/// Time-domain PCA: project the demeaned panel on the top `q` eigenvectors
/// of its sample covariance and add the means back.
pub fn static_pca_estimate(panel: &TimeSeriesPanel, q: usize) -> Result<DMatrix<f64>> {
    let x = panel.observations();
    let (n, t_len) = x.shape();
    if q == 0 || q > n {
        return Err(domain(format!("need 1 <= q <= n, got q = {q}, n = {n}")));
    }
    let mean = x.column_mean();
    let mut xc = x.clone();
    for mut col in xc.column_iter_mut() {
        col -= &mean;
    }
    let cov = &xc * xc.transpose() / t_len as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let v = DMatrix::from_fn(n, q, |r, c| eig.eigenvectors[(r, order[c])]);
    let mut chi = &v * (v.transpose() * &xc);
    for mut col in chi.column_iter_mut() {
        col += &mean;
    }
    Ok(chi)
}

/// `(h, ||K_h||)` for the positive lags `h = 1..=M`. With `row = Some(i)` the Euclidean norm of row `i` is used, otherwise the
/// spectral norm of the stored coefficient matrix.
pub fn coefficient_norms(bank: &FilterBank, row: Option<usize>) -> Result<Vec<(usize, f64)>> {
    let pick: Box<dyn Fn(&DMatrix<f64>) -> f64> = match row {
        Some(i) => {
            let r = bank
                .rows
                .iter()
                .position(|&x| x == i)
                .ok_or_else(|| domain(format!("row {i} is not held by the filter bank")))?;
            Box::new(move |k: &DMatrix<f64>| k.row(r).norm())
        }
        None => Box::new(|k: &DMatrix<f64>| {
            k.clone()
                .singular_values()
                .iter()
                .copied()
                .fold(0.0, f64::max)
        }),
    };
    Ok((1..=bank.max_lag)
        .map(|h| {
            (h, pick(bank.coefficient(h as i64)))
        })
        .collect())
}

/// Norm sequence as `h,norm` CSV.
pub fn write_norms_csv<W: Write>(norms: &[(usize, f64)], mut out: W) -> Result<()> {
    writeln!(out, "h,norm")?;
    for (h, v) in norms {
        writeln!(out, "{h},{v:.17e}")?;
    }
    Ok(())
}
