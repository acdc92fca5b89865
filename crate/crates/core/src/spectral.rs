//! Periodogram and discrete smoothed-periodogram spectral estimation.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain};
use crate::fracsim::TimeSeriesPanel;
use crate::{Error, Result, C64};

/// How the points of a [`FrequencyGrid`] were generated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridKind {
    /// `2 pi j / T`, `j = -T0..=T0`, optionally without `j = 0`.
    Fourier { t_len: usize, with_zero: bool },
    /// `-pi + 2 pi (k + offset) / N`, `k = 0..N`. `offset = 1` includes
    /// `pi` and `0`; `offset = 0.5` is the midpoint grid, which avoids `0`.
    Uniform { size: usize, offset: f64 },
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    points: Vec<f64>,
    kind: GridKind,
}

impl FrequencyGrid {
    pub fn fourier(t_len: usize, with_zero: bool) -> Result<Self> {
        if t_len < 2 {
            return Err(domain("Fourier grid needs T >= 2"));
        }
        let t0 = (t_len as i64 - 1) / 2;
        let points = (-t0..=t0)
            .filter(|&j| with_zero || j != 0)
            .map(|j| 2.0 * PI * j as f64 / t_len as f64)
            .collect();
        Ok(Self {
            points,
            kind: GridKind::Fourier { t_len, with_zero },
        })
    }

    /// `N` equispaced points on `(-pi, pi]`, including `0` and `pi`.
    pub fn uniform(size: usize) -> Result<Self> {
        Self::shifted(size, 1.0)
    }

    /// `N` equispaced cell midpoints of `(-pi, pi]`; symmetric about `0`
    /// without containing it.
    pub fn midpoint(size: usize) -> Result<Self> {
        Self::shifted(size, 0.5)
    }

    fn shifted(size: usize, offset: f64) -> Result<Self> {
        if size < 2 {
            return Err(domain("uniform grid needs at least two points"));
        }
        let step = 2.0 * PI / size as f64;
        let points = (0..size).map(|k| -PI + step * (k as f64 + offset)).collect();
        Ok(Self {
            points,
            kind: GridKind::Uniform { size, offset },
        })
    }

    pub fn custom(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(domain("empty frequency grid"));
        }
        let ordered = points.windows(2).all(|w| w[0] < w[1]);
        let inside = points.iter().all(|&p| p > -PI && p <= PI);
        if !ordered || !inside {
            return Err(domain("grid points must be strictly increasing within (-pi, pi]"));
        }
        Ok(Self {
            points,
            kind: GridKind::Custom,
        })
    }

    /// `count` log-spaced positive frequencies between `lo` and `hi`.
    pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi <= PI) || count < 2 {
            return Err(domain("log-spaced grid needs 0 < lo < hi <= pi and two points"));
        }
        let (a, b) = (lo.ln(), hi.ln());
        let points = (0..count)
            .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
            .collect();
        Self::custom(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of `-theta_k` when the grid is symmetric about zero.
    pub fn mirror(&self, k: usize) -> Option<usize> {
        let m = self.points.len() - 1 - k;
        let sym = match self.kind {
            GridKind::Fourier { .. } => true,
            GridKind::Uniform { offset, .. } => offset == 0.5,
            GridKind::Custom => self.is_symmetric(),
        };
        sym.then_some(m)
    }

    fn is_symmetric(&self) -> bool {
        let n = self.points.len();
        (0..n).all(|k| (self.points[k] + self.points[n - 1 - k]).abs() <= 1e-12)
    }
}

/// Kernel used to smooth the periodogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelSpec {
    /// `3/4 (1 - x^2)` on `[-1, 1]`.
    #[default]
    Epanechnikov,
    /// `3/(4 pi) (1 - (x/pi)^2)` on `[-pi, pi]`.
    BartlettPriestley,
    /// `1 - |x|` on `[-1, 1]`.
    Triangular,
}

impl KernelSpec {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "epanechnikov" => Ok(Self::Epanechnikov),
            "bartlett-priestley" => Ok(Self::BartlettPriestley),
            "triangular" => Ok(Self::Triangular),
            other => Err(config(format!("unknown kernel '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Epanechnikov => "epanechnikov",
            Self::BartlettPriestley => "bartlett-priestley",
            Self::Triangular => "triangular",
        }
    }

    /// Half-width `rho` of the support.
    pub fn support(&self) -> f64 {
        match self {
            Self::BartlettPriestley => PI,
            _ => 1.0,
        }
    }

    pub fn weight(&self, x: f64) -> f64 {
        let rho = self.support();
        if x.abs() > rho {
            return 0.0;
        }
        match self {
            Self::Epanechnikov => 0.75 * (1.0 - x * x),
            Self::BartlettPriestley => 0.75 / PI * (1.0 - (x / PI).powi(2)),
            Self::Triangular => 1.0 - x.abs(),
        }
    }
}

pub fn kernel_weight(kernel: KernelSpec, x: f64) -> f64 {
    kernel.weight(x)
}

/// One `n x n` complex matrix per point of a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: FrequencyGrid,
    mats: Vec<DMatrix<C64>>,
}

impl SpectralField {
    pub fn new(grid: FrequencyGrid, mats: Vec<DMatrix<C64>>) -> Result<Self> {
        if mats.len() != grid.len() {
            return Err(Error::Input(format!(
                "{} matrices for a grid of {} points",
                mats.len(),
                grid.len()
            )));
        }
        let n = mats.first().map_or(0, |m| m.nrows());
        if mats.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::Input("spectral field matrices must all be n x n".into()));
        }
        Ok(Self { grid, mats })
    }

    /// Evaluates `f` at every grid point (in parallel, assembled in grid order).
    pub fn from_fn<F>(grid: FrequencyGrid, f: F) -> Result<Self>
    where
        F: Fn(f64) -> Result<DMatrix<C64>> + Sync,
    {
        let mats = grid
            .points()
            .par_iter()
            .map(|&theta| f(theta))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, mats)
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn matrices(&self) -> &[DMatrix<C64>] {
        &self.mats
    }

    pub fn at(&self, k: usize) -> &DMatrix<C64> {
        &self.mats[k]
    }

    pub fn n(&self) -> usize {
        self.mats.first().map_or(0, |m| m.nrows())
    }

    /// Rows `(theta, i, j, re, im)` with 0-based indices.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "theta,i,j,re,im")?;
        for (theta, m) in self.grid.points().iter().zip(&self.mats) {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    let z = m[(i, j)];
                    writeln!(out, "{theta:.17e},{i},{j},{:.17e},{:.17e}", z.re, z.im)?;
                }
            }
        }
        Ok(())
    }
}

/// `d(lambda) = sum_t X_t exp(-i lambda t)` for `t = 0..T`.
pub fn dft(panel: &TimeSeriesPanel, lambda: f64) -> Vec<C64> {
    let x = panel.observations();
    let mut d = vec![C64::new(0.0, 0.0); x.nrows()];
    for t in 0..x.ncols() {
        let e = C64::from_polar(1.0, -lambda * t as f64);
        for (i, slot) in d.iter_mut().enumerate() {
            *slot += e * x[(i, t)];
        }
    }
    d
}

/// DFT at the Fourier frequencies `2 pi j / T`, `j = 1..=T0`, by FFT.
/// Column `j - 1` holds `d(lambda_j)`.
pub fn fourier_dft(panel: &TimeSeriesPanel) -> DMatrix<C64> {
    let x = panel.observations();
    let (n, t_len) = x.shape();
    let t0 = (t_len.saturating_sub(1)) / 2;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(t_len);
    let mut out = DMatrix::zeros(n, t0);
    let mut buf = vec![C64::new(0.0, 0.0); t_len];
    for i in 0..n {
        for (t, slot) in buf.iter_mut().enumerate() {
            *slot = C64::new(x[(i, t)], 0.0);
        }
        fft.process(&mut buf);
        for j in 1..=t0 {
            out[(i, j - 1)] = buf[j];
        }
    }
    out
}

fn outer(d: &[C64], scale: f64) -> DMatrix<C64> {
    let n = d.len();
    DMatrix::from_fn(n, n, |i, j| d[i] * d[j].conj() * scale)
}

/// `I_XX(lambda) = d(lambda) d(lambda)^* / (2 pi T)`.
pub fn periodogram(panel: &TimeSeriesPanel, lambda: f64) -> Result<DMatrix<C64>> {
    let t_len = panel.len();
    if t_len < 2 {
        return Err(domain("periodogram needs T >= 2"));
    }
    Ok(outer(&dft(panel, lambda), 1.0 / (2.0 * PI * t_len as f64)))
}

/// Smoothed-periodogram estimate together with the grid points whose kernel
/// window contained no nonzero Fourier frequency.
#[derive(Debug, Clone)]
pub struct SpectralEstimate {
    pub field: SpectralField,
    pub empty_windows: Vec<usize>,
}

/// `Sigma_hat(theta) = 2 pi / (B_T T) sum_{j != 0} W((theta - lambda_j) / B_T) I_XX(lambda_j)`,
/// summed over `j = 1..=T0` using `I_XX(-lambda_j) = conj(I_XX(lambda_j))`.
pub fn smoothed_spectrum(
    panel: &TimeSeriesPanel,
    grid: &FrequencyGrid,
    bandwidth: f64,
    kernel: KernelSpec,
) -> Result<SpectralEstimate> {
    let t_len = panel.len();
    if t_len < 2 {
        return Err(domain("smoothed periodogram needs T >= 2"));
    }
    if !(bandwidth > 0.0 && bandwidth <= 1.0) {
        return Err(domain(format!("bandwidth {bandwidth} outside (0, 1]")));
    }
    if bandwidth * (t_len as f64) < 1.0 {
        return Err(config(format!(
            "B_T * T = {} < 1: kernel window holds no Fourier frequency",
            bandwidth * t_len as f64
        )));
    }
    let n = panel.n();
    let d = fourier_dft(panel);
    let t0 = d.ncols();
    let step = 2.0 * PI / t_len as f64;
    // 2 pi / (B_T T) * 1 / (2 pi T)
    let norm = 1.0 / (bandwidth * (t_len * t_len) as f64);
    let reach = kernel.support() * bandwidth;

    let mats: Vec<(DMatrix<C64>, bool)> = grid
        .points()
        .par_iter()
        .map(|&theta| {
            // columns sqrt(w) d_j (direct term) and sqrt(w) conj(d_j) (mirror term)
            let mut cols: Vec<Vec<C64>> = Vec::new();
            let mut push = |j: usize, w: f64, conj: bool| {
                if w > 0.0 {
                    let s = (w * norm).sqrt();
                    cols.push((0..n)
                        .map(|i| {
                            let z = d[(i, j - 1)];
                            (if conj { z.conj() } else { z }) * s
                        })
                        .collect());
                }
            };
            for j in window(theta, reach, step, t0) {
                push(j, kernel.weight((theta - j as f64 * step) / bandwidth), false);
            }
            for j in window(-theta, reach, step, t0) {
                push(j, kernel.weight((theta + j as f64 * step) / bandwidth), true);
            }
            if cols.is_empty() {
                return (DMatrix::zeros(n, n), true);
            }
            let a = DMatrix::from_fn(n, cols.len(), |i, c| cols[c][i]);
            (&a * a.adjoint(), false)
        })
        .collect();

    let mut empty_windows = Vec::new();
    let mut out = Vec::with_capacity(mats.len());
    for (k, (m, empty)) in mats.into_iter().enumerate() {
        if empty {
            empty_windows.push(k);
        }
        out.push(m);
    }
    Ok(SpectralEstimate {
        field: SpectralField::new(grid.clone(), out)?,
        empty_windows,
    })
}

/// Fourier indices `j in 1..=t0` with `|center - j step| <= reach`.
fn window(center: f64, reach: f64, step: f64, t0: usize) -> std::ops::RangeInclusive<usize> {
    let lo = ((center - reach) / step).ceil().max(1.0);
    let hi = ((center + reach) / step).floor().min(t0 as f64);
    if hi < lo {
        #[allow(clippy::reversed_empty_ranges)]
        return 1..=0;
    }
    lo as usize..=hi as usize
}
