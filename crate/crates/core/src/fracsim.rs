//! Simulation of long-memory factor panels and their population spectra.
//!
//! Every loading is a transfer function `c * (1 - L)^{-d} * Theta(L) / Phi(L)`
//! acting on a unit-variance Gaussian shock. The idiosyncratic part is either
//! white noise or a cross-sectionally correlated AR(1).

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{config, domain};
use crate::{Error, Result, C64};

const FACTOR_STREAM: u64 = 1;
const IDIO_STREAM: u64 = 2;

/// Transfer function of one (series, factor) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    /// Memory parameter, in `[0, 0.5)`.
    pub d: f64,
    /// Loading scale `c`.
    #[serde(default = "one")]
    pub scale: f64,
    /// Moving-average polynomial `Theta(z) = ma[0] + ma[1] z + ...`.
    #[serde(default = "unit_ma")]
    pub ma: Vec<f64>,
    /// Autoregressive coefficients of `Phi(z) = 1 - ar[0] z - ar[1] z^2 - ...`.
    #[serde(default)]
    pub ar: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

fn unit_ma() -> Vec<f64> {
    vec![1.0]
}

impl Entry {
    /// `c * (1 - L)^{-d} / (1 - alpha L)`.
    pub fn one_pole(d: f64, scale: f64, alpha: f64) -> Self {
        Self {
            d,
            scale,
            ma: unit_ma(),
            ar: if alpha == 0.0 { Vec::new() } else { vec![alpha] },
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_memory(self.d)?;
        if !self.scale.is_finite() {
            return Err(domain("loading scale must be finite"));
        }
        if self.ma.is_empty() || self.ma.iter().any(|c| !c.is_finite()) {
            return Err(domain("moving-average polynomial must be non-empty and finite"));
        }
        check_stationary(&self.ar)
    }

    /// Value of `c * (1 - z)^{-d} Theta(z) / Phi(z)` at `z = exp(-i theta)`.
    pub fn transfer(&self, theta: f64) -> Result<C64> {
        if theta == 0.0 && self.d > 0.0 {
            return Err(Error::Singularity(theta));
        }
        let z = C64::from_polar(1.0, -theta);
        let frac = if self.d == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            (C64::new(1.0, 0.0) - z).powf(-self.d)
        };
        Ok(frac * polyval(&self.ma, z) / ar_polyval(&self.ar, z) * self.scale)
    }

    /// Impulse response of `Theta(L) / Phi(L)`, coefficients `0..=k`.
    #[cfg(test)]
    fn arma_impulse(&self, k: usize) -> Vec<f64> {
        let mut h = vec![0.0; k + 1];
        for j in 0..=k {
            let mut v = self.ma.get(j).copied().unwrap_or(0.0);
            for (p, phi) in self.ar.iter().enumerate() {
                if j > p {
                    v += phi * h[j - p - 1];
                }
            }
            h[j] = v;
        }
        h
    }
}

fn polyval(coeffs: &[f64], z: C64) -> C64 {
    coeffs
        .iter()
        .rev()
        .fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

fn ar_polyval(ar: &[f64], z: C64) -> C64 {
    let mut zp = z;
    let mut v = C64::new(1.0, 0.0);
    for &phi in ar {
        v -= zp * phi;
        zp *= z;
    }
    v
}

fn check_memory(d: f64) -> Result<()> {
    if !(0.0..0.5).contains(&d) {
        return Err(domain(format!("memory parameter {d} outside [0, 0.5)")));
    }
    Ok(())
}

/// `Phi(z)` must have all roots strictly outside the unit circle, i.e. the
/// companion matrix must have spectral radius below one.
fn check_stationary(ar: &[f64]) -> Result<()> {
    if ar.iter().any(|c| !c.is_finite()) {
        return Err(domain("autoregressive coefficients must be finite"));
    }
    let radius = match ar.len() {
        0 => 0.0,
        1 => ar[0].abs(),
        p => {
            let mut comp = DMatrix::<f64>::zeros(p, p);
            for (j, &phi) in ar.iter().enumerate() {
                comp[(0, j)] = phi;
            }
            for j in 1..p {
                comp[(j, j - 1)] = 1.0;
            }
            comp.complex_eigenvalues()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max)
        }
    };
    // eigenvalues of the companion matrix carry O(1e-15) rounding
    if radius >= 1.0 - 1e-10 {
        return Err(domain(format!(
            "autoregressive polynomial has a root on or inside the unit circle (companion radius {radius})"
        )));
    }
    Ok(())
}

/// Idiosyncratic component of the panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Idiosyncratic {
    /// `xi_t = sigma * e_t` with `e_t` standard Gaussian white noise.
    WhiteNoise { sigma: f64 },
    /// `xi_t = phi xi_{t-1} + e_t`, `Cov(e_t)_{ij} = sigma * r_cs^{|i-j|}`.
    DenseAr1 { sigma: f64, phi: f64, r_cs: f64 },
}

impl Idiosyncratic {
    fn validate(&self) -> Result<()> {
        match *self {
            Idiosyncratic::WhiteNoise { sigma } => {
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(domain("white-noise sigma must be finite and nonnegative"));
                }
            }
            Idiosyncratic::DenseAr1 { sigma, phi, r_cs } => {
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(domain("dense AR(1) sigma must be finite and nonnegative"));
                }
                if phi.abs() >= 1.0 || r_cs.abs() >= 1.0 {
                    return Err(domain("dense AR(1) requires |phi| < 1 and |r_cs| < 1"));
                }
            }
        }
        Ok(())
    }

    /// Innovation covariance `Sigma_0` (identity times sigma^2 for white noise).
    fn innovation_cov(&self, n: usize) -> DMatrix<f64> {
        match *self {
            Idiosyncratic::WhiteNoise { sigma } => DMatrix::identity(n, n) * (sigma * sigma),
            Idiosyncratic::DenseAr1 { sigma, r_cs, .. } => DMatrix::from_fn(n, n, |i, j| {
                sigma * r_cs.powi(i.abs_diff(j) as i32)
            }),
        }
    }

    /// Spectral density of the idiosyncratic vector, 1/(2 pi) convention.
    pub fn spectrum(&self, n: usize, theta: f64) -> DMatrix<C64> {
        let scale = match *self {
            Idiosyncratic::WhiteNoise { .. } => 1.0,
            Idiosyncratic::DenseAr1 { phi, .. } => {
                let z = C64::from_polar(1.0, -theta);
                1.0 / (C64::new(1.0, 0.0) - z * phi).norm_sqr()
            }
        };
        self.innovation_cov(n)
            .map(|v| C64::new(v * scale / (2.0 * PI), 0.0))
    }
}

/// Which memory parameters are shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemoryRegime {
    /// `d_il = d` for all entries.
    FactorHomogeneous,
    /// `d_il = d_l`.
    FactorHeterogeneous,
    /// `d_il = d_i`.
    RowHeterogeneous,
    EntryWise,
}

/// Generative description of a long-memory factor panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModelSpec")]
pub struct ModelSpec {
    n: usize,
    q: usize,
    /// Row-major `n x q` transfer functions.
    entries: Vec<Entry>,
    idio: Idiosyncratic,
    /// Standard deviation of the common shocks.
    shock_sd: f64,
}

#[derive(Deserialize)]
struct RawModelSpec {
    n: usize,
    q: usize,
    entries: Vec<Entry>,
    idio: Idiosyncratic,
    #[serde(default = "one")]
    shock_sd: f64,
}

impl TryFrom<RawModelSpec> for ModelSpec {
    type Error = Error;

    fn try_from(raw: RawModelSpec) -> Result<Self> {
        ModelSpec::new(raw.n, raw.q, raw.entries, raw.idio)?.with_shock_sd(raw.shock_sd)
    }
}

impl ModelSpec {
    pub fn new(n: usize, q: usize, entries: Vec<Entry>, idio: Idiosyncratic) -> Result<Self> {
        if n == 0 || q == 0 || q > n {
            return Err(domain(format!("need 1 <= q <= n, got n = {n}, q = {q}")));
        }
        if entries.len() != n * q {
            return Err(domain(format!(
                "expected {} entries for an {n} x {q} model, got {}",
                n * q,
                entries.len()
            )));
        }
        for e in &entries {
            e.validate()?;
        }
        idio.validate()?;
        Ok(Self {
            n,
            q,
            entries,
            idio,
            shock_sd: 1.0,
        })
    }

    /// Builds the model entry by entry; `f(i, l)` uses 0-based indices.
    pub fn from_fn(
        n: usize,
        q: usize,
        idio: Idiosyncratic,
        mut f: impl FnMut(usize, usize) -> Entry,
    ) -> Result<Self> {
        let mut entries = Vec::with_capacity(n * q);
        for i in 0..n {
            for l in 0..q {
                entries.push(f(i, l));
            }
        }
        Self::new(n, q, entries, idio)
    }

    pub fn with_shock_sd(mut self, sd: f64) -> Result<Self> {
        if !(sd >= 0.0 && sd.is_finite()) {
            return Err(domain("shock standard deviation must be finite and nonnegative"));
        }
        self.shock_sd = sd;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn entry(&self, i: usize, l: usize) -> &Entry {
        &self.entries[i * self.q + l]
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn idio(&self) -> &Idiosyncratic {
        &self.idio
    }

    pub fn shock_sd(&self) -> f64 {
        self.shock_sd
    }

    /// Same loadings and idiosyncratic law with the cross-section cut to
    /// its first `n` rows.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n > self.n {
            return Err(domain(format!("cannot extend a model of {} rows to {n}", self.n)));
        }
        let entries = self.entries[..n * self.q].to_vec();
        Self::new(n, self.q, entries, self.idio.clone())?.with_shock_sd(self.shock_sd)
    }

    pub fn memory(&self, i: usize, l: usize) -> f64 {
        self.entry(i, l).d
    }

    pub fn max_memory(&self) -> f64 {
        self.entries.iter().map(|e| e.d).fold(0.0, f64::max)
    }

    pub fn min_memory(&self) -> f64 {
        self.entries.iter().map(|e| e.d).fold(f64::INFINITY, f64::min)
    }

    pub fn regime(&self) -> MemoryRegime {
        let d0 = self.entries[0].d;
        if self.entries.iter().all(|e| e.d == d0) {
            return MemoryRegime::FactorHomogeneous;
        }
        let by_factor = (0..self.n).all(|i| (0..self.q).all(|l| self.memory(i, l) == self.memory(0, l)));
        if by_factor {
            return MemoryRegime::FactorHeterogeneous;
        }
        let by_row = (0..self.n).all(|i| (0..self.q).all(|l| self.memory(i, l) == self.memory(i, 0)));
        if by_row {
            MemoryRegime::RowHeterogeneous
        } else {
            MemoryRegime::EntryWise
        }
    }

    /// `B(theta)`, the `n x q` matrix of transfer functions (shock scale included).
    pub fn transfer_matrix(&self, theta: f64) -> Result<DMatrix<C64>> {
        let mut b = DMatrix::zeros(self.n, self.q);
        for i in 0..self.n {
            for l in 0..self.q {
                b[(i, l)] = self.entry(i, l).transfer(theta)? * self.shock_sd;
            }
        }
        Ok(b)
    }

    /// Spectral density of the common component, `B B^* / (2 pi)`.
    pub fn common_spectrum(&self, theta: f64) -> Result<DMatrix<C64>> {
        let b = self.transfer_matrix(theta)?;
        Ok(&b * b.adjoint() / C64::new(2.0 * PI, 0.0))
    }
}

/// Population spectral density `Sigma(theta) = B B^* / (2 pi) + Sigma_xi(theta)`.
pub fn analytic_spectrum(spec: &ModelSpec, theta: f64) -> Result<DMatrix<C64>> {
    let mut s = spec.common_spectrum(theta)?;
    s += spec.idio.spectrum(spec.n, theta);
    Ok(s)
}

/// Coefficients `psi_0..=psi_k` of `(1 - L)^{-d}`.
pub fn frac_coeffs(d: f64, k: usize) -> Result<Vec<f64>> {
    check_memory(d)?;
    let mut psi = Vec::with_capacity(k + 1);
    psi.push(1.0);
    for j in 1..=k {
        let prev = psi[j - 1];
        psi.push(prev * (j as f64 - 1.0 + d) / j as f64);
    }
    Ok(psi)
}

/// MA(infinity) coefficients `0..=k` of `c (1 - L)^{-d} Theta(L) / Phi(L)`,
/// obtained by running the ARMA recursion on the fractional coefficients.
pub fn transfer_coeffs(entry: &Entry, k: usize) -> Result<Vec<f64>> {
    entry.validate()?;
    let psi = frac_coeffs(entry.d, k)?;
    let mut b = vec![0.0; k + 1];
    for j in 0..=k {
        let mut v: f64 = entry
            .ma
            .iter()
            .enumerate()
            .take(j + 1)
            .map(|(m, th)| th * psi[j - m])
            .sum();
        for (p, phi) in entry.ar.iter().enumerate() {
            if j > p {
                v += phi * b[j - p - 1];
            }
        }
        b[j] = v;
    }
    for v in &mut b {
        *v *= entry.scale;
    }
    Ok(b)
}

/// Observed `n x T` panel, optionally carrying its simulated decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    x: DMatrix<f64>,
    chi: Option<DMatrix<f64>>,
    xi: Option<DMatrix<f64>>,
}

impl TimeSeriesPanel {
    /// Panel with no known decomposition. Columns are time points.
    pub fn from_observations(x: DMatrix<f64>) -> Self {
        Self { x, chi: None, xi: None }
    }

    pub fn from_components(chi: DMatrix<f64>, xi: DMatrix<f64>) -> Result<Self> {
        if chi.shape() != xi.shape() {
            return Err(Error::Input("common and idiosyncratic shapes differ".into()));
        }
        Ok(Self {
            x: &chi + &xi,
            chi: Some(chi),
            xi: Some(xi),
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    pub fn observations(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn common(&self) -> Option<&DMatrix<f64>> {
        self.chi.as_ref()
    }

    pub fn idiosyncratic(&self) -> Option<&DMatrix<f64>> {
        self.xi.as_ref()
    }

    /// The panel with every component multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            x: &self.x * c,
            chi: self.chi.as_ref().map(|m| m * c),
            xi: self.xi.as_ref().map(|m| m * c),
        }
    }
}

/// Truncation and burn-in for [`simulate_panel`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Defaults to `ma_trunc`.
    pub burn_in: Option<usize>,
    /// Defaults to `max(2000, 4 T)`.
    pub ma_trunc: Option<usize>,
}

impl SimOptions {
    pub fn resolve(&self, t_len: usize) -> (usize, usize) {
        let ma_trunc = self.ma_trunc.unwrap_or_else(|| (4 * t_len).max(2000));
        (self.burn_in.unwrap_or(ma_trunc), ma_trunc)
    }
}

/// Independent Gaussian stream for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a list of integers into one 64-bit seed (splitmix64 finalizer).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

/// Simulates `T` observations of the panel described by `spec`.
///
/// The common component is the truncated one-sided moving average
/// `chi_it = sum_l sum_{k <= ma_trunc} b_{il,k} u_{l,t-k}`, evaluated by FFT
/// convolution. Shocks and idiosyncratic noise come from independent streams
/// keyed by `seed`.
pub fn simulate_panel(
    spec: &ModelSpec,
    t_len: usize,
    seed: u64,
    opts: SimOptions,
) -> Result<TimeSeriesPanel> {
    if t_len < 8 {
        return Err(config(format!("need T >= 8, got {t_len}")));
    }
    let (burn_in, ma_trunc) = opts.resolve(t_len);
    if ma_trunc < t_len {
        return Err(config(format!(
            "ma_trunc = {ma_trunc} is shorter than T = {t_len}"
        )));
    }
    let chi = simulate_common(spec, t_len, seed, burn_in, ma_trunc)?;
    let xi = simulate_idio(spec, t_len, seed, burn_in)?;
    TimeSeriesPanel::from_components(chi, xi)
}

fn simulate_common(
    spec: &ModelSpec,
    t_len: usize,
    seed: u64,
    burn_in: usize,
    ma_trunc: usize,
) -> Result<DMatrix<f64>> {
    let (n, q) = (spec.n, spec.q);
    let total = ma_trunc + burn_in + t_len;
    let size = total.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);

    let mut rng = stream_rng(seed, FACTOR_STREAM);
    let mut shock_spectra = Vec::with_capacity(q);
    for _ in 0..q {
        let mut u: Vec<C64> = (0..size)
            .map(|s| {
                if s < total {
                    let z: f64 = rng.sample(StandardNormal);
                    C64::new(z * spec.shock_sd, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
            .collect();
        fwd.process(&mut u);
        shock_spectra.push(u);
    }

    let start = ma_trunc + burn_in;
    let mut chi = DMatrix::zeros(n, t_len);
    let mut buf = vec![C64::new(0.0, 0.0); size];
    for i in 0..n {
        for (l, u_hat) in shock_spectra.iter().enumerate() {
            let b = transfer_coeffs(spec.entry(i, l), ma_trunc)?;
            if b.iter().all(|&c| c == 0.0) {
                continue;
            }
            circular_filter(&b, u_hat, &mut buf, &fwd, &inv);
            let norm = 1.0 / size as f64;
            for t in 0..t_len {
                chi[(i, t)] += buf[start + t].re * norm;
            }
        }
    }
    Ok(chi)
}

fn circular_filter(
    coeffs: &[f64],
    u_hat: &[C64],
    buf: &mut [C64],
    fwd: &Arc<dyn Fft<f64>>,
    inv: &Arc<dyn Fft<f64>>,
) {
    for (k, slot) in buf.iter_mut().enumerate() {
        *slot = C64::new(coeffs.get(k).copied().unwrap_or(0.0), 0.0);
    }
    fwd.process(buf);
    for (slot, u) in buf.iter_mut().zip(u_hat) {
        *slot *= u;
    }
    inv.process(buf);
}

fn simulate_idio(
    spec: &ModelSpec,
    t_len: usize,
    seed: u64,
    burn_in: usize,
) -> Result<DMatrix<f64>> {
    let n = spec.n;
    let mut rng = stream_rng(seed, IDIO_STREAM);
    let draw = |rng: &mut ChaCha8Rng| -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
    };
    match spec.idio {
        Idiosyncratic::WhiteNoise { sigma } => {
            let mut xi = DMatrix::zeros(n, t_len);
            for t in 0..t_len {
                xi.set_column(t, &(draw(&mut rng) * sigma));
            }
            Ok(xi)
        }
        Idiosyncratic::DenseAr1 { phi, .. } => {
            let cov = spec.idio.innovation_cov(n);
            let chol = cov
                .clone()
                .cholesky()
                .map(|c| c.l())
                .or_else(|| {
                    // singular Sigma_0 (sigma = 0): fall back to a zero factor
                    (cov.norm() == 0.0).then(|| DMatrix::zeros(n, n))
                })
                .ok_or_else(|| domain("idiosyncratic covariance is not positive definite"))?;
            let mut state = &chol * draw(&mut rng) / (1.0 - phi * phi).sqrt();
            let mut xi = DMatrix::zeros(n, t_len);
            for s in 0..burn_in + t_len {
                state = &state * phi + &chol * draw(&mut rng);
                if s >= burn_in {
                    xi.set_column(s - burn_in, &state);
                }
            }
            Ok(xi)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rank1(n: usize, d: f64, alphas: &[f64], idio: Idiosyncratic) -> ModelSpec {
        ModelSpec::from_fn(n, 1, idio, |i, _| Entry::one_pole(d, 1.0, alphas[i])).unwrap()
    }

    fn spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect()
    }

    #[test]
    fn frac_coeffs_examples() {
        assert_eq!(frac_coeffs(0.0, 3).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(frac_coeffs(0.4, 1).unwrap(), vec![1.0, 0.4]);
        let c = frac_coeffs(0.4, 3).unwrap();
        for (a, b) in c.iter().zip([1.0, 0.4, 0.28, 0.224]) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        assert!(frac_coeffs(0.5, 3).is_err());
        assert!(frac_coeffs(-0.1, 3).is_err());
    }

    #[test]
    fn transfer_coeffs_examples() {
        let ar = transfer_coeffs(&Entry::one_pole(0.0, 1.0, 0.5), 3).unwrap();
        assert_eq!(ar, vec![1.0, 0.5, 0.25, 0.125]);
        let fr = transfer_coeffs(&Entry::one_pole(0.4, 1.0, 0.0), 3).unwrap();
        for (a, b) in fr.iter().zip([1.0, 0.4, 0.28, 0.224]) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        let mixed = transfer_coeffs(&Entry::one_pole(0.4, 1.0, 0.5), 2).unwrap();
        for (a, b) in mixed.iter().zip([1.0, 0.9, 0.73]) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
        assert!(transfer_coeffs(&Entry::one_pole(0.1, 1.0, 1.0), 3).is_err());
    }

    #[test]
    fn recursion_matches_explicit_convolution() {
        let e = Entry { d: 0.3, scale: 1.5, ma: vec![1.0, -0.4, 0.2], ar: vec![0.5, -0.3] };
        let k = 400;
        let psi = frac_coeffs(e.d, k).unwrap();
        let h = e.arma_impulse(k);
        let fast = transfer_coeffs(&e, k).unwrap();
        for j in 0..=k {
            let direct: f64 = (0..=j).map(|m| psi[m] * h[j - m]).sum::<f64>() * e.scale;
            assert_relative_eq!(fast[j], direct, epsilon = 1e-13, max_relative = 1e-11);
        }
    }

    #[test]
    fn arma_entry_matches_hand_expansion() {
        // (1 + 0.5 L) / (1 - 0.3 L - 0.2 L^2): h = 1, 0.8, 0.44, 0.292
        let e = Entry {
            d: 0.0,
            scale: 2.0,
            ma: vec![1.0, 0.5],
            ar: vec![0.3, 0.2],
        };
        let h = transfer_coeffs(&e, 3).unwrap();
        for (a, b) in h.iter().zip([2.0, 1.6, 0.88, 0.584]) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn unstable_ar_polynomials_rejected() {
        assert!(check_stationary(&[0.5, 0.5]).is_err()); // root at z = 1
        assert!(check_stationary(&[1.2, -0.3]).is_ok());
        assert!(check_stationary(&[-1.0]).is_err());
        let bad = Entry { d: 0.1, scale: 1.0, ma: vec![1.0], ar: vec![0.5, 0.6] };
        assert!(ModelSpec::new(1, 1, vec![bad], Idiosyncratic::WhiteNoise { sigma: 1.0 }).is_err());
    }

    #[test]
    fn regime_classification() {
        let wn = Idiosyncratic::WhiteNoise { sigma: 1.0 };
        let hom = ModelSpec::from_fn(3, 2, wn.clone(), |_, _| Entry::one_pole(0.3, 1.0, 0.0)).unwrap();
        assert_eq!(hom.regime(), MemoryRegime::FactorHomogeneous);
        let fac = ModelSpec::from_fn(3, 2, wn.clone(), |_, l| Entry::one_pole(0.1 + 0.2 * l as f64, 1.0, 0.0)).unwrap();
        assert_eq!(fac.regime(), MemoryRegime::FactorHeterogeneous);
        let row = ModelSpec::from_fn(3, 2, wn.clone(), |i, _| Entry::one_pole(0.1 * i as f64, 1.0, 0.0)).unwrap();
        assert_eq!(row.regime(), MemoryRegime::RowHeterogeneous);
        let ent = ModelSpec::from_fn(3, 2, wn, |i, l| Entry::one_pole(if (i, l) == (1, 0) { 0.2 } else { 0.3 }, 1.0, 0.0)).unwrap();
        assert_eq!(ent.regime(), MemoryRegime::EntryWise);
    }

    #[test]
    fn flat_spectrum_example() {
        let spec = rank1(4, 0.0, &[0.0; 4], Idiosyncratic::WhiteNoise { sigma: 1.0 });
        for theta in [0.0, 0.3, -2.0, PI] {
            let s = analytic_spectrum(&spec, theta).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    let expect = if i == j { 2.0 } else { 1.0 } / (2.0 * PI);
                    assert_relative_eq!(s[(i, j)].re, expect, epsilon = 1e-14);
                    assert!(s[(i, j)].im.abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn pure_fractional_spectrum_at_pi() {
        let spec = rank1(1, 0.4, &[0.0], Idiosyncratic::WhiteNoise { sigma: 0.0 });
        let s = analytic_spectrum(&spec, PI).unwrap();
        assert_relative_eq!(s[(0, 0)].re, 2f64.powf(-0.8) / (2.0 * PI), epsilon = 1e-14);
        assert_relative_eq!(s[(0, 0)].re, 0.091411, epsilon = 5e-7);
        let theta = 0.37;
        let s = analytic_spectrum(&spec, theta).unwrap();
        let expect = (2.0 * (theta / 2.0).sin()).powf(-0.8) / (2.0 * PI);
        assert_relative_eq!(s[(0, 0)].re, expect, max_relative = 1e-13);
    }

    #[test]
    fn zero_frequency_is_singular_with_memory() {
        let spec = rank1(2, 0.2, &[0.1, 0.2], Idiosyncratic::WhiteNoise { sigma: 1.0 });
        assert!(matches!(analytic_spectrum(&spec, 0.0), Err(Error::Singularity(_))));
    }

    #[test]
    fn spectrum_is_hermitian_psd_and_conjugate_symmetric() {
        let spec = ModelSpec::from_fn(
            6,
            2,
            Idiosyncratic::DenseAr1 { sigma: 1.0, phi: 0.4, r_cs: 0.6 },
            |i, l| Entry::one_pole(0.1 + 0.05 * (i + l) as f64, 1.0 + 0.1 * l as f64, 0.1 * i as f64 - 0.2),
        )
        .unwrap();
        for theta in [0.01, 0.5, 1.7, PI] {
            let s = analytic_spectrum(&spec, theta).unwrap();
            let herm = (&s - s.adjoint()).norm();
            assert!(herm <= 1e-12 * s.norm());
            let m = analytic_spectrum(&spec, -theta).unwrap();
            assert!((&m - s.conjugate()).norm() <= 1e-12 * s.norm());
            let eig = nalgebra::SymmetricEigen::new(s.clone());
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-10 * s.norm());
        }
    }

    #[test]
    fn zero_loadings_give_pure_idiosyncratic_panel() {
        let spec = ModelSpec::from_fn(5, 2, Idiosyncratic::WhiteNoise { sigma: 1.0 }, |_, _| {
            Entry::one_pole(0.3, 0.0, 0.5)
        })
        .unwrap();
        let p = simulate_panel(&spec, 64, 7, SimOptions::default()).unwrap();
        assert!(p.common().unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(p.observations(), p.idiosyncratic().unwrap());
    }

    #[test]
    fn simulation_is_deterministic_and_decomposes_exactly() {
        let spec = ModelSpec::from_fn(
            4,
            2,
            Idiosyncratic::DenseAr1 { sigma: 1.0, phi: 0.4, r_cs: 0.6 },
            |i, l| Entry::one_pole(0.3, 1.0, 0.1 * (i + l) as f64),
        )
        .unwrap();
        let opts = SimOptions { burn_in: Some(50), ma_trunc: Some(300) };
        let a = simulate_panel(&spec, 100, 42, opts).unwrap();
        let b = simulate_panel(&spec, 100, 42, opts).unwrap();
        assert_eq!(a, b);
        let c = simulate_panel(&spec, 100, 43, opts).unwrap();
        assert_ne!(a.observations(), c.observations());
        // the idiosyncratic stream does not depend on the loadings
        let xi = simulate_idio(&spec, 100, 42, 50).unwrap();
        assert_eq!(a.idiosyncratic().unwrap(), &xi);
    }

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let spec = rank1(2, 0.35, &[0.5, -0.3], Idiosyncratic::WhiteNoise { sigma: 0.0 });
        let (t_len, burn, trunc) = (20, 5, 40);
        let chi = simulate_common(&spec, t_len, 3, burn, trunc).unwrap();
        let mut rng = stream_rng(3, FACTOR_STREAM);
        let u: Vec<f64> = (0..trunc + burn + t_len).map(|_| rng.sample(StandardNormal)).collect();
        for i in 0..2 {
            let b = transfer_coeffs(spec.entry(i, 0), trunc).unwrap();
            for t in 0..t_len {
                let s = trunc + burn + t;
                let direct: f64 = (0..=trunc).map(|k| b[k] * u[s - k]).sum();
                assert_relative_eq!(chi[(i, t)], direct, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn long_memory_inflates_common_variance() {
        let alphas = spaced(0.2, 0.8, 10);
        let wn = Idiosyncratic::WhiteNoise { sigma: 1.0 };
        let mean_var = |d: f64| {
            let spec = rank1(10, d, &alphas, wn.clone());
            let p = simulate_panel(&spec, 256, 11, SimOptions::default()).unwrap();
            let chi = p.common().unwrap();
            (0..10)
                .map(|i| {
                    let row = chi.row(i);
                    let m = row.mean();
                    row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 255.0
                })
                .sum::<f64>()
                / 10.0
        };
        assert!(mean_var(0.4) > mean_var(0.0));
    }

    #[test]
    fn rejects_bad_configuration() {
        let spec = rank1(1, 0.1, &[0.0], Idiosyncratic::WhiteNoise { sigma: 1.0 });
        assert!(matches!(
            simulate_panel(&spec, 100, 1, SimOptions { burn_in: None, ma_trunc: Some(50) }),
            Err(Error::Config(_))
        ));
        assert!(simulate_panel(&spec, 4, 1, SimOptions::default()).is_err());
        assert!(ModelSpec::new(2, 3, vec![], Idiosyncratic::WhiteNoise { sigma: 1.0 }).is_err());
        assert!(Idiosyncratic::DenseAr1 { sigma: 1.0, phi: 1.0, r_cs: 0.0 }.validate().is_err());
    }

    #[test]
    fn model_spec_json_round_trip_validates() {
        let spec = rank1(3, 0.2, &[0.1, 0.2, 0.3], Idiosyncratic::DenseAr1 { sigma: 1.0, phi: 0.4, r_cs: 0.6 });
        let text = serde_json::to_string(&spec).unwrap();
        let back: ModelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
        let bad = text.replace("0.2,", "0.7,");
        assert!(serde_json::from_str::<ModelSpec>(&bad).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(&[1, 50, 200, 0]);
        let b = derive_seed(&[1, 50, 200, 1]);
        let c = derive_seed(&[1, 50, 201, 0]);
        assert!(a != b && a != c && b != c);
        assert_eq!(a, derive_seed(&[1, 50, 200, 0]));
    }
}
