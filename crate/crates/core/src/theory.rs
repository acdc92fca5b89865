//! Closed-form rate theory: the Hölder-exponent recursion for factor-wise
//! memory, gap dominance, optimal polynomial tuning `(b, m, kappa)` with
//! `B_T = T^-b`, `M(T) = T^m`, `T = n^kappa`, and the truncation-lag rule.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::domain;
use crate::Result;

/// Slack for boundary comparisons on decimal grids (e.g. `1 - 4*0.1 - 2*0.3`).
const EPS: f64 = 1e-12;

fn check_memory(d: f64) -> Result<()> {
    if !(0.0..0.5).contains(&d) {
        return Err(domain(format!("memory parameter {d} outside [0, 0.5)")));
    }
    Ok(())
}

fn check_spread(delta: f64) -> Result<()> {
    if !(0.0..0.5).contains(&delta) {
        return Err(domain(format!("memory spread {delta} outside [0, 0.5)")));
    }
    Ok(())
}

/// `alpha_{j1 j2} = 2|d_(j1) - d_(j2)|` with `alpha_{0,j} = 1` and `d_(q+1) = 0`.
fn alpha(d: &[f64], a: usize, b: usize) -> f64 {
    if a == 0 {
        return 1.0;
    }
    let get = |k: usize| if k > d.len() { 0.0 } else { d[k - 1] };
    2.0 * (get(a) - get(b)).abs()
}

fn check_profile(d: &[f64]) -> Result<()> {
    if d.is_empty() {
        return Err(domain("empty memory profile"));
    }
    for &v in d {
        check_memory(v)?;
    }
    if d.windows(2).any(|w| w[0] <= w[1]) {
        return Err(domain("factor memories must be strictly decreasing"));
    }
    Ok(())
}

/// First failing dominance constraint `2 rho_l > alpha_{l,m}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapViolation {
    pub l: usize,
    pub m: usize,
    /// `2 rho_l - alpha_{l,m}`, nonpositive.
    pub margin: f64,
}

/// `rho_m = min{rho_{m-1}, alpha_{m,m+1}, min_{l<m}(2 rho_l - alpha_{l,m})}`
/// for `m = 1..=q`; `out[0] = rho_1`. A nonpositive dominance term is a
/// domain error.
pub fn rho_recursion(d: &[f64]) -> Result<Vec<f64>> {
    let (rho, violation) = recursion(d)?;
    match violation {
        Some(v) => Err(domain(format!(
            "gap dominance fails: 2 rho_{} - alpha_{{{},{}}} = {:.6} <= 0",
            v.l, v.l, v.m, v.margin
        ))),
        None => Ok(rho[1..].to_vec()),
    }
}

fn recursion(d: &[f64]) -> Result<(Vec<f64>, Option<GapViolation>)> {
    check_profile(d)?;
    let q = d.len();
    let mut rho: Vec<f64> = vec![1.0];
    let mut violation = None;
    for m in 1..=q {
        let mut r = rho[m - 1].min(alpha(d, m, m + 1));
        for l in 0..m {
            let margin = 2.0 * rho[l] - alpha(d, l, m);
            if margin <= EPS && violation.is_none() {
                violation = Some(GapViolation { l, m, margin });
            }
            r = r.min(margin);
        }
        rho.push(r);
    }
    Ok((rho, violation))
}

/// Outcome of the gap-dominance test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapCheck {
    pub holds: bool,
    pub violation: Option<GapViolation>,
    /// `rho_0 = 1, rho_1, ..., rho_q`, unclipped.
    pub rho: Vec<f64>,
}

pub fn gap_dominance_check(d: &[f64]) -> Result<GapCheck> {
    let (rho, violation) = recursion(d)?;
    Ok(GapCheck {
        holds: violation.is_none(),
        violation,
        rho,
    })
}

/// `b*(Delta) = 1 / (2 (1 - Delta))`.
pub fn b_star(delta: f64) -> Result<f64> {
    check_spread(delta)?;
    Ok(1.0 / (2.0 * (1.0 - delta)))
}

/// `gamma*(Delta) = (1 - 2 Delta) / (2 (1 - Delta))`.
pub fn gamma_star(delta: f64) -> Result<f64> {
    check_spread(delta)?;
    Ok((1.0 - 2.0 * delta) / (2.0 * (1.0 - delta)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningRegime {
    Common,
    FactorHeterogeneous,
    RowHeterogeneous,
}

/// Optimal polynomial exponents. `m_star`/`kappa_star` are `None` outside
/// the admissible region, with the reason in `invalid`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningResult {
    pub regime: TuningRegime,
    pub b_star: f64,
    pub m_star: Option<f64>,
    pub kappa_star: Option<f64>,
    pub invalid: Option<String>,
}

impl TuningResult {
    pub fn is_valid(&self) -> bool {
        self.invalid.is_none()
    }

    fn invalid(regime: TuningRegime, b_star: f64, why: String) -> Self {
        Self {
            regime,
            b_star,
            m_star: None,
            kappa_star: None,
            invalid: Some(why),
        }
    }
}

/// Common memory: `(1/2, 1/4, 2)` whatever `d`.
pub fn tune_common(d: f64) -> Result<TuningResult> {
    check_memory(d)?;
    Ok(TuningResult {
        regime: TuningRegime::Common,
        b_star: 0.5,
        m_star: Some(0.25),
        kappa_star: Some(2.0),
        invalid: None,
    })
}

/// Factor-wise memory with Hölder exponent `rho`:
/// `m* = gamma*(Delta) / (3/2 + rho - d)`,
/// `kappa* = (1 - Delta)(3/2 + rho - d) / ((1 - 2 Delta)(1/2 + rho - d))`.
/// Admissible when `Delta >= rho/2`, `d >= Delta` and `1/2 + rho - d > 0`.
pub fn tune_factor_hetero(d: f64, delta: f64, rho: f64) -> Result<TuningResult> {
    check_memory(d)?;
    check_spread(delta)?;
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(domain(format!("Hölder exponent {rho} outside (0, 1]")));
    }
    let regime = TuningRegime::FactorHeterogeneous;
    let b = b_star(delta)?;
    if delta < rho / 2.0 - EPS {
        return Ok(TuningResult::invalid(regime, b, format!("Delta = {delta} < rho/2 = {}", rho / 2.0)));
    }
    if d < delta - EPS {
        return Ok(TuningResult::invalid(regime, b, format!("d = {d} < Delta = {delta}")));
    }
    let low = 0.5 + rho - d;
    if low <= EPS {
        return Ok(TuningResult::invalid(regime, b, format!("1/2 + rho - d = {low} <= 0")));
    }
    let high = 1.5 + rho - d;
    Ok(TuningResult {
        regime,
        b_star: b,
        m_star: Some(gamma_star(delta)? / high),
        kappa_star: Some((1.0 - delta) * high / ((1.0 - 2.0 * delta) * low)),
        invalid: None,
    })
}

/// Row-wise memory:
/// `m_h* = (1 - 2 Delta) / ((1 - Delta)(3 - 4 Delta - 2d))`,
/// `kappa_h* = (1 - Delta)(3 - 4 Delta - 2d) / ((1 - 2 Delta)(1 - 4 Delta - 2d))`.
/// Admissible when `Delta < d` and `1 - 4 Delta - 2d > 0`.
pub fn tune_row_hetero(d: f64, delta: f64) -> Result<TuningResult> {
    check_memory(d)?;
    check_spread(delta)?;
    let regime = TuningRegime::RowHeterogeneous;
    let b = b_star(delta)?;
    if delta >= d - EPS {
        return Ok(TuningResult::invalid(regime, b, format!("Delta = {delta} >= d = {d}")));
    }
    let low = 1.0 - 4.0 * delta - 2.0 * d;
    if low <= EPS {
        return Ok(TuningResult::invalid(regime, b, format!("1 - 4 Delta - 2d = {low} <= 0")));
    }
    let high = 3.0 - 4.0 * delta - 2.0 * d;
    Ok(TuningResult {
        regime,
        b_star: b,
        m_star: Some((1.0 - 2.0 * delta) / ((1.0 - delta) * high)),
        kappa_star: Some((1.0 - delta) * high / ((1.0 - 2.0 * delta) * low)),
        invalid: None,
    })
}

/// `delta^(T,n) = B_T^(1 - 2 Delta) + ln T / (T B_T)`.
pub fn delta_rate(t_len: usize, bandwidth: f64, delta: f64) -> Result<f64> {
    if t_len < 2 {
        return Err(domain("need T >= 2"));
    }
    if !(bandwidth > 0.0 && bandwidth <= 1.0) {
        return Err(domain(format!("bandwidth {bandwidth} outside (0, 1]")));
    }
    check_spread(delta)?;
    let t = t_len as f64;
    Ok(bandwidth.powf(1.0 - 2.0 * delta) + t.ln() / (t * bandwidth))
}

/// Memory structure entering the truncation remainder `r_2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RateRegime {
    /// Common `d`; `r_2 = min(M/sqrt(n), sqrt(n) M^{2d})`.
    Common { d: f64 },
    /// Common `d` with white-noise idiosyncratic part: `r_2 = M / (ln M sqrt(n))`.
    CommonWhiteNoise,
    /// `r_2 = n^{-1/2} M^{1/2 + rho - d}`.
    FactorHetero { d: f64, rho: f64 },
    /// `r_2 = n^{-1/2} M^{1/2 - 2 Delta - d}`, defined when `4 Delta + 2d < 1`.
    RowHetero { d: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rates {
    pub r0: f64,
    pub r1: f64,
    /// `None` when the regime's remainder bound is unavailable.
    pub r2: Option<f64>,
    /// `min(r0, r1, r2)` over the available rates.
    pub r: f64,
}

/// `r_0 = sqrt(n)`, `r_1 = 1 / (M delta sqrt(n))` and the regime's `r_2`.
pub fn r_rates(n: usize, t_len: usize, max_lag: usize, bandwidth: f64, delta: f64, regime: RateRegime) -> Result<Rates> {
    if n == 0 || max_lag == 0 {
        return Err(domain("need n >= 1 and M >= 1"));
    }
    let sn = (n as f64).sqrt();
    let m = max_lag as f64;
    let r0 = sn;
    let r1 = 1.0 / (m * delta_rate(t_len, bandwidth, delta)? * sn);
    let r2 = match regime {
        RateRegime::Common { d } => {
            check_memory(d)?;
            Some((m / sn).min(sn * m.powf(2.0 * d)))
        }
        RateRegime::CommonWhiteNoise => {
            if max_lag < 2 {
                return Err(domain("M(T)/ln M(T) needs M >= 2"));
            }
            Some(m / (m.ln() * sn))
        }
        RateRegime::FactorHetero { d, rho } => {
            check_memory(d)?;
            Some(m.powf(0.5 + rho - d) / sn)
        }
        RateRegime::RowHetero { d } => {
            check_memory(d)?;
            if 4.0 * delta + 2.0 * d - 1.0 < -EPS {
                Some(m.powf(0.5 - 2.0 * delta - d) / sn)
            } else {
                None
            }
        }
    };
    let r = r2.map_or(r0.min(r1), |r2| r0.min(r1).min(r2));
    Ok(Rates { r0, r1, r2, r })
}

/// Simplified common-`d` remainder `M / sqrt(n)`; the `sqrt(n) M^{2d}` branch
/// of the full bound never binds asymptotically.
pub fn r2_common_simplified(n: usize, max_lag: usize) -> f64 {
    max_lag as f64 / (n as f64).sqrt()
}

/// `M = floor((C_M / (delta sqrt(n)))^beta)`, at least 1.
pub fn truncation_m(delta: f64, n: usize, beta: f64, c_m: f64) -> Result<usize> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(domain(format!("beta = {beta} outside (0, 1)")));
    }
    if !(c_m > 0.0) || !(delta > 0.0) || n == 0 {
        return Err(domain("need C_M > 0, delta > 0 and n >= 1"));
    }
    let raw = (c_m / (delta * (n as f64).sqrt())).powf(beta);
    // guards floor against 1.9999999999 style rounding
    Ok(((raw + 1e-12).floor() as usize).max(1))
}

/// A rendered tuning table: rows indexed by `Delta`, columns by `d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningTable {
    pub title: String,
    pub row_label: String,
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
    pub cells: Vec<Vec<Option<f64>>>,
    pub decimals: usize,
}

impl TuningTable {
    pub fn cell(&self, row: f64, col: f64) -> Option<f64> {
        let r = self.rows.iter().position(|&x| (x - row).abs() < 1e-9)?;
        let c = self.cols.iter().position(|&x| (x - col).abs() < 1e-9)?;
        self.cells[r][c]
    }

    /// CSV with `-` for inadmissible cells.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{}", self.row_label);
        for c in &self.cols {
            let _ = write!(s, ",{}", trim(*c));
        }
        s.push('\n');
        for (r, row) in self.rows.iter().zip(&self.cells) {
            let _ = write!(s, "{}", trim(*r));
            for v in row {
                match v {
                    Some(v) => {
                        let _ = write!(s, ",{v:.*}", self.decimals);
                    }
                    None => s.push_str(",-"),
                }
            }
            s.push('\n');
        }
        s
    }
}

fn trim(x: f64) -> String {
    let s = format!("{x:.3}");
    let s = s.trim_end_matches('0');
    s.strip_suffix('.').unwrap_or(s).to_string()
}

/// `0.005, 0.01, 0.05, 0.10, ..., 0.45` restricted to values `>= lo`.
pub fn standard_grid(lo: f64) -> Vec<f64> {
    let mut g = vec![0.005, 0.01];
    g.extend((1..=9).map(|k| (5 * k) as f64 / 100.0));
    g.retain(|&x| x >= lo - EPS);
    g
}

/// `kappa*(d, Delta, rho)` over `Delta, d` in the standard grid from `rho/2`.
pub fn kappa_table(rho: f64) -> Result<TuningTable> {
    let grid = standard_grid(rho / 2.0);
    let cells = grid
        .iter()
        .map(|&delta| {
            grid.iter()
                .map(|&d| Ok(tune_factor_hetero(d, delta, rho)?.kappa_star))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TuningTable {
        title: format!("kappa*(d, Delta, {rho})"),
        row_label: "delta\\d".into(),
        rows: grid.clone(),
        cols: grid,
        cells,
        decimals: 3,
    })
}

fn row_grid() -> (Vec<f64>, Vec<f64>) {
    let deltas = vec![0.0, 0.05, 0.10];
    let ds = (0..=9).map(|k| (5 * k) as f64 / 100.0).collect();
    (deltas, ds)
}

/// `b_h*(Delta)` for `Delta = 0, 0.05, ..., 0.45` as a one-row table.
pub fn bh_table() -> Result<TuningTable> {
    let cols: Vec<f64> = (0..=9).map(|k| (5 * k) as f64 / 100.0).collect();
    let row = cols.iter().map(|&x| b_star(x).map(Some)).collect::<Result<Vec<_>>>()?;
    Ok(TuningTable {
        title: "b_h*(Delta)".into(),
        row_label: "delta".into(),
        rows: vec![0.0],
        cols,
        cells: vec![row],
        decimals: 4,
    })
}

fn row_table(title: &str, pick: fn(&TuningResult) -> Option<f64>) -> Result<TuningTable> {
    let (deltas, ds) = row_grid();
    let cells = deltas
        .iter()
        .map(|&delta| {
            ds.iter()
                .map(|&d| Ok(pick(&tune_row_hetero(d, delta)?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TuningTable {
        title: title.into(),
        row_label: "delta\\d".into(),
        rows: deltas,
        cols: ds,
        cells,
        decimals: 4,
    })
}

pub fn mh_table() -> Result<TuningTable> {
    row_table("m_h*(d, Delta)", |r| r.m_star)
}

pub fn kappah_table() -> Result<TuningTable> {
    row_table("kappa_h*(d, Delta)", |r| r.kappa_star)
}
