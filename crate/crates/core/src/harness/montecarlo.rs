//! Replicated recovery experiments over an `(n, T)` grid.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, Method};
use crate::diagnostics::r_criterion;
use crate::error::config;
use crate::filterbank::{
    apply_filter_range, estimation_grid_size, feasible_bank, oracle_bank, oracle_grid_size, static_pca_estimate,
    FeasibleConfig, FilterBank,
};
use crate::fracsim::{derive_seed, simulate_panel, ModelSpec, SimOptions};
use crate::{Error, Result};

/// Share of failed replications at which a cell is declared invalid.
pub const MAX_FAILURE_SHARE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub n: usize,
    pub t_len: usize,
    pub method: Method,
    pub max_lag: usize,
    pub bandwidth: f64,
    /// Per replication, `None` for a failed replication.
    pub values: Vec<Option<f64>>,
    pub mean: Option<f64>,
    /// Sample standard deviation (divisor `R - 1`); zero for one replication.
    pub std: Option<f64>,
    pub failures: usize,
    pub valid: bool,
}

impl Cell {
    fn new(n: usize, t_len: usize, method: Method, max_lag: usize, bandwidth: f64, values: Vec<Option<f64>>) -> Self {
        let ok: Vec<f64> = values.iter().flatten().copied().collect();
        let failures = values.len() - ok.len();
        let valid = !ok.is_empty() && (failures as f64) < MAX_FAILURE_SHARE * values.len() as f64;
        let (mean, std) = if ok.is_empty() {
            (None, None)
        } else {
            let k = ok.len() as f64;
            let mean = ok.iter().sum::<f64>() / k;
            let var = if ok.len() > 1 {
                ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            (Some(mean), Some(var.sqrt()))
        };
        Self {
            n,
            t_len,
            method,
            max_lag,
            bandwidth,
            values,
            mean,
            std,
            failures,
            valid,
        }
    }

    pub fn replications(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloTable {
    pub config_hash: u64,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub ns: Vec<usize>,
    pub ts: Vec<usize>,
    pub cells: Vec<Cell>,
    pub wall_time_secs: f64,
}

impl MonteCarloTable {
    pub fn cell(&self, n: usize, t_len: usize, method: Method) -> Option<&Cell> {
        self.cells.iter().find(|c| c.n == n && c.t_len == t_len && c.method == method)
    }

    /// Every replication as `n,T,method,rep,value` (`nan` marks a failure).
    pub fn write_replications_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,T,method,rep,value")?;
        for c in &self.cells {
            for (r, v) in c.values.iter().enumerate() {
                match v {
                    Some(v) => writeln!(out, "{},{},{},{r},{v:.17e}", c.n, c.t_len, c.method.name())?,
                    None => writeln!(out, "{},{},{},{r},nan", c.n, c.t_len, c.method.name())?,
                }
            }
        }
        Ok(())
    }
}

/// Pool with `threads` workers, or rayon's default when `None`.
pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(config("thread count must be positive"));
        }
        b = b.num_threads(t);
    }
    b.build().map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))
}

struct CellPlan {
    spec: ModelSpec,
    n: usize,
    t_len: usize,
    fcfg: FeasibleConfig,
    oracle: Option<FilterBank>,
    q_static: usize,
}

fn plan(cfg: &ExperimentConfig, n: usize, t_len: usize) -> Result<CellPlan> {
    let spec = cfg.model.spec(n)?;
    let bandwidth = (t_len as f64).powf(-cfg.bandwidth_exponent);
    let spread = spec.max_memory() - spec.min_memory();
    let max_lag = cfg.truncation.resolve(n, t_len, bandwidth, spread)?;
    let grid_size = cfg.grid_size.unwrap_or_else(|| estimation_grid_size(t_len, max_lag));
    if grid_size < 4 * max_lag {
        return Err(config(format!("grid size {grid_size} too small for M = {max_lag}")));
    }
    let oracle = if cfg.methods.contains(&Method::Oracle) {
        Some(oracle_bank(&spec, max_lag, oracle_grid_size(max_lag), None)?)
    } else {
        None
    };
    let q_static = cfg.q_static.unwrap_or(spec.q());
    if q_static > n {
        return Err(config(format!("q_static = {q_static} exceeds n = {n}")));
    }
    Ok(CellPlan {
        fcfg: FeasibleConfig {
            q: spec.q(),
            bandwidth,
            kernel: cfg.kernel,
            max_lag,
            grid_size,
        },
        spec,
        n,
        t_len,
        oracle,
        q_static,
    })
}

fn replicate(cfg: &ExperimentConfig, p: &CellPlan, rep: usize) -> Vec<Option<f64>> {
    let seed = derive_seed(&[cfg.seed, p.n as u64, p.t_len as u64, rep as u64]);
    let panel = match simulate_panel(&p.spec, p.t_len, seed, SimOptions::default()) {
        Ok(panel) => panel,
        Err(_) => return vec![None; cfg.methods.len()],
    };
    let (lo, hi) = cfg.t_rule.window(p.t_len);
    let chi = panel.common().expect("simulated panels carry chi").columns(lo - 1, hi - lo + 1).into_owned();
    let score = |est: Result<DMatrix<f64>>| est.and_then(|e| r_criterion(&e, &chi)).ok();
    cfg.methods
        .iter()
        .map(|m| match m {
            Method::Dynamic => score(feasible_bank(&panel, &p.fcfg).and_then(|b| apply_filter_range(&b, &panel, lo..=hi))),
            Method::Oracle => score(apply_filter_range(p.oracle.as_ref().expect("planned"), &panel, lo..=hi)),
            Method::Static => score(
                static_pca_estimate(&panel, p.q_static).map(|e| e.columns(lo - 1, hi - lo + 1).into_owned()),
            ),
        })
        .collect()
}

/// Runs every cell of `cfg`; replications run concurrently on `threads`
/// workers and are aggregated in replication order.
pub fn run_montecarlo(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<MonteCarloTable> {
    cfg.validate()?;
    let start = Instant::now();
    let pool = thread_pool(threads)?;
    let mut cells = Vec::new();
    for &(n, t_len) in &cfg.grid {
        let p = pool.install(|| plan(cfg, n, t_len))?;
        let reps: Vec<Vec<Option<f64>>> =
            pool.install(|| (0..cfg.replications).into_par_iter().map(|r| replicate(cfg, &p, r)).collect());
        for (k, &m) in cfg.methods.iter().enumerate() {
            let values = reps.iter().map(|r| r[k]).collect();
            cells.push(Cell::new(n, t_len, m, p.fcfg.max_lag, p.fcfg.bandwidth, values));
        }
    }
    let ns: BTreeSet<usize> = cfg.grid.iter().map(|g| g.0).collect();
    let ts: BTreeSet<usize> = cfg.grid.iter().map(|g| g.1).collect();
    Ok(MonteCarloTable {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        methods: cfg.methods.clone(),
        ns: ns.into_iter().collect(),
        ts: ts.into_iter().collect(),
        cells,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}
