//! Experiment configuration, Monte Carlo tables, figure datasets and run
//! manifests.

pub mod config;
pub mod figure;
pub mod montecarlo;
pub mod presets;
pub mod table;

use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::{ExperimentConfig, Method, ModelSource, TRule, Truncation, DEFAULT_TRUNCATION};
pub use figure::{run_figure, FigureKind, FigureOutput, FigureOverrides};
pub use montecarlo::{run_montecarlo, thread_pool, Cell, MonteCarloTable};
pub use presets::Preset;
pub use table::{emit_table, Format, RenderedTable};

use crate::Result;

/// Environment fallback for the worker count.
pub const THREADS_ENV: &str = "LMGDFM_THREADS";

/// `explicit`, else a positive `LMGDFM_THREADS`, else rayon's default.
pub fn resolve_threads(explicit: Option<usize>) -> Option<usize> {
    explicit.or_else(|| {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .filter(|&t: &usize| t > 0)
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub config_hash: Option<u64>,
    pub config: Option<serde_json::Value>,
    pub threads: Option<usize>,
    pub wall_time_secs: f64,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            seed: None,
            config_hash: None,
            config: None,
            threads: None,
            wall_time_secs: 0.0,
            outputs: Vec::new(),
        }
    }
}

/// Writes `name` under `dir` and records it in the manifest.
pub fn write_output(dir: &Path, name: &str, contents: &str, manifest: &mut Manifest) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    manifest.outputs.push(name.to_string());
    Ok(path)
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(manifest)?)?;
    Ok(path)
}

/// Writes `table_<method>.csv`, `table_<method>.md` and `replications.csv`.
pub fn write_montecarlo(dir: &Path, table: &MonteCarloTable, manifest: &mut Manifest) -> Result<()> {
    for &m in &table.methods {
        write_output(dir, &format!("table_{}.csv", m.name()), &emit_table(table, m, Format::Csv), manifest)?;
        write_output(dir, &format!("table_{}.md", m.name()), &emit_table(table, m, Format::Markdown), manifest)?;
    }
    let mut buf = Vec::new();
    table.write_replications_csv(&mut buf)?;
    write_output(dir, "replications.csv", &String::from_utf8(buf).expect("ascii csv"), manifest)?;
    Ok(())
}
