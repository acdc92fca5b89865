use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lmgdfm::diagnostics::r_criterion;
use lmgdfm::filterbank::{
    apply_filter_range, estimation_grid_size, feasible_bank, oracle_bank, oracle_grid_size, static_pca_estimate,
    FeasibleConfig,
};
use lmgdfm::fracsim::{analytic_spectrum, simulate_panel, ModelSpec, SimOptions};
use lmgdfm::harness::{
    resolve_threads, run_figure, run_montecarlo, write_manifest, write_montecarlo, write_output, ExperimentConfig,
    FigureKind, FigureOverrides, Manifest, Method, Preset, TRule, Truncation, DEFAULT_TRUNCATION,
};
use lmgdfm::spectral::{smoothed_spectrum, FrequencyGrid, KernelSpec, SpectralField};
use lmgdfm::theory::{
    bh_table, kappa_table, kappah_table, mh_table, tune_common, tune_factor_hetero, tune_row_hetero, TuningResult,
};
use lmgdfm::{Error, Result};

#[derive(Parser)]
#[command(name = "lmgdfm", version, about = "Long-memory dynamic factor models: simulation, dynamic PCA and diagnostics")]
struct Cli {
    /// JSON configuration (experiment, figure overrides or model, by subcommand).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (falls back to LMGDFM_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, default_value = "table12")]
    preset: String,
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a panel and write `panel.csv` (i, t, x, chi, xi).
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 200)]
        t: usize,
    },
    /// Smoothed-periodogram (or population) spectrum as `spectrum.csv`.
    Spectrum {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 200)]
        t: usize,
        /// Bandwidth `B_T = T^-b`.
        #[arg(long, default_value_t = 0.5)]
        b: f64,
        #[arg(long, default_value = "epanechnikov")]
        kernel: String,
        #[arg(long)]
        grid_size: Option<usize>,
        /// Population spectrum instead of an estimate.
        #[arg(long)]
        analytic: bool,
    },
    /// Estimate the common component of a simulated panel and report R.
    Estimate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 200)]
        t: usize,
        #[arg(long, value_enum, default_value_t = MethodArg::Dynamic)]
        method: MethodArg,
        #[arg(long, default_value_t = 0.5)]
        b: f64,
        #[arg(long)]
        max_lag: Option<usize>,
        #[arg(long, default_value = "epanechnikov")]
        kernel: String,
        /// Evaluate over every t instead of the central window.
        #[arg(long)]
        full_window: bool,
    },
    /// Population eigengap curve and its log-log slope.
    Eigengap {
        #[arg(long, default_value = "companion-rank2")]
        preset: String,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Oracle filter-coefficient norms of one row and their tail slope.
    Decay {
        #[arg(long, default_value = "rank1-rowpert")]
        preset: String,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        row: Option<usize>,
        #[arg(long)]
        max_lag: Option<usize>,
        #[arg(long)]
        grid_size: Option<usize>,
        #[arg(long)]
        h_min: Option<usize>,
    },
    /// Optimal tuning exponents, or a full table with --table.
    Tune {
        #[arg(long, value_enum, default_value_t = RegimeArg::Row)]
        regime: RegimeArg,
        #[arg(long, default_value_t = 0.0)]
        d: f64,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, default_value_t = 0.25)]
        rho: f64,
        #[arg(long, value_enum)]
        table: Option<TableArg>,
        /// Print the full result as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Monte Carlo R-criterion tables.
    Montecarlo {
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        reps: Option<usize>,
        /// Cells as `NxT`, comma separated (e.g. `20x20,50x200`).
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<MethodArg>>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        max_lag: Option<usize>,
    },
    /// Figure datasets: eigengap, decay, l1 or mainterm.
    Figure {
        kind: String,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Dynamic,
    Static,
    Oracle,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Dynamic => Method::Dynamic,
            MethodArg::Static => Method::Static,
            MethodArg::Oracle => Method::Oracle,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Common,
    Factor,
    Row,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableArg {
    Kappa,
    Bh,
    Mh,
    Kappah,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn model_spec(cli_config: Option<&Path>, model: &ModelArgs) -> Result<ModelSpec> {
    if let Some(path) = cli_config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read model {}: {e}", path.display())))?;
        let spec: ModelSpec =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("invalid model: {e}")))?;
        return match model.n {
            Some(n) => spec.truncated(n),
            None => Ok(spec),
        };
    }
    let preset: Preset = model.preset.parse()?;
    preset.spec(model.n.unwrap_or(preset.default_n()))
}

fn parse_grid(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(|cell| {
            let (n, t) = cell
                .trim()
                .split_once(['x', 'X'])
                .ok_or_else(|| Error::Config(format!("grid cell {cell:?} is not NxT")))?;
            let p = |s: &str| s.parse::<usize>().map_err(|_| Error::Config(format!("bad grid number {s:?}")));
            Ok((p(n)?, p(t)?))
        })
        .collect()
}

fn print_result(r: &TuningResult, decimals: usize, json: bool) {
    if json {
        println!("{}", serde_json::to_string_pretty(r).expect("serializable"));
        return;
    }
    match r.kappa_star {
        Some(k) => println!("{k:.decimals$}"),
        None => {
            println!("-");
            if let Some(why) = &r.invalid {
                eprintln!("inadmissible: {why}");
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let start = Instant::now();
    let threads = resolve_threads(cli.threads);
    let seed = cli.seed.unwrap_or(1);
    let out = cli.out.as_path();
    let config = cli.config.as_deref();
    let mut manifest = Manifest::new("");
    manifest.threads = threads;
    let pool = lmgdfm::harness::thread_pool(threads)?;

    match cli.command {
        Command::Simulate { model, t } => {
            manifest.command = "simulate".into();
            let spec = model_spec(config, &model)?;
            let panel = simulate_panel(&spec, t, seed, SimOptions::default())?;
            let (x, chi, xi) = (panel.observations(), panel.common().unwrap(), panel.idiosyncratic().unwrap());
            let mut csv = String::from("i,t,x,chi,xi\n");
            for i in 0..panel.n() {
                for s in 0..t {
                    let _ = writeln!(csv, "{i},{},{:.17e},{:.17e},{:.17e}", s + 1, x[(i, s)], chi[(i, s)], xi[(i, s)]);
                }
            }
            write_output(out, "panel.csv", &csv, &mut manifest)?;
            manifest.seed = Some(seed);
        }
        Command::Spectrum { model, t, b, kernel, grid_size, analytic } => {
            manifest.command = "spectrum".into();
            let spec = model_spec(config, &model)?;
            let grid = FrequencyGrid::midpoint(grid_size.unwrap_or(estimation_grid_size(t, 1)))?;
            let field = if analytic {
                pool.install(|| SpectralField::from_fn(grid, |th| analytic_spectrum(&spec, th)))?
            } else {
                let panel = simulate_panel(&spec, t, seed, SimOptions::default())?;
                let bw = (t as f64).powf(-b);
                let est = pool.install(|| smoothed_spectrum(&panel, &grid, bw, KernelSpec::from_name(&kernel)?))?;
                if !est.empty_windows.is_empty() {
                    eprintln!("warning: {} grid points had no Fourier frequency in their window", est.empty_windows.len());
                }
                est.field
            };
            let mut buf = Vec::new();
            field.write_csv(&mut buf)?;
            write_output(out, "spectrum.csv", &String::from_utf8(buf).expect("ascii"), &mut manifest)?;
            manifest.seed = Some(seed);
        }
        Command::Estimate { model, t, method, b, max_lag, kernel, full_window } => {
            manifest.command = "estimate".into();
            let spec = model_spec(config, &model)?;
            let panel = simulate_panel(&spec, t, seed, SimOptions::default())?;
            let bw = (t as f64).powf(-b);
            let m = match max_lag {
                Some(m) => m,
                None => DEFAULT_TRUNCATION.resolve(spec.n(), t, bw, spec.max_memory() - spec.min_memory())?,
            };
            let rule = if full_window { TRule::Full } else { TRule::Center };
            let (lo, hi) = rule.window(t);
            let est = pool.install(|| -> Result<_> {
                match Method::from(method) {
                    Method::Dynamic => {
                        let cfg = FeasibleConfig {
                            q: spec.q(),
                            bandwidth: bw,
                            kernel: KernelSpec::from_name(&kernel)?,
                            max_lag: m,
                            grid_size: estimation_grid_size(t, m),
                        };
                        apply_filter_range(&feasible_bank(&panel, &cfg)?, &panel, lo..=hi)
                    }
                    Method::Oracle => {
                        apply_filter_range(&oracle_bank(&spec, m, oracle_grid_size(m), None)?, &panel, lo..=hi)
                    }
                    Method::Static => {
                        Ok(static_pca_estimate(&panel, spec.q())?.columns(lo - 1, hi - lo + 1).into_owned())
                    }
                }
            })?;
            let chi = panel.common().unwrap().columns(lo - 1, hi - lo + 1).into_owned();
            let r = r_criterion(&est, &chi)?;
            println!("{r:.6}");
            let mut csv = String::from("i,t,chi_hat,chi\n");
            for i in 0..est.nrows() {
                for c in 0..est.ncols() {
                    let _ = writeln!(csv, "{i},{},{:.17e},{:.17e}", lo + c, est[(i, c)], chi[(i, c)]);
                }
            }
            write_output(out, "estimate.csv", &csv, &mut manifest)?;
            manifest.seed = Some(seed);
        }
        Command::Eigengap { preset, n } => {
            manifest.command = "eigengap".into();
            let ov = FigureOverrides { preset: Some(preset.parse()?), n, ..Default::default() };
            figure_outputs(run_figure(FigureKind::Eigengap, &ov, threads)?, out, &mut manifest)?;
        }
        Command::Decay { preset, n, row, max_lag, grid_size, h_min } => {
            manifest.command = "decay".into();
            let ov = FigureOverrides { preset: Some(preset.parse()?), n, row, max_lag, grid_size, h_min, ..Default::default() };
            figure_outputs(run_figure(FigureKind::Decay, &ov, threads)?, out, &mut manifest)?;
        }
        Command::Tune { regime, d, delta, rho, table, json } => {
            if let Some(t) = table {
                let tab = match t {
                    TableArg::Kappa => kappa_table(rho)?,
                    TableArg::Bh => bh_table()?,
                    TableArg::Mh => mh_table()?,
                    TableArg::Kappah => kappah_table()?,
                };
                print!("{}", tab.to_csv());
                return Ok(());
            }
            match regime {
                RegimeArg::Common => print_result(&tune_common(d)?, 4, json),
                RegimeArg::Factor => print_result(&tune_factor_hetero(d, delta, rho)?, 3, json),
                RegimeArg::Row => print_result(&tune_row_hetero(d, delta)?, 4, json),
            }
            return Ok(());
        }
        Command::Montecarlo { preset, reps, grid, methods, b, max_lag } => {
            manifest.command = "montecarlo".into();
            let mut cfg = match config {
                Some(path) => ExperimentConfig::load(path)?,
                None => {
                    let p: Preset = preset.as_deref().unwrap_or("table12").parse()?;
                    ExperimentConfig::preset(p, p.default_n(), 200)
                }
            };
            if let Some(g) = grid {
                cfg.grid = parse_grid(&g)?;
            }
            if let Some(r) = reps {
                cfg.replications = r;
            }
            if let Some(m) = methods {
                cfg.methods = m.into_iter().map(Method::from).collect();
            }
            if let Some(b) = b {
                cfg.bandwidth_exponent = b;
            }
            if let Some(m) = max_lag {
                cfg.truncation = Truncation::Fixed(m);
            }
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let table = run_montecarlo(&cfg, threads)?;
            write_montecarlo(out, &table, &mut manifest)?;
            for &m in &table.methods {
                println!("{}", m.name());
                print!("{}", lmgdfm::harness::emit_table(&table, m, lmgdfm::harness::Format::Markdown));
            }
            manifest.seed = Some(cfg.seed);
            manifest.config_hash = Some(cfg.hash());
            manifest.config = Some(serde_json::to_value(&cfg)?);
        }
        Command::Figure { kind, preset, n, reps } => {
            let kind: FigureKind = kind.parse()?;
            manifest.command = format!("figure {}", kind.name());
            let mut ov = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| Error::Config(format!("cannot read overrides {}: {e}", path.display())))?;
                    serde_json::from_str(&text).map_err(|e| Error::Config(format!("invalid overrides: {e}")))?
                }
                None => FigureOverrides::default(),
            };
            if let Some(p) = preset {
                ov.preset = Some(p.parse()?);
            }
            ov.n = n.or(ov.n);
            ov.reps = reps.or(ov.reps);
            ov.seed = cli.seed.or(ov.seed);
            manifest.seed = ov.seed;
            manifest.config = Some(serde_json::to_value(&ov)?);
            figure_outputs(run_figure(kind, &ov, threads)?, out, &mut manifest)?;
        }
    }
    manifest.wall_time_secs = start.elapsed().as_secs_f64();
    write_manifest(out, &manifest)?;
    Ok(())
}

fn figure_outputs(fig: lmgdfm::harness::FigureOutput, out: &Path, manifest: &mut Manifest) -> Result<()> {
    write_output(out, &format!("fig_{}.csv", fig.kind.name()), &fig.csv, manifest)?;
    let summary = serde_json::to_string_pretty(&serde_json::json!({"fit": fig.fit, "summary": fig.summary}))?;
    write_output(out, &format!("fig_{}_summary.json", fig.kind.name()), &summary, manifest)?;
    println!("{summary}");
    Ok(())
}
