//! `semimart` command line: `simulate`, `diagnose`, `mvt`, `density`.
//!
//! Exit codes: 0 on success, 2 when `diagnose` ends `UNDETERMINED`, 1 on
//! usage or IO errors.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use semimart_core::config::{GridConfig, RunConfig, SchemeName};
use semimart_core::density::{supermartingale_density_test, MIN_PATHS};
use semimart_core::export::{write_bundle_csv, write_field_csv};
use semimart_core::model::CoefficientTable;
use semimart_core::report::fmt_float;
use semimart_core::stats::mean;
use semimart_core::{
    check_structure, classify_market, compute_mvt, detect_explosion, doleans_exponential, emit_report,
    martingale_classification, simulate, Classification, DiagnoseConfig, Error, ExplosionConfig, ModelParams,
    ReportFormat, StoppingTimeField, Strategy, WealthPath,
};
use semimart_core::wealth::integrate;

#[derive(Parser, Debug)]
#[command(name = "semimart", version, about = "Arbitrage diagnostics for simulated semimartingale markets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate paths and write S, M, A and increment CSVs.
    Simulate(RunArgs),
    /// Run the full classification pipeline and write a report.
    Diagnose(DiagnoseArgs),
    /// Mean-variance trade-off table and explosion evidence.
    Mvt(MvtArgs),
    /// Density process statistics from a start time.
    Density(DensityArgs),
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// JSON run configuration; explicit flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    s0: Option<f64>,
    /// Extra model parameter `key=value` (repeatable).
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, f64)>,
    /// Coefficient table (JSON) for the `custom` model.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Paths per processing chunk.
    #[arg(long, default_value_t = 512)]
    chunk: usize,
}

#[derive(Args, Debug)]
struct MvtArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Refinement levels of the explosion test at σ = 0 (0 skips it).
    #[arg(long, default_value_t = 6)]
    levels: usize,
}

#[derive(Args, Debug)]
struct DensityArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Start time σ (rounded up to the grid).
    #[arg(long = "start", default_value_t = 0.0)]
    start: f64,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SchemeArg {
    Uniform,
    Geometric,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FormatArg {
    Json,
    CsvBundle,
}

fn parse_param(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let value = v.trim().parse::<f64>().map_err(|e| format!("bad value for `{k}`: {e}"))?;
    Ok((k.trim().to_string(), value))
}

/// Runs the command line and returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<i32, Error> {
    let run = match &command {
        Command::Simulate(r) => r,
        Command::Diagnose(a) => &a.run,
        Command::Mvt(a) => &a.run,
        Command::Density(a) => &a.run,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = run.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| match command {
        Command::Simulate(r) => cmd_simulate(&r),
        Command::Diagnose(a) => cmd_diagnose(&a),
        Command::Mvt(a) => cmd_mvt(&a),
        Command::Density(a) => cmd_density(&a),
    })
}

/// Merges the optional config file with the explicit flags.
fn resolve(args: &RunArgs) -> Result<RunConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig {
            model: String::new(),
            params: ModelParams::new(),
            grid: GridConfig::uniform(1.0, 256),
            n_paths: 1000,
            seed: 0,
        },
    };
    if let Some(m) = &args.model {
        if *m != cfg.model {
            cfg.params = ModelParams::new();
        }
        cfg.model = m.clone();
    }
    if cfg.model.is_empty() {
        return Err(Error::Config("--model (or --config) is required".into()));
    }
    for (key, value) in [("mu", args.mu), ("sigma", args.sigma), ("s0", args.s0)] {
        if let Some(v) = value {
            cfg.params.values.insert(key.into(), v);
        }
    }
    for (k, v) in &args.params {
        cfg.params.values.insert(k.clone(), *v);
    }
    if let Some(path) = &args.table {
        let table: CoefficientTable = serde_json::from_str(&fs::read_to_string(path)?)?;
        cfg.params.table = Some(table);
    }
    if let Some(t) = args.horizon {
        cfg.grid.horizon = t;
    }
    if let Some(n) = args.steps {
        cfg.grid.steps = n;
    }
    if let Some(s) = args.scheme {
        cfg.grid.scheme = match s {
            SchemeArg::Uniform => SchemeName::Uniform,
            SchemeArg::Geometric => SchemeName::Geometric,
        };
    }
    if args.eps.is_some() {
        cfg.grid.eps = args.eps;
    }
    if args.ratio.is_some() {
        cfg.grid.ratio = args.ratio;
    }
    if let Some(p) = args.paths {
        cfg.n_paths = p;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(args: &RunArgs, default: &str) -> Result<PathBuf, Error> {
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn cmd_simulate(args: &RunArgs) -> Result<i32, Error> {
    let cfg = resolve(args)?;
    let model = cfg.model()?;
    let grid = cfg.grid.build()?;
    let bundle = simulate(&model, &grid, cfg.n_paths, cfg.seed)?;
    let dir = out_dir(args, "bundle")?;
    let files = write_bundle_csv(&bundle, &dir)?;
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(0)
}

fn cmd_diagnose(args: &DiagnoseArgs) -> Result<i32, Error> {
    let cfg = resolve(&args.run)?;
    let model = cfg.model()?;
    let mut config = DiagnoseConfig::new(cfg.grid.clone(), cfg.n_paths, cfg.seed);
    config.chunk_size = args.chunk;
    let report = classify_market(&model, &config);
    let (format, default) = match args.format {
        FormatArg::Json => (ReportFormat::Json, "report.json"),
        FormatArg::CsvBundle => (ReportFormat::CsvBundle, "report"),
    };
    let out = args.run.out.clone().unwrap_or_else(|| PathBuf::from(default));
    emit_report(&report, &out, format)?;
    println!("{}", report.classification.as_str());
    if let Some(e) = &report.error {
        eprintln!("error: {e}");
    }
    Ok(if report.classification == Classification::Undetermined { 2 } else { 0 })
}

fn cmd_mvt(args: &MvtArgs) -> Result<i32, Error> {
    let cfg = resolve(&args.run)?;
    let model = cfg.model()?;
    let grid = cfg.grid.build()?;
    let bundle = simulate(&model, &grid, cfg.n_paths, cfg.seed)?;
    let (field, _) = check_structure(&bundle, semimart_core::structure::DEFAULT_TOL)?;
    let mvt = compute_mvt(&bundle, &field, &StoppingTimeField::constant(cfg.n_paths, 0))?;
    let dir = out_dir(&args.run, "mvt")?;
    write_field_csv(BufWriter::new(File::create(dir.join("K.csv"))?), &mvt.k, 0, 0)?;
    println!("mean K_0^T = {}", fmt_float(mean(&mvt.terminal())));
    if args.levels > 0 {
        let explosion = ExplosionConfig { seed: cfg.seed, ..ExplosionConfig::for_horizon(grid.horizon()) };
        let verdict = detect_explosion(&model, 0.0, args.levels, &explosion)?;
        verdict.write_csv(BufWriter::new(File::create(dir.join("explosion.csv"))?))?;
        println!("explosion at sigma = 0: diverges = {}", verdict.diverges);
    }
    Ok(0)
}

fn cmd_density(args: &DensityArgs) -> Result<i32, Error> {
    let cfg = resolve(&args.run)?;
    if cfg.n_paths < MIN_PATHS {
        return Err(Error::TooFewPaths { required: MIN_PATHS, got: cfg.n_paths });
    }
    let model = cfg.model()?;
    let grid = cfg.grid.build()?;
    let bundle = simulate(&model, &grid, cfg.n_paths, cfg.seed)?;
    let (field, _) = check_structure(&bundle, semimart_core::structure::DEFAULT_TOL)?;
    let sigma = StoppingTimeField::at_time(&grid, cfg.n_paths, args.start);
    let dens = doleans_exponential(&bundle, &field, &sigma)?;
    let martingale = martingale_classification(&dens, args.level)?;

    let mut wealths: Vec<(String, WealthPath)> = Vec::new();
    for k in 0..bundle.dim {
        if bundle.s.component(k).min() >= 0.0 {
            let hold = Strategy::hold_until(model.s0()[k], grid.steps(), bundle.dim, k, &StoppingTimeField::constant(cfg.n_paths, grid.steps()));
            wealths.push((format!("S{}", k + 1), integrate(&hold, &bundle)?));
        }
    }
    let refs: Vec<(&str, &WealthPath)> = wealths.iter().map(|(id, w)| (id.as_str(), w)).collect();
    let t0 = grid.time(sigma.index[0]);
    let h = grid.horizon() - t0;
    let times = [t0, t0 + 0.25 * h, t0 + 0.5 * h, t0 + h];
    let test = supermartingale_density_test(&dens, &refs, &times, args.level)?;

    let dir = out_dir(&args.run, "density")?;
    write_field_csv(BufWriter::new(File::create(dir.join("Z.csv"))?), &dens.z, 0, 0)?;
    test.write_csv(BufWriter::new(File::create(dir.join("density_tests.csv"))?))?;
    let summary = serde_json::json!({ "martingale": martingale, "supermartingale": test });
    write_json(&dir.join("density.json"), &summary)?;
    println!(
        "E[Z_T] = {} ± {} ({:?}); supermartingale test passes: {}",
        fmt_float(martingale.mean),
        fmt_float(martingale.std_error),
        martingale.verdict,
        test.verdict
    );
    Ok(0)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
