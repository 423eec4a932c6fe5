use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use rlftn::bench::{self, CompressionTiming, SpeedupReport};
use rlftn::config::{ConfigError, RunConfig};
use rlftn::factorize::{rsvd, tsvd, Method, RsvdSettings};
use rlftn::matrix_io::{self, MatrixData};
use rlftn::observables::{calabrese_fit, calabrese_window, powerlaw_fit, powerlaw_window, FitParams, FitResult};
use rlftn::report::{self, RunReport};

/// Hard tolerances for `bench-compare --check`.
const MAX_DELTA_E: f64 = 1e-8;
const MAX_DELTA_M: f64 = 1e-6;
const MAX_SPECTRUM_DEVIATION: f64 = 1e-8;

#[derive(Parser)]
#[command(
    name = "rlftn",
    version,
    about = "Randomized SVD inside symmetric MPS/TEBD ground-state searches"
)]
struct Cli {
    /// Print errors as a JSON object on stderr.
    #[arg(long, global = true)]
    error_json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one imaginary-time ground-state search.
    RunTebd(RunArgs),
    /// Compare deterministic and randomized compression.
    BenchCompare(BenchArgs),
    /// Truncated SVD of a matrix file.
    Factorize(FactorizeArgs),
    /// Fits and plot-ready tables from an existing report.
    Analyze(AnalyzeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Tsvd,
    Rsvd,
}

#[derive(Args)]
struct Overrides {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; RLFTN_OUT takes precedence.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Bond dimension χ (target rank).
    #[arg(long)]
    rank: Option<usize>,
    /// Sample size as a multiple of the rank.
    #[arg(long)]
    oversample: Option<f64>,
    /// Power iterations.
    #[arg(long)]
    power: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchMode {
    Grid,
    Synthetic,
    DScaling,
}

#[derive(Args)]
struct BenchArgs {
    /// Run configuration with a [grid] section (grid mode only).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "grid")]
    mode: BenchMode,
    /// Concurrent grid points.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Exit nonzero if a hard criterion fails.
    #[arg(long)]
    check: bool,
    /// Local dimensions for d-scaling.
    #[arg(long, value_delimiter = ',', default_values_t = vec![8usize, 16, 32])]
    d: Vec<usize>,
    /// Matrix size for synthetic mode.
    #[arg(long, default_value_t = 512)]
    dim: usize,
    /// Spectral decay exponent for synthetic mode.
    #[arg(long, default_value_t = 2.0)]
    decay: f64,
    /// Timing repeats for synthetic and d-scaling modes.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct FactorizeArgs {
    /// CSV or RLFMAT01 matrix file.
    input: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum FitKind {
    Powerlaw,
    Calabrese,
    All,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// report.json written by run-tebd.
    report: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    fit: FitKind,
    /// Bond for the spectrum fit; defaults to the central bond.
    #[arg(long)]
    bond: Option<usize>,
    /// Sector for the spectrum fit, 0 even or 1 odd.
    #[arg(long, default_value_t = 0)]
    sector: usize,
    /// Fix C2 = 0 in the power-law fit.
    #[arg(long)]
    two_d: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn out_dir(flag: Option<&Path>, config: Option<&Path>) -> Option<PathBuf> {
    std::env::var_os("RLFTN_OUT")
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| flag.map(Path::to_path_buf))
        .or_else(|| config.map(Path::to_path_buf))
}

fn rsvd_settings(o: &Overrides, base: RsvdSettings) -> RsvdSettings {
    RsvdSettings {
        oversample_ratio: o.oversample.unwrap_or(base.oversample_ratio),
        power: o.power.unwrap_or(base.power),
        ..base
    }
}

fn apply_overrides(cfg: &mut RunConfig, o: &Overrides) -> Result<()> {
    if let Some(seed) = o.seed {
        cfg.tebd.seed = seed;
    }
    if let Some(chi) = o.rank {
        cfg.tebd.chi = chi;
    }
    let base = match cfg.tebd.method {
        Method::Rsvd(s) => s,
        Method::Tsvd => RsvdSettings::default(),
    };
    let settings = rsvd_settings(o, base);
    cfg.tebd.method = match (o.method, cfg.tebd.method) {
        (Some(MethodArg::Tsvd), _) => Method::Tsvd,
        (Some(MethodArg::Rsvd), _) | (None, Method::Rsvd(_)) => Method::Rsvd(settings),
        (None, Method::Tsvd) => Method::Tsvd,
    };
    if let Some(g) = cfg.grid.as_mut() {
        for m in [&mut g.reference, &mut g.candidate] {
            if let Method::Rsvd(s) = m {
                *s = rsvd_settings(o, *s);
            }
        }
    }
    cfg.tebd.validate()?;
    Ok(())
}

fn load(path: &Path) -> Result<RunConfig> {
    RunConfig::from_path(path).map_err(|e| anyhow!(e))
}

fn run_tebd(args: &RunArgs) -> Result<ExitCode> {
    let mut cfg = load(&args.config)?;
    apply_overrides(&mut cfg, &args.overrides)?;
    let r = report::execute(&cfg.model, &cfg.tebd, cfg.scalar)?;
    match out_dir(args.overrides.out.as_deref(), cfg.out.as_deref()) {
        Some(dir) => {
            r.write_dir(&dir)
                .with_context(|| format!("writing {}", dir.display()))?;
            fs::write(dir.join("config.toml"), cfg.to_toml())?;
            println!(
                "E = {:.12}  M = {:.10}  sweeps = {}  stop = {:?}  -> {}",
                r.observables.energy,
                r.observables.magnetization,
                r.convergence.sweeps,
                r.convergence.stop,
                dir.display()
            );
        }
        None => println!("{}", r.to_json()),
    }
    Ok(ExitCode::SUCCESS)
}

fn write_outputs(dir: Option<&Path>, csv: &str, summary: &serde_json::Value) -> Result<()> {
    match dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("bench.csv"), csv)?;
            fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary)?)?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn timing_csv(rows: &[CompressionTiming]) -> String {
    let mut s = String::from("d,dim,chi,tsvd_seconds,rsvd_seconds,ratio,max_deviation\n");
    for t in rows {
        s += &format!(
            "{},{},{},{:.6e},{:.6e},{:.4},{:.3e}\n",
            t.d, t.dim, t.chi, t.tsvd_seconds, t.rsvd_seconds, t.ratio, t.max_deviation
        );
    }
    s
}

fn bench_compare(args: &BenchArgs) -> Result<ExitCode> {
    let o = &args.overrides;
    let settings = rsvd_settings(o, RsvdSettings::default());
    let (csv, summary, hard_ok) = match args.mode {
        BenchMode::Grid => {
            let path = args
                .config
                .as_ref()
                .ok_or_else(|| anyhow!("grid mode needs --config"))?;
            let mut cfg = load(path)?;
            apply_overrides(&mut cfg, o)?;
            let grid = cfg
                .grid
                .clone()
                .ok_or_else(|| anyhow!("{}: no [grid] section", path.display()))?;
            let rep: SpeedupReport = bench::compare_runs(&cfg, &grid, args.jobs)?;
            let mut csv = SpeedupReport::csv_header().to_string() + "\n";
            for row in rep.csv_rows() {
                csv += &row;
                csv.push('\n');
            }
            let failures: Vec<String> = rep
                .points
                .iter()
                .filter(|p| !p.converged || p.delta_e > MAX_DELTA_E || p.delta_m > MAX_DELTA_M)
                .map(|p| {
                    format!(
                        "h={} chi={}: dE={:.2e} dM={:.2e} converged={}",
                        p.field, p.chi, p.delta_e, p.delta_m, p.converged
                    )
                })
                .collect();
            let summary = json!({
                "mode": "grid",
                "config": cfg.to_toml(),
                "means": rep.means,
                "excluded": rep.excluded,
                "points": rep.points,
                "hard": { "max_delta_e": MAX_DELTA_E, "max_delta_m": MAX_DELTA_M, "failures": failures },
                "soft": { "speedup_above_one": rep.means.iter().all(|m| m.tau > 1.0) },
            });
            (csv, summary, failures.is_empty())
        }
        BenchMode::Synthetic | BenchMode::DScaling => {
            let seed = o.seed.unwrap_or(0);
            let rows = if matches!(args.mode, BenchMode::Synthetic) {
                let chi = o.rank.unwrap_or(args.dim / 8).max(1);
                let m = bench::synthetic_block_matrix(args.dim, args.decay, seed);
                vec![bench::time_compression(&m, 0, chi, args.repeats, settings)?]
            } else {
                let chi = o.rank.unwrap_or(64);
                bench::d_scaling(chi, &args.d, args.repeats, seed)?
            };
            let increasing = rows.windows(2).all(|w| w[1].ratio > w[0].ratio);
            let worst = rows.iter().map(|t| t.max_deviation).fold(0.0, f64::max);
            let summary = json!({
                "mode": if matches!(args.mode, BenchMode::Synthetic) { "synthetic" } else { "d_scaling" },
                "timings": rows,
                "slope": bench::ratio_slope(&rows),
                "hard": { "max_spectrum_deviation": worst, "limit": MAX_SPECTRUM_DEVIATION },
                "soft": { "ratio_increasing": increasing, "final_ratio_above_one": rows.last().map(|t| t.ratio > 1.0) },
            });
            (timing_csv(&rows), summary, worst <= MAX_SPECTRUM_DEVIATION)
        }
    };
    let dir = out_dir(o.out.as_deref(), None);
    write_outputs(dir.as_deref(), &csv, &summary)?;
    if args.check && !hard_ok {
        eprintln!("hard criteria failed: {}", summary["hard"]);
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn factorize(args: &FactorizeArgs) -> Result<ExitCode> {
    let o = &args.overrides;
    let rank = o.rank.ok_or_else(|| anyhow!("--rank is required"))?;
    let data = matrix_io::read_path(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let settings = RsvdSettings {
        seed: o.seed.unwrap_or(0),
        ..rsvd_settings(o, RsvdSettings::default())
    };
    let method = o.method.unwrap_or(MethodArg::Tsvd);
    let (m, n) = data.shape();
    let mut params = settings.params_for(rank, settings.seed);
    params.oversample = params.oversample.min(m.min(n));
    let (sigma, u, v) = match &data {
        MatrixData::Real(a) => {
            let f = match method {
                MethodArg::Tsvd => tsvd(a.view(), rank)?,
                MethodArg::Rsvd => rsvd(a.view(), &params)?,
            };
            (
                f.sigma.to_vec(),
                MatrixData::Real(f.left),
                MatrixData::Real(f.right_adj),
            )
        }
        MatrixData::Complex(a) => {
            let f = match method {
                MethodArg::Tsvd => tsvd(a.view(), rank)?,
                MethodArg::Rsvd => rsvd(a.view(), &params)?,
            };
            (
                f.sigma.to_vec(),
                MatrixData::Complex(f.left),
                MatrixData::Complex(f.right_adj),
            )
        }
    };
    let line = sigma
        .iter()
        .map(|s| matrix_io::format_real(*s))
        .collect::<Vec<_>>()
        .join(",");
    match out_dir(o.out.as_deref(), None) {
        Some(dir) => {
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("spectrum.csv"), format!("{line}\n"))?;
            matrix_io::write_csv(fs::File::create(dir.join("u.csv"))?, &u)?;
            matrix_io::write_csv(fs::File::create(dir.join("vh.csv"))?, &v)?;
            println!("{line}");
        }
        None => println!("{line}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn fit_row(kind: &str, target: &str, f: &FitResult) -> String {
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.10e}")).unwrap_or_default();
    let (c1, c2, gamma, a, c) = match f.params {
        FitParams::PowerLaw { c1, c2, gamma } => (Some(c1), Some(c2), Some(gamma), None, None),
        FitParams::Calabrese { a, c } => (None, None, None, Some(a), Some(c)),
    };
    format!(
        "{kind},{target},{},{},{},{},{},{:.6e},{},{}\n",
        opt(c1),
        opt(c2),
        opt(gamma),
        opt(a),
        opt(c),
        f.rms,
        f.window.0,
        f.window.1
    )
}

fn analyze(args: &AnalyzeArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.report).with_context(|| format!("reading {}", args.report.display()))?;
    let r = RunReport::from_json(&text).with_context(|| format!("parsing {}", args.report.display()))?;
    let l = r.model.length();
    let mut fits = String::from("fit,target,c1,c2,gamma,a,c,rms,first,last\n");
    let mut results = serde_json::Map::new();
    if matches!(args.fit, FitKind::Powerlaw | FitKind::All) {
        if r.observables.spectra.is_empty() {
            bail!("report has no bond spectra; cannot fit a power law");
        }
        let bond = args.bond.unwrap_or(l / 2);
        let spec = r
            .observables
            .spectra
            .iter()
            .find(|b| b.bond == bond)
            .ok_or_else(|| anyhow!("report has no spectrum for bond {bond}"))?;
        if args.sector > 1 {
            bail!("sector must be 0 or 1");
        }
        let values = spec.sector(args.sector);
        let window = powerlaw_window(values, values.len());
        let f = powerlaw_fit(&window, args.two_d)?;
        fits += &fit_row("powerlaw", &format!("bond{bond}:s{}", args.sector), &f);
        results.insert("powerlaw".into(), serde_json::to_value(f)?);
    }
    if matches!(args.fit, FitKind::Calabrese | FitKind::All) {
        if r.observables.entropy.is_empty() {
            bail!("report has no entropy profile; cannot fit");
        }
        let f = calabrese_fit(&r.observables.entropy, l, calabrese_window(l))?;
        fits += &fit_row("calabrese", "entropy", &f);
        results.insert("calabrese".into(), serde_json::to_value(f)?);
    }
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("fits.csv"), &fits)?;
            fs::write(dir.join("fits.json"), serde_json::to_string_pretty(&results)?)?;
            report::write_spectra(&r, fs::File::create(dir.join("spectra.csv"))?)?;
            report::write_entropy(&r, fs::File::create(dir.join("entropy.csv"))?)?;
            report::write_history(&r, fs::File::create(dir.join("history.csv"))?)?;
            let mut corr = String::from("r,C\n");
            for (k, c) in r.observables.correlations.iter().enumerate() {
                corr += &format!("{k},{c:.15e}\n");
            }
            fs::write(dir.join("correlations.csv"), corr)?;
            print!("{fits}");
        }
        None => print!("{fits}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn error_kind(e: &anyhow::Error) -> (&'static str, u8) {
    if e.downcast_ref::<ConfigError>().is_some() {
        ("config", 2)
    } else if e.downcast_ref::<rlftn::matrix_io::MatrixIoError>().is_some() {
        ("input", 2)
    } else if e.downcast_ref::<std::io::Error>().is_some() {
        ("io", 1)
    } else if e.downcast_ref::<rlftn::observables::FitError>().is_some() {
        ("fit", 1)
    } else {
        ("error", 1)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::RunTebd(a) => run_tebd(a),
        Command::BenchCompare(a) => bench_compare(a),
        Command::Factorize(a) => factorize(a),
        Command::Analyze(a) => analyze(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let (kind, code) = error_kind(&e);
            if cli.error_json {
                let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
                eprintln!(
                    "{}",
                    json!({ "error": kind, "message": format!("{e:#}"), "causes": chain })
                );
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(code)
        }
    }
}
