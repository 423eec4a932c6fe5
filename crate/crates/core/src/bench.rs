//! Timing ledgers, the environment-normalized speedup and comparison runs.
//!
//! For a deterministic run with compression time `T_T` and remaining time
//! `T̄_T` per iteration, and a randomized run with `T_R`, `T̄_R`, the
//! speedup is `τ = f·T_T/T_R` with `f = T̄_R/T̄_T`. The factor `f` removes
//! a uniform slowdown of one run relative to the other.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::{block_factorize, BlockDiagMatrix, SectorId, SectorRankPolicy};
use crate::config::{GridConfig, RunConfig};
use crate::factorize::{with_spectrum, Method, RsvdSettings};
use crate::report::{execute, RunReport};
use crate::seed;

/// Nominal relative uncertainty attached to speedups.
pub const NOMINAL_UNCERTAINTY: f64 = 0.10;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("randomized compression time is zero")]
    ZeroTime,
    #[error("geometric mean needs positive values, got {0}")]
    NonPositive(f64),
    #[error("geometric mean of an empty set")]
    Empty,
    #[error("empty grid")]
    EmptyGrid,
    #[error(transparent)]
    Block(#[from] crate::blocks::BlockError),
    #[error(transparent)]
    Run(#[from] crate::mps::MpsError),
}

/// Time totals of one run. Per-iteration figures divide by `iterations`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingLedger {
    pub method: String,
    pub iterations: u64,
    /// Total time inside the factorization calls.
    pub compression_seconds: f64,
    /// Total time everywhere else.
    pub other_seconds: f64,
}

impl TimingLedger {
    pub fn new(method: &str, iterations: u64, compression_seconds: f64, other_seconds: f64) -> Self {
        Self {
            method: method.to_string(),
            iterations,
            compression_seconds,
            other_seconds,
        }
    }

    /// Build a ledger directly from per-iteration figures.
    pub fn per_iteration(method: &str, compression: f64, other: f64) -> Self {
        Self::new(method, 1, compression, other)
    }

    fn per(&self, x: f64) -> f64 {
        if self.iterations == 0 {
            0.0
        } else {
            x / self.iterations as f64
        }
    }

    /// `T`: compression time per iteration.
    pub fn compression(&self) -> f64 {
        self.per(self.compression_seconds)
    }

    /// `T̄`: remaining time per iteration.
    pub fn other(&self) -> f64 {
        self.per(self.other_seconds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Speedup {
    pub tau: f64,
    pub f: f64,
}

/// `τ = f·T_T/T_R`, `f = T̄_R/T̄_T` (taken as 1 when both `T̄` vanish).
pub fn speedup(reference: &TimingLedger, candidate: &TimingLedger) -> Result<Speedup, BenchError> {
    let (tt, tr) = (reference.compression(), candidate.compression());
    if !(tr > 0.0) {
        return Err(BenchError::ZeroTime);
    }
    let (ot, or) = (reference.other(), candidate.other());
    let f = if ot > 0.0 { or / ot } else { 1.0 };
    Ok(Speedup { tau: f * tt / tr, f })
}

pub fn geometric_mean(values: &[f64]) -> Result<f64, BenchError> {
    if values.is_empty() {
        return Err(BenchError::Empty);
    }
    if let Some(&v) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(BenchError::NonPositive(v));
    }
    Ok((values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp())
}

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    pub energy: f64,
    pub magnetization: f64,
    pub correlation_length: Option<f64>,
    pub iterations: u64,
    pub compression: f64,
    pub other: f64,
    pub converged: bool,
}

impl From<&RunReport> for RunSummary {
    fn from(r: &RunReport) -> Self {
        Self {
            method: r.timing.method.clone(),
            energy: r.observables.energy,
            magnetization: r.observables.magnetization,
            correlation_length: r.observables.correlation_length,
            iterations: r.timing.iterations,
            compression: r.timing.compression(),
            other: r.timing.other(),
            converged: r.convergence.converged(),
        }
    }
}

/// One grid point: matched runs with the reference and candidate method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub model: String,
    /// Spin for the chain, width for the cylinder.
    pub shape: f64,
    pub length: usize,
    pub field: f64,
    pub chi: usize,
    pub reference: RunSummary,
    pub candidate: RunSummary,
    /// Geometric mean over repeats.
    pub tau: f64,
    pub f: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub repeats: usize,
    /// `|ΔE/E|` between methods.
    pub delta_e: f64,
    /// `|ΔM/M|` between methods.
    pub delta_m: f64,
    pub converged: bool,
}

/// Geometric mean of τ over fields for one model and χ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMean {
    pub model: String,
    pub chi: usize,
    pub tau: f64,
    /// `τ·(1 ± 0.1)`.
    pub nominal_band: (f64, f64),
    /// Smallest and largest τ over repeats and fields.
    pub empirical_range: (f64, f64),
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub points: Vec<PointResult>,
    pub means: Vec<GroupMean>,
    /// Unconverged points, left out of the means.
    pub excluded: Vec<String>,
}

impl SpeedupReport {
    pub fn csv_header() -> &'static str {
        "model,shape,L,h,chi,method,E,M,xi,T,T_other,tau,f,converged"
    }

    /// Two rows per grid point, one per method.
    pub fn csv_rows(&self) -> Vec<String> {
        let mut rows = Vec::new();
        for p in &self.points {
            for r in [&p.reference, &p.candidate] {
                rows.push(format!(
                    "{},{},{},{},{},{},{:.15e},{:.15e},{},{:.6e},{:.6e},{:.6},{:.6},{}",
                    p.model,
                    p.shape,
                    p.length,
                    p.field,
                    p.chi,
                    r.method,
                    r.energy,
                    r.magnetization,
                    r.correlation_length.map(|x| format!("{x:.10e}")).unwrap_or_default(),
                    r.compression,
                    r.other,
                    p.tau,
                    p.f,
                    r.converged
                ));
            }
        }
        rows
    }
}

fn relative(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.abs().max(b.abs())
    }
}

/// Run the reference and candidate methods on every grid point.
///
/// Matched runs share the master seed, so their initial states agree and
/// observable differences come from the factorization alone. Up to `jobs`
/// grid points run concurrently, each on one thread.
pub fn compare_runs(base: &RunConfig, grid: &GridConfig, jobs: usize) -> Result<SpeedupReport, BenchError> {
    let chis = if grid.chis.is_empty() {
        vec![base.tebd.chi]
    } else {
        grid.chis.clone()
    };
    let mut tasks = Vec::new();
    for &chi in &chis {
        for &h in &grid.fields {
            tasks.push((chi, h));
        }
    }
    if tasks.is_empty() {
        return Err(BenchError::EmptyGrid);
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<PointResult, BenchError>>>> =
        Mutex::new((0..tasks.len()).map(|_| None).collect());
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= tasks.len() {
            break;
        }
        let (chi, h) = tasks[i];
        let r = run_point(base, grid, chi, h);
        results.lock().expect("no panics while holding the lock")[i] = Some(r);
    };
    std::thread::scope(|s| {
        for _ in 0..jobs.max(1).min(tasks.len()) {
            s.spawn(worker);
        }
    });
    let mut points = Vec::new();
    for r in results.into_inner().expect("workers joined") {
        points.push(r.expect("every task ran")?);
    }

    let mut excluded = Vec::new();
    let mut means = Vec::new();
    for &chi in &chis {
        let group: Vec<&PointResult> = points.iter().filter(|p| p.chi == chi).collect();
        let mut taus = Vec::new();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for p in &group {
            if p.converged {
                taus.push(p.tau);
                lo = lo.min(p.tau_min);
                hi = hi.max(p.tau_max);
            } else {
                excluded.push(format!("{} L={} h={} chi={}", p.model, p.length, p.field, p.chi));
            }
        }
        if let Ok(tau) = geometric_mean(&taus) {
            means.push(GroupMean {
                model: base.model.name().to_string(),
                chi,
                tau,
                nominal_band: (tau * (1.0 - NOMINAL_UNCERTAINTY), tau * (1.0 + NOMINAL_UNCERTAINTY)),
                empirical_range: (lo, hi),
                points: taus.len(),
            });
        }
    }
    Ok(SpeedupReport {
        points,
        means,
        excluded,
    })
}

fn run_point(base: &RunConfig, grid: &GridConfig, chi: usize, h: f64) -> Result<PointResult, BenchError> {
    let model = base.model.with_field(h);
    let mut taus = Vec::new();
    let mut fs = Vec::new();
    let mut last = None;
    for rep in 0..grid.repeats.max(1) {
        let run = |method: Method| {
            let mut cfg = base.tebd;
            cfg.chi = chi;
            cfg.method = method;
            cfg.seed = seed::derive(base.tebd.seed, rep as u64);
            execute(&model, &cfg, base.scalar)
        };
        let r = run(grid.reference)?;
        let c = run(grid.candidate)?;
        let s = speedup(&r.timing, &c.timing)?;
        taus.push(s.tau);
        fs.push(s.f);
        last = Some((r, c));
    }
    let (r, c) = last.expect("at least one repeat");
    let (rs, cs) = (RunSummary::from(&r), RunSummary::from(&c));
    Ok(PointResult {
        model: model.name().to_string(),
        shape: model.shape_parameter(),
        length: model.length(),
        field: h,
        chi,
        tau: geometric_mean(&taus)?,
        f: geometric_mean(&fs)?,
        tau_min: taus.iter().copied().fold(f64::INFINITY, f64::min),
        tau_max: taus.iter().copied().fold(0.0, f64::max),
        repeats: taus.len(),
        delta_e: relative(rs.energy, cs.energy),
        delta_m: relative(rs.magnetization, cs.magnetization),
        converged: rs.converged && cs.converged,
        reference: rs,
        candidate: cs,
    })
}

/// Bare compression timing of one matrix family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionTiming {
    pub d: usize,
    pub dim: usize,
    pub chi: usize,
    /// Best-of-repeats seconds per factorization.
    pub tsvd_seconds: f64,
    pub rsvd_seconds: f64,
    pub ratio: f64,
    /// Largest relative deviation of retained values, rsvd vs tsvd.
    pub max_deviation: f64,
}

/// Square block-diagonal test matrix of size `dim` with two equal sectors
/// and spectra `σ_k = k^{-decay}`, interleaved between the sectors.
pub fn synthetic_block_matrix(dim: usize, decay: f64, seed: u64) -> BlockDiagMatrix<f64> {
    let half = [dim / 2 + dim % 2, dim / 2];
    let blocks = (0..2)
        .map(|s| {
            let spec: Vec<f64> = (0..half[s]).map(|k| ((2 * k + s + 1) as f64).powf(-decay)).collect();
            let m = with_spectrum::<f64>(half[s], half[s], &spec, seed::derive(seed, s as u64));
            (SectorId(s as u8), m)
        })
        .collect();
    BlockDiagMatrix::new(blocks).expect("two distinct sectors")
}

/// Time tsvd and rsvd block compression of `matrix` to rank `chi`.
pub fn time_compression(
    matrix: &BlockDiagMatrix<f64>,
    d: usize,
    chi: usize,
    repeats: usize,
    settings: RsvdSettings,
) -> Result<CompressionTiming, BenchError> {
    let policy = SectorRankPolicy::estimate(chi, matrix.len());
    let mut best = [f64::INFINITY; 2];
    let mut values = [Vec::new(), Vec::new()];
    for rep in 0..repeats.max(1) {
        for (i, method) in [
            Method::Tsvd,
            Method::Rsvd(RsvdSettings {
                seed: rep as u64,
                ..settings
            }),
        ]
        .iter()
        .enumerate()
        {
            let clock = Instant::now();
            let f = block_factorize(matrix, chi, &policy, method)?;
            best[i] = best[i].min(clock.elapsed().as_secs_f64());
            values[i] = f.retained_values();
        }
    }
    let max_deviation = values[0]
        .iter()
        .zip(&values[1])
        .map(|(a, b)| (a - b).abs() / a.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    Ok(CompressionTiming {
        d,
        dim: matrix.rows(),
        chi,
        tsvd_seconds: best[0],
        rsvd_seconds: best[1],
        ratio: best[0] / best[1],
        max_deviation,
    })
}

/// Block-form compression inputs of size `χd × χd` for each `d`.
pub fn d_scaling(chi: usize, ds: &[usize], repeats: usize, seed: u64) -> Result<Vec<CompressionTiming>, BenchError> {
    ds.iter()
        .map(|&d| {
            let m = synthetic_block_matrix(chi * d, 3.0, seed::derive(seed, d as u64));
            time_compression(&m, d, chi, repeats, RsvdSettings::default())
        })
        .collect()
}

/// Least-squares slope of `ratio` against `d`.
pub fn ratio_slope(timings: &[CompressionTiming]) -> f64 {
    let n = timings.len() as f64;
    let mx = timings.iter().map(|t| t.d as f64).sum::<f64>() / n;
    let my = timings.iter().map(|t| t.ratio).sum::<f64>() / n;
    let sxx: f64 = timings.iter().map(|t| (t.d as f64 - mx).powi(2)).sum();
    let sxy: f64 = timings.iter().map(|t| (t.d as f64 - mx) * (t.ratio - my)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}
