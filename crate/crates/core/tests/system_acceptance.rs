//! End-to-end acceptance runs. Prints one PASS/FAIL line per criterion and
//! exits nonzero if a hard criterion fails.
//!
//! `RLFTN_ACCEPTANCE=A1,A3` restricts the run to a subset.

mod common;

use std::time::{Duration, Instant};

use common::{free_fermion_energy, relative};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rlftn::bench::d_scaling;
use rlftn::config::ScalarKind;
use rlftn::factorize::{reconstruction_error, rsvd, tsvd, with_spectrum, Norm, RsvdParams};
use rlftn::observables::{calabrese_fit, calabrese_window, powerlaw_fit, powerlaw_window};
use rlftn::report::execute;
use rlftn::scalar::frobenius;
use rlftn::{Field, Method, Model, RsvdSettings, RunReport, TebdConfig};

mod tol {
    pub const A1_VALUES: f64 = 1e-8;
    pub const A1_ERROR_RATIO: f64 = 1.01;
    pub const A1_MIN_GOOD: usize = 99;
    pub const A2_RECONSTRUCTION: f64 = 1e-10;
    pub const A3_RELATIVE: f64 = 1e-5;
    pub const A3_TWO_SITE: f64 = 1e-8;
    pub const A4_ENERGY: f64 = 1e-8;
    pub const A4_MAGNETIZATION: f64 = 1e-6;
    pub const A6_CENTRAL_CHARGE: f64 = 0.20;
    pub const A6_RMS: f64 = 0.02;
    pub const A6_GAMMA: (f64, f64) = (2.0, 11.0);
    pub const A7_NORM: f64 = 1e-10;
    pub const A7_ISOMETRY: f64 = 1e-12;
}

mod budget {
    use std::time::Duration;
    pub const A1: Duration = Duration::from_secs(120);
    pub const A3: Duration = Duration::from_secs(600);
    pub const A4: Duration = Duration::from_secs(3600);
    pub const A5: Duration = Duration::from_secs(900);
    pub const A6: Duration = Duration::from_secs(7200);
}

/// Convergence threshold of the method-parity runs.
const A4_DELTA_E: f64 = 1e-8;
/// Convergence threshold of the critical-entropy runs.
const A6_DELTA_E: f64 = 1e-9;

struct Outcome {
    pass: bool,
    soft: bool,
    detail: String,
}

impl Outcome {
    fn hard(pass: bool, detail: String) -> Self {
        Self {
            pass,
            soft: false,
            detail,
        }
    }
}

/// A finished ground-state run kept for the structural checks.
struct Run {
    label: String,
    model: Model,
    config: TebdConfig,
    report: RunReport,
}

fn ground_state(label: String, model: Model, config: TebdConfig) -> Run {
    let report = execute(&model, &config, ScalarKind::Real).unwrap_or_else(|e| panic!("{label}: {e}"));
    println!(
        "    {label}: E={:.12} M={:.9} sweeps={} stop={:?} {:.1}s",
        report.observables.energy,
        report.observables.magnetization,
        report.convergence.sweeps,
        report.convergence.stop,
        report.wall_seconds
    );
    Run {
        label,
        model,
        config,
        report,
    }
}

fn within(limit: Duration, t: Instant) -> (bool, String) {
    let s = t.elapsed().as_secs_f64();
    (s < limit.as_secs_f64(), format!("{s:.1}s of {}s", limit.as_secs()))
}

fn spectrum(kind: usize, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|k| match kind {
            0 => 2f64.powi(-(k as i32)),
            1 => (k as f64).powi(-3),
            _ => 0.8f64.powi(k as i32),
        })
        .collect()
}

fn a1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA1);
    let (mut good, mut worst_value, mut worst_ratio) = (0, 0.0f64, 0.0f64);
    for trial in 0..100 {
        let m = rng.random_range(64..=512);
        let n = rng.random_range(64..=512);
        let chi = m.min(n).min(64) / 4;
        let a = with_spectrum::<f64>(m, n, &spectrum(trial % 3, m.min(n)), rng.random());
        let t = tsvd(a.view(), chi).unwrap();
        let r = rsvd(a.view(), &RsvdParams::new(chi, rng.random())).unwrap();
        let dev = t
            .sigma
            .iter()
            .zip(r.sigma.iter())
            .map(|(x, y)| (x - y).abs() / x)
            .fold(if t.rank() == r.rank() { 0.0 } else { f64::INFINITY }, f64::max);
        let ratio = reconstruction_error(a.view(), &r, Norm::Frobenius).unwrap()
            / reconstruction_error(a.view(), &t, Norm::Frobenius).unwrap();
        worst_value = worst_value.max(dev);
        worst_ratio = worst_ratio.max(ratio);
        if dev <= tol::A1_VALUES && ratio <= tol::A1_ERROR_RATIO {
            good += 1;
        }
    }
    let (fast, time) = within(budget::A1, start);
    Outcome::hard(
        good >= tol::A1_MIN_GOOD && fast,
        format!("{good}/100 trials within tolerance, worst value deviation {worst_value:.2e}, worst error ratio {worst_ratio:.6}, {time}"),
    )
}

fn exact_rank<T: Field>(rng: &mut ChaCha8Rng) -> f64 {
    let (m, n) = (rng.random_range(40..=300), rng.random_range(40..=300));
    let chi = 16;
    let r = rng.random_range(1..=chi);
    let values: Vec<f64> = (0..r).map(|k| 10f64.powf(-(k as f64) / 4.0)).collect();
    let a = with_spectrum::<T>(m, n, &values, rng.random());
    let f = rsvd(a.view(), &RsvdParams::new(chi, rng.random())).unwrap();
    reconstruction_error(a.view(), &f, Norm::Frobenius).unwrap() / frobenius(&a)
}

fn a2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA2);
    let mut worst = 0.0f64;
    for i in 0..40 {
        let e = if i % 2 == 0 {
            exact_rank::<f64>(&mut rng)
        } else {
            exact_rank::<Complex64>(&mut rng)
        };
        worst = worst.max(e);
    }
    Outcome::hard(
        worst <= tol::A2_RECONSTRUCTION,
        format!("worst relative reconstruction error {worst:.2e} over 40 matrices"),
    )
}

fn tebd(chi: usize, delta_e: f64, method: Method) -> TebdConfig {
    TebdConfig {
        chi,
        delta_e,
        method,
        seed: 1,
        ..TebdConfig::default()
    }
}

fn a3(runs: &mut Vec<Run>) -> Outcome {
    let start = Instant::now();
    let oracle = free_fermion_energy(16, 1.0);
    let long = ground_state(
        "A3 L=16".into(),
        Model::chain(16, 1.0, 0.5).unwrap(),
        tebd(32, 1e-10, Method::Tsvd),
    );
    let short = ground_state(
        "A3 L=2".into(),
        Model::chain(2, 1.0, 0.5).unwrap(),
        tebd(4, 1e-10, Method::Tsvd),
    );
    let e16 = relative(long.report.observables.energy, oracle);
    let e2 = (short.report.observables.energy + 5f64.sqrt()).abs();
    runs.extend([long, short]);
    let (fast, time) = within(budget::A3, start);
    Outcome::hard(
        e16 <= tol::A3_RELATIVE && e2 <= tol::A3_TWO_SITE && fast,
        format!("L=16 relative error {e16:.2e}, L=2 error {e2:.2e}, {time}"),
    )
}

fn a4(runs: &mut Vec<Run>) -> Outcome {
    let start = Instant::now();
    let rsvd = Method::Rsvd(RsvdSettings::default());
    let cases = [
        (Model::chain(32, 1.0, 5.0).unwrap(), [1.0, 1.7735, 2.0]),
        (Model::cylinder(12, 4, 1.0).unwrap(), [2.0, 3.044, 4.0]),
    ];
    let (mut de, mut dm) = (0.0f64, 0.0f64);
    for (base, fields) in cases {
        for h in fields {
            let model = base.with_field(h);
            let name = format!("A4 {} h={h}", model.name());
            let t = ground_state(format!("{name} tsvd"), model, tebd(50, A4_DELTA_E, Method::Tsvd));
            let r = ground_state(format!("{name} rsvd"), model, tebd(50, A4_DELTA_E, rsvd));
            de = de.max(relative(r.report.observables.energy, t.report.observables.energy));
            dm = dm.max(relative(
                r.report.observables.magnetization,
                t.report.observables.magnetization,
            ));
            runs.extend([t, r]);
        }
    }
    let (fast, time) = within(budget::A4, start);
    Outcome::hard(
        de <= tol::A4_ENERGY && dm <= tol::A4_MAGNETIZATION && fast,
        format!("max |dE/E| {de:.2e}, max |dM/M| {dm:.2e}, {time}"),
    )
}

fn a5() -> Outcome {
    let start = Instant::now();
    let t = d_scaling(64, &[8, 16, 32], 3, 0xA5).unwrap();
    let ratios: Vec<f64> = t.iter().map(|x| x.ratio).collect();
    let increasing = ratios.windows(2).all(|w| w[1] > w[0]);
    let slope = rlftn::bench::ratio_slope(&t);
    let (fast, time) = within(budget::A5, start);
    let tau = ratios[2];
    Outcome {
        pass: increasing && tau > 1.0 && fast,
        soft: true,
        detail: format!(
            "T_T/T_R at d=8,16,32: {:.2}, {:.2}, {:.2}; slope {slope:.3} per unit d; {time}",
            ratios[0], ratios[1], ratios[2]
        ),
    }
}

fn a6(runs: &mut Vec<Run>) -> Outcome {
    let start = Instant::now();
    let model = Model::chain(64, 1.0, 0.5).unwrap();
    let run = ground_state("A6 chi=64".into(), model, tebd(64, A6_DELTA_E, Method::Tsvd));
    let reference = ground_state("A6 chi=128".into(), model, tebd(128, A6_DELTA_E, Method::Tsvd));
    let window = calabrese_window(64);
    let fit = calabrese_fit(&run.report.observables.entropy, 64, window.clone()).unwrap();
    let fit_ref = calabrese_fit(&reference.report.observables.entropy, 64, window).unwrap();
    let (c, c_ref) = (fit.central_charge().unwrap(), fit_ref.central_charge().unwrap());
    let dc = relative(c, c_ref);
    let centre = &run.report.observables.spectra[31];
    let mut gammas = Vec::new();
    for s in 0..2 {
        let values = centre.sector(s);
        let window = powerlaw_window(values, values.len());
        gammas.push(
            powerlaw_fit(&window, false)
                .map(|f| f.gamma().unwrap().abs())
                .unwrap_or(f64::NAN),
        );
    }
    runs.extend([run, reference]);
    let gamma_ok = gammas.iter().all(|g| (tol::A6_GAMMA.0..=tol::A6_GAMMA.1).contains(g));
    let (fast, time) = within(budget::A6, start);
    Outcome::hard(
        dc <= tol::A6_CENTRAL_CHARGE && fit.rms <= tol::A6_RMS && gamma_ok && fast,
        format!(
            "c={c:.4} vs reference {c_ref:.4} ({:.1}%), rms {:.2e}, |gamma| even {:.2} odd {:.2}, {time}",
            100.0 * dc,
            fit.rms,
            gammas[0],
            gammas[1]
        ),
    )
}

/// Structural checks over every run above, and a rerun of the first checks
/// of each to confirm the trajectory reproduces bit for bit.
fn a7(runs: &[Run]) -> Outcome {
    let mut failures = Vec::new();
    let mut violations = 0;
    for run in runs {
        let a = &run.report.audit;
        if a.checks == 0 || !a.parity_ok {
            failures.push(format!("{}: parity audit", run.label));
        }
        if a.max_norm_deviation > tol::A7_NORM {
            failures.push(format!("{}: norm {:.1e}", run.label, a.max_norm_deviation));
        }
        if a.max_isometry_deviation > tol::A7_ISOMETRY {
            failures.push(format!("{}: isometry {:.1e}", run.label, a.max_isometry_deviation));
        }
        let c = &run.report.convergence;
        if c.monotonicity_violations > 0 {
            violations += c.monotonicity_violations;
            let worst = c
                .history
                .windows(2)
                .map(|w| w[1].energy - w[0].energy)
                .fold(f64::NEG_INFINITY, f64::max);
            failures.push(format!(
                "{}: energy rose at {} checks (largest rise {worst:.1e}, allowed {:.0e})",
                run.label,
                c.monotonicity_violations,
                10.0 * run.config.delta_e
            ));
        }
        let prefix = 2.min(c.history.len());
        let cfg = TebdConfig {
            max_sweeps: c.history[prefix - 1].sweep,
            ..run.config
        };
        let again = execute(&run.model, &cfg, ScalarKind::Real).unwrap();
        if again.convergence.history[..prefix] != c.history[..prefix] {
            failures.push(format!("{}: rerun diverged", run.label));
        }
    }
    let detail = if failures.is_empty() {
        format!("{} runs audited", runs.len())
    } else {
        format!(
            "{} runs audited, {violations} monotonicity violations; {}",
            runs.len(),
            failures.join("; ")
        )
    };
    Outcome::hard(failures.is_empty(), detail)
}

fn main() {
    let selected = std::env::var("RLFTN_ACCEPTANCE").ok();
    let wanted = |id: &str| selected.as_deref().is_none_or(|s| s.split(',').any(|x| x.trim() == id));
    let mut runs = Vec::new();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut step = |id: &'static str, f: &mut dyn FnMut(&mut Vec<Run>) -> Outcome| {
        if wanted(id) {
            println!("{id} running");
            let o = f(&mut runs);
            println!(
                "{id} {} {}",
                if o.pass {
                    "PASS"
                } else if o.soft {
                    "FAIL (soft)"
                } else {
                    "FAIL"
                },
                o.detail
            );
            results.push((id, o));
        }
    };
    step("A1", &mut |_| a1());
    step("A2", &mut |_| a2());
    step("A3", &mut a3);
    step("A4", &mut a4);
    step("A5", &mut |_| a5());
    step("A6", &mut a6);
    step("A7", &mut |runs| a7(runs));

    println!();
    for (id, o) in &results {
        println!(
            "{id} {}",
            if o.pass {
                "PASS"
            } else if o.soft {
                "FAIL (soft)"
            } else {
                "FAIL"
            }
        );
    }
    if results.iter().any(|(_, o)| !o.pass && !o.soft) {
        std::process::exit(1);
    }
}
