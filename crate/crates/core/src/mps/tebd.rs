//! Second-order Trotter sweeps and the imaginary-time convergence driver.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::update::{apply_gate_and_compress, PreparedGate};
use super::{MpsError, SymmetricMps};
use crate::bench::TimingLedger;
use crate::blocks::{default_slack, SectorRankKind, SectorRankPolicy};
use crate::factorize::Method;
use crate::models::{build_gate, GateForm, Model, DEFAULT_SCHMIDT_TOL};
use crate::observables;
use crate::scalar::Field;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TebdConfig {
    pub chi: usize,
    pub delta_e: f64,
    pub dt0: f64,
    pub step_factor: f64,
    /// Sweeps between energy checks.
    pub check_interval: usize,
    pub dt_min: f64,
    pub max_sweeps: usize,
    pub method: Method,
    pub gate_form: GateForm,
    pub sector_policy: SectorRankKind,
    /// Per-sector slack `c`; `None` picks `max(2, ⌈0.05·χ/2⌉)`.
    pub slack: Option<usize>,
    pub schmidt_tol: f64,
    pub seed: u64,
    /// Audit the state at every check.
    pub audit: bool,
    /// Keep the bond spectra of every check.
    pub record_spectra: bool,
}

impl Default for TebdConfig {
    fn default() -> Self {
        Self {
            chi: 32,
            delta_e: 1e-10,
            dt0: 0.4,
            step_factor: 0.7,
            check_interval: 10,
            dt_min: 1e-5,
            max_sweeps: 100_000,
            method: Method::Tsvd,
            gate_form: GateForm::Block,
            sector_policy: SectorRankKind::PerSectorEstimate,
            slack: None,
            schmidt_tol: DEFAULT_SCHMIDT_TOL,
            seed: 0,
            audit: true,
            record_spectra: false,
        }
    }
}

impl TebdConfig {
    pub fn validate(&self) -> Result<(), MpsError> {
        let bad = |m: String| Err(MpsError::Invalid(m));
        if self.chi == 0 {
            return bad("chi must be at least 1".into());
        }
        if !(self.delta_e > 0.0) {
            return bad(format!("delta_e must be positive, got {}", self.delta_e));
        }
        if !(self.dt0 > 0.0 && self.dt0.is_finite()) {
            return bad(format!("dt0 must be positive, got {}", self.dt0));
        }
        if !(self.step_factor > 0.0 && self.step_factor < 1.0) {
            return bad(format!("step_factor must lie in (0, 1), got {}", self.step_factor));
        }
        if self.check_interval == 0 {
            return bad("check_interval must be at least 1".into());
        }
        if !(self.dt_min > 0.0) {
            return bad(format!("dt_min must be positive, got {}", self.dt_min));
        }
        if self.max_sweeps == 0 {
            return bad("max_sweeps must be at least 1".into());
        }
        if let Method::Rsvd(s) = &self.method {
            if !(s.oversample_ratio >= 1.0) {
                return bad(format!(
                    "oversample ratio must be at least 1, got {}",
                    s.oversample_ratio
                ));
            }
        }
        Ok(())
    }

    pub fn policy(&self) -> SectorRankPolicy {
        let slack = self.slack.unwrap_or_else(|| default_slack(self.chi, 2));
        SectorRankPolicy {
            kind: self.sector_policy,
            chi: self.chi,
            slack,
        }
    }
}

/// Gates for every bond at one time step, full and half step.
#[derive(Debug, Clone)]
pub struct GateSet<T> {
    pub dt: f64,
    pub full: Vec<PreparedGate<T>>,
    pub half: Vec<PreparedGate<T>>,
}

impl<T: Field> GateSet<T> {
    pub fn new(model: &Model, dt: f64, form: GateForm, schmidt_tol: f64) -> Result<Self, MpsError> {
        let basis = super::PhysBasis::new(&model.local_charges());
        let charges = model.local_charges();
        let make = |step: f64| -> Result<Vec<PreparedGate<T>>, MpsError> {
            model
                .bond_hamiltonians()
                .iter()
                .map(|h| {
                    Ok(PreparedGate::new(
                        &build_gate(h, &charges, step, form, schmidt_tol)?,
                        &basis,
                    ))
                })
                .collect()
        };
        Ok(Self {
            dt,
            full: make(dt)?,
            half: make(dt / 2.0)?,
        })
    }
}

/// Running compression bookkeeping for one run.
#[derive(Debug, Clone)]
pub(crate) struct Compressor {
    pub chi: usize,
    pub policy: SectorRankPolicy,
    pub method: Method,
    pub base_seed: u64,
    pub count: u64,
    pub seconds: f64,
    pub max_discarded: f64,
}

impl Compressor {
    pub fn new(chi: usize, policy: SectorRankPolicy, method: Method, master_seed: u64) -> Self {
        use rand::RngCore;
        let base_seed = seed::substream(master_seed, seed::Stream::Rsvd).next_u64();
        Self {
            chi,
            policy,
            method,
            base_seed,
            count: 0,
            seconds: 0.0,
            max_discarded: 0.0,
        }
    }

    fn apply<T: Field>(&mut self, mps: &mut SymmetricMps<T>, j: usize, gate: &PreparedGate<T>) -> Result<(), MpsError> {
        let method = match self.method {
            Method::Tsvd => Method::Tsvd,
            Method::Rsvd(mut s) => {
                s.seed = seed::derive(self.base_seed, self.count);
                Method::Rsvd(s)
            }
        };
        let stats = apply_gate_and_compress(mps, j, gate, self.chi, &self.policy, &method)?;
        self.count += 1;
        self.seconds += stats.seconds;
        self.max_discarded = self.max_discarded.max(stats.discarded);
        Ok(())
    }

    fn layer<T: Field>(
        &mut self,
        mps: &mut SymmetricMps<T>,
        gates: &[PreparedGate<T>],
        parity: usize,
    ) -> Result<(), MpsError> {
        for j in (parity..gates.len()).step_by(2) {
            self.apply(mps, j, &gates[j])?;
        }
        Ok(())
    }
}

/// One second-order Trotter step: even bonds half step, odd bonds full
/// step, even bonds half step. Bond `j` joins sites `j` and `j+1`.
pub fn sweep<T: Field>(
    mps: &mut SymmetricMps<T>,
    gates: &GateSet<T>,
    chi: usize,
    policy: &SectorRankPolicy,
    method: &Method,
) -> Result<(), MpsError> {
    let mut c = Compressor::new(chi, *policy, *method, 0);
    evolve_with(mps, gates, 1, &mut c)
}

/// `n` consecutive sweeps with adjacent even half steps fused into full steps.
pub fn evolve<T: Field>(
    mps: &mut SymmetricMps<T>,
    gates: &GateSet<T>,
    n: usize,
    chi: usize,
    policy: &SectorRankPolicy,
    method: &Method,
) -> Result<(), MpsError> {
    let mut c = Compressor::new(chi, *policy, *method, 0);
    evolve_with(mps, gates, n, &mut c)
}

pub(crate) fn evolve_with<T: Field>(
    mps: &mut SymmetricMps<T>,
    gates: &GateSet<T>,
    n: usize,
    c: &mut Compressor,
) -> Result<(), MpsError> {
    if n == 0 {
        return Ok(());
    }
    c.layer(mps, &gates.half, 0)?;
    for i in 0..n {
        c.layer(mps, &gates.full, 1)?;
        if i + 1 < n {
            c.layer(mps, &gates.full, 0)?;
        }
    }
    c.layer(mps, &gates.half, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stop {
    Running,
    Converged,
    /// The time step fell below `dt_min`.
    DtFloor,
    MaxSweeps,
}

/// One energy check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub sweep: usize,
    pub dt: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceState {
    pub dt: f64,
    pub history: Vec<Check>,
    /// Time steps in use, in order.
    pub dt_schedule: Vec<f64>,
    pub energy_at_reduction: Option<f64>,
    pub sweeps: usize,
    pub stop: Stop,
    /// Checks whose energy rose by more than `10·δE`.
    pub monotonicity_violations: usize,
}

impl ConvergenceState {
    pub fn new(dt0: f64) -> Self {
        Self {
            dt: dt0,
            history: Vec::new(),
            dt_schedule: vec![dt0],
            energy_at_reduction: None,
            sweeps: 0,
            stop: Stop::Running,
            monotonicity_violations: 0,
        }
    }

    pub fn converged(&self) -> bool {
        self.stop == Stop::Converged
    }

    pub fn energy(&self) -> Option<f64> {
        self.history.last().map(|c| c.energy)
    }

    /// Record a check; returns `true` when the step should shrink.
    fn record(&mut self, energy: f64, delta_e: f64) -> bool {
        let prev = self.energy();
        self.history.push(Check {
            sweep: self.sweeps,
            dt: self.dt,
            energy,
        });
        match prev {
            Some(p) => {
                if energy > p + 10.0 * delta_e {
                    self.monotonicity_violations += 1;
                }
                (energy - p).abs() < delta_e
            }
            None => false,
        }
    }
}

/// Worst structural audit values over all checks.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AuditSummary {
    pub checks: usize,
    pub parity_ok: bool,
    pub max_norm_deviation: f64,
    pub max_isometry_deviation: f64,
}

impl AuditSummary {
    fn add(&mut self, a: &super::Audit) {
        if self.checks == 0 {
            self.parity_ok = true;
        }
        self.checks += 1;
        self.parity_ok &= a.parity_ok;
        self.max_norm_deviation = self.max_norm_deviation.max(a.norm_deviation);
        self.max_isometry_deviation = self.max_isometry_deviation.max(a.isometry_deviation);
    }
}

/// Bond spectra at one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSnapshot {
    pub sweep: usize,
    pub dt: f64,
    pub bonds: Vec<[Vec<f64>; 2]>,
}

#[derive(Debug, Clone)]
pub struct TebdOutcome<T> {
    /// Canonical final state.
    pub state: SymmetricMps<T>,
    pub convergence: ConvergenceState,
    pub timing: TimingLedger,
    pub audit: AuditSummary,
    pub compressions: u64,
    /// Largest relative discarded weight of one compression at the final time step.
    pub final_step_max_discarded: f64,
    pub spectra_history: Vec<SpectrumSnapshot>,
}

/// Imaginary-time ground-state search from a random product state.
///
/// Every `check_interval` sweeps the state is canonicalized and its energy
/// measured. A change below `δE` shrinks the step by `step_factor`; the run
/// converges once the energy moved less than `δE` between two consecutive
/// reductions, and gives up when the step drops below `dt_min`.
pub fn run_ground_state<T: Field>(model: &Model, cfg: &TebdConfig) -> Result<TebdOutcome<T>, MpsError> {
    cfg.validate()?;
    model.validate()?;
    let clock = Instant::now();
    let mut mps = SymmetricMps::<T>::random_product_state(model, cfg.seed);
    let mut comp = Compressor::new(cfg.chi, cfg.policy(), cfg.method, cfg.seed);
    let mut state = ConvergenceState::new(cfg.dt0);
    let mut gates = GateSet::<T>::new(model, cfg.dt0, cfg.gate_form, cfg.schmidt_tol)?;
    let mut audit = AuditSummary::default();
    let mut spectra_history = Vec::new();

    while state.stop == Stop::Running {
        let n = cfg.check_interval.min(cfg.max_sweeps - state.sweeps);
        evolve_with(&mut mps, &gates, n, &mut comp)?;
        state.sweeps += n;
        mps.canonicalize()?;
        if cfg.audit {
            audit.add(&mps.audit());
        }
        if cfg.record_spectra {
            spectra_history.push(SpectrumSnapshot {
                sweep: state.sweeps,
                dt: state.dt,
                bonds: mps.spectra(),
            });
        }
        let e = observables::energy(&mps, model);
        log::debug!("sweep {} dt {:.3e} E {:.14}", state.sweeps, state.dt, e);
        if state.record(e, cfg.delta_e) {
            if let Some(er) = state.energy_at_reduction {
                if (e - er).abs() < cfg.delta_e {
                    state.stop = Stop::Converged;
                    break;
                }
            }
            state.energy_at_reduction = Some(e);
            let dt = state.dt * cfg.step_factor;
            if dt < cfg.dt_min {
                state.stop = Stop::DtFloor;
                break;
            }
            state.dt = dt;
            state.dt_schedule.push(dt);
            gates = GateSet::new(model, dt, cfg.gate_form, cfg.schmidt_tol)?;
            comp.max_discarded = 0.0;
        }
        if state.sweeps >= cfg.max_sweeps {
            state.stop = Stop::MaxSweeps;
        }
    }

    let total = clock.elapsed().as_secs_f64();
    let timing = TimingLedger::new(
        cfg.method.tag(),
        state.sweeps as u64,
        comp.seconds,
        (total - comp.seconds).max(0.0),
    );
    Ok(TebdOutcome {
        state: mps,
        convergence: state,
        timing,
        audit,
        compressions: comp.count,
        final_step_max_discarded: comp.max_discarded,
        spectra_history,
    })
}
