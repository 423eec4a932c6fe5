//! Run reports: one JSON document per ground-state run, plus CSV side files.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bench::TimingLedger;
use crate::config::ScalarKind;
use crate::models::Model;
use crate::mps::{
    run_ground_state, AuditSummary, ConvergenceState, MpsError, SpectrumSnapshot, TebdConfig, TebdOutcome,
};
use crate::observables::{measure, ObservableReport};
use crate::scalar::Field;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub seed: u64,
    pub scalar: ScalarKind,
    pub model: Model,
    pub tebd: TebdConfig,
    pub observables: ObservableReport,
    pub timing: TimingLedger,
    pub convergence: ConvergenceState,
    pub audit: AuditSummary,
    pub compressions: u64,
    pub final_step_max_discarded: f64,
    pub wall_seconds: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spectra_history: Vec<SpectrumSnapshot>,
}

fn assemble<T: Field>(
    model: &Model,
    tebd: &TebdConfig,
    scalar: ScalarKind,
    out: TebdOutcome<T>,
    clock: Instant,
) -> RunReport {
    let observables = measure(&out.state, model);
    RunReport {
        version: crate::VERSION.to_string(),
        seed: tebd.seed,
        scalar,
        model: *model,
        tebd: *tebd,
        observables,
        timing: out.timing,
        convergence: out.convergence,
        audit: out.audit,
        compressions: out.compressions,
        final_step_max_discarded: out.final_step_max_discarded,
        wall_seconds: clock.elapsed().as_secs_f64(),
        spectra_history: out.spectra_history,
    }
}

/// Ground-state search followed by measurement.
pub fn execute(model: &Model, tebd: &TebdConfig, scalar: ScalarKind) -> Result<RunReport, MpsError> {
    let clock = Instant::now();
    Ok(match scalar {
        ScalarKind::Real => assemble(model, tebd, scalar, run_ground_state::<f64>(model, tebd)?, clock),
        ScalarKind::Complex => assemble(model, tebd, scalar, run_ground_state::<Complex64>(model, tebd)?, clock),
    })
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    /// `report.json`, `spectra.csv`, `entropy.csv` and `history.csv` in `dir`.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json())?;
        write_spectra(self, std::fs::File::create(dir.join("spectra.csv"))?)?;
        write_entropy(self, std::fs::File::create(dir.join("entropy.csv"))?)?;
        write_history(self, std::fs::File::create(dir.join("history.csv"))?)?;
        if !self.spectra_history.is_empty() {
            write_spectra_history(self, std::fs::File::create(dir.join("spectra_history.csv"))?)?;
        }
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// `bond,sector,index,value`, sector 0 even and 1 odd.
pub fn write_spectra<W: Write>(r: &RunReport, w: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bond", "sector", "index", "value"])
        .map_err(csv_err)?;
    for b in &r.observables.spectra {
        for s in 0..2 {
            for (i, v) in b.sector(s).iter().enumerate() {
                out.serialize((b.bond, s, i, v)).map_err(csv_err)?;
            }
        }
    }
    out.flush()
}

/// `sweep,dt,bond,sector,index,value` for every recorded check.
pub fn write_spectra_history<W: Write>(r: &RunReport, w: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sweep", "dt", "bond", "sector", "index", "value"])
        .map_err(csv_err)?;
    for snap in &r.spectra_history {
        for (b, sectors) in snap.bonds.iter().enumerate() {
            for (s, values) in sectors.iter().enumerate() {
                for (i, v) in values.iter().enumerate() {
                    out.serialize((snap.sweep, snap.dt, b + 1, s, i, v)).map_err(csv_err)?;
                }
            }
        }
    }
    out.flush()
}

/// `bond,entropy`.
pub fn write_entropy<W: Write>(r: &RunReport, w: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bond", "entropy"]).map_err(csv_err)?;
    for (k, s) in r.observables.entropy.iter().enumerate() {
        out.serialize((k + 1, s)).map_err(csv_err)?;
    }
    out.flush()
}

/// `sweep,dt,energy`.
pub fn write_history<W: Write>(r: &RunReport, w: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sweep", "dt", "energy"]).map_err(csv_err)?;
    for c in &r.convergence.history {
        out.serialize((c.sweep, c.dt, c.energy)).map_err(csv_err)?;
    }
    out.flush()
}
