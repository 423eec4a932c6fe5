//! Randomized low-rank factorization inside a parity-symmetric MPS/TEBD
//! ground-state solver for transverse-field Ising models.
//!
//! The crate is organized bottom-up:
//!
//! * [`factorize`]: dense rank-χ truncated SVD, deterministic (full SVD) and
//!   randomized (range finder with power iteration).
//! * [`blocks`]: block-diagonal (parity-sector) matrices and their truncated
//!   factorization with global post-selection of singular values.
//! * [`models`]: spin algebras, Ising chain and cylinder Hamiltonians, and
//!   two-site imaginary-time gates in block and Kronecker-product form.
//! * [`mps`]: the parity-symmetric MPS, TEBD updates and the imaginary-time
//!   convergence driver.
//! * [`observables`]: energy, magnetization, correlation length, entropies
//!   and the spectral fits.
//! * [`bench`]: timing ledgers, the environment-normalized speedup and the
//!   tsvd/rsvd comparison harness.
//! * [`config`] and [`report`]: run configuration files and JSON reports.

pub mod bench;
pub mod blocks;
pub mod config;
pub mod factorize;
pub mod matrix_io;
pub mod models;
pub mod mps;
pub mod observables;
pub mod report;
pub mod scalar;
pub mod seed;

pub use blocks::{BlockDiagMatrix, BlockFactorization, SectorId, SectorRankKind, SectorRankPolicy};
pub use factorize::{
    DenseMatrix, Discarded, FactorizeError, Method, Norm, RsvdParams, RsvdSettings, TruncatedFactorization,
};
pub use models::{ChainModel, CylinderModel, GateForm, Model, SpinAlgebra, TwoSiteGate};
pub use mps::{SymmetricMps, TebdConfig};
pub use observables::{FitResult, ObservableReport};
pub use report::RunReport;
pub use scalar::Field;

/// Version string embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
