//! Inputs shared by the criterion benchmarks.

use ndarray::Array2;
use rlftn::bench::synthetic_block_matrix;
use rlftn::factorize::with_spectrum;
use rlftn::mps::{GateSet, SymmetricMps};
use rlftn::{BlockDiagMatrix, GateForm, Model};

/// Dense matrix with `σ_k = k^{-decay}`.
pub fn dense(dim: usize, decay: f64, seed: u64) -> Array2<f64> {
    let spectrum: Vec<f64> = (1..=dim).map(|k| (k as f64).powf(-decay)).collect();
    with_spectrum(dim, dim, &spectrum, seed)
}

/// Block-form compression input of size `χd × χd`.
pub fn block_input(chi: usize, d: usize, seed: u64) -> BlockDiagMatrix<f64> {
    synthetic_block_matrix(chi * d, 3.0, seed)
}

/// A random canonical state at bond dimension `chi` with gates for `dt`.
pub fn tebd_state(model: &Model, chi: usize, dt: f64, form: GateForm) -> (SymmetricMps<f64>, GateSet<f64>) {
    let mps = SymmetricMps::random(model, chi, 1).expect("valid model");
    let gates = GateSet::new(model, dt, form, 1e-14).expect("valid model");
    (mps, gates)
}
