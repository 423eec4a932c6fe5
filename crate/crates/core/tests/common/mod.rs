//! Reference values computed without the MPS machinery.
#![allow(dead_code)]

use ndarray::{linalg::kron, Array2};
use ndarray_linalg::{Eigh, SVD, UPLO};

/// Ground energy of `H = −Σ X_j X_{j+1} − h Σ Z_j` with open ends.
///
/// After Jordan–Wigner the single-particle energies `ε_k` are the singular
/// values of the bidiagonal matrix with `h` on the diagonal and `1` above
/// it, and `E₀ = −Σ ε_k`.
pub fn free_fermion_energy(length: usize, field: f64) -> f64 {
    let mut b = Array2::<f64>::zeros((length, length));
    for j in 0..length {
        b[[j, j]] = field;
        if j + 1 < length {
            b[[j, j + 1]] = 1.0;
        }
    }
    let (_, eps, _) = SVD::svd(&*b, false, false).unwrap();
    -eps.sum()
}

fn pauli_x() -> Array2<f64> {
    ndarray::array![[0.0, 1.0], [1.0, 0.0]]
}

fn pauli_z() -> Array2<f64> {
    ndarray::array![[1.0, 0.0], [0.0, -1.0]]
}

fn embed(ops: &[(usize, &Array2<f64>)], length: usize) -> Array2<f64> {
    let mut out = Array2::<f64>::eye(1);
    for j in 0..length {
        let f = ops
            .iter()
            .find(|(k, _)| *k == j)
            .map(|(_, o)| (*o).clone())
            .unwrap_or_else(|| Array2::eye(2));
        out = kron(&out, &f);
    }
    out
}

/// Dense spin-1/2 Ising chain from Pauli matrices.
pub fn pauli_chain(length: usize, field: f64) -> Array2<f64> {
    let (x, z) = (pauli_x(), pauli_z());
    let n = 1 << length;
    let mut h = Array2::<f64>::zeros((n, n));
    for j in 0..length - 1 {
        h = h - embed(&[(j, &x), (j + 1, &x)], length);
    }
    for j in 0..length {
        h = h - field * embed(&[(j, &z)], length);
    }
    h
}

pub fn lowest_eigenvalue(h: &Array2<f64>) -> f64 {
    let (w, _) = h.eigh(UPLO::Lower).unwrap();
    w[0]
}

pub fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
