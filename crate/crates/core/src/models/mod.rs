//! Transverse-field Ising models on a spin-S chain and on a cylinder mapped
//! to a chain of rings.
//!
//! All operators are real and expressed in the ascending-m eigenbasis of the
//! local Z operator. The cylinder's effective site is the lexicographic
//! product of its W spin-1/2 basis states (component 0 most significant).

mod gate;

pub use gate::{build_gate, GateForm, KronTerm, TwoSiteGate, DEFAULT_SCHMIDT_TOL};

use ndarray::{linalg::kron, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid spin {0}: 2S must be a positive integer")]
    Spin(f64),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("bond Hamiltonian is not Hermitian (asymmetry {0:e})")]
    NotHermitian(f64),
    #[error("gate is not parity conserving (violation {0:e})")]
    ParityViolation(f64),
}

/// Local spin operators of a spin-S particle.
#[derive(Debug, Clone)]
pub struct SpinAlgebra {
    twice_s: u32,
    pub x: Array2<f64>,
    pub z: Array2<f64>,
    pub p: Array2<f64>,
}

impl SpinAlgebra {
    pub fn new(spin: f64) -> Result<Self, ModelError> {
        let twice = 2.0 * spin;
        if !(twice >= 1.0) || (twice - twice.round()).abs() > 1e-12 || twice > 1e4 {
            return Err(ModelError::Spin(spin));
        }
        let twice_s = twice.round() as u32;
        let s = twice_s as f64 / 2.0;
        let d = twice_s as usize + 1;
        let m = |k: usize| -s + k as f64;
        let mut x = Array2::zeros((d, d));
        for k in 0..d - 1 {
            // ⟨m+1|X|m⟩ = √(S(S+1) − m(m+1)) / 2
            let v = (s * (s + 1.0) - m(k) * (m(k) + 1.0)).sqrt() / 2.0;
            x[[k + 1, k]] = v;
            x[[k, k + 1]] = v;
        }
        let z = Array2::from_diag(&ndarray::Array1::from_shape_fn(d, m));
        // (−1)^{m+S} with m + S = k
        let p = Array2::from_diag(&ndarray::Array1::from_shape_fn(
            d,
            |k| if k % 2 == 0 { 1.0 } else { -1.0 },
        ));
        Ok(Self { twice_s, x, z, p })
    }

    pub fn spin(&self) -> f64 {
        self.twice_s as f64 / 2.0
    }

    pub fn dim(&self) -> usize {
        self.twice_s as usize + 1
    }

    /// Parity charge of each basis state: 0 for P = +1, 1 for P = −1.
    pub fn charges(&self) -> Vec<u8> {
        (0..self.dim()).map(|k| (k % 2) as u8).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainModel {
    pub length: usize,
    pub field: f64,
    pub spin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderModel {
    pub length: usize,
    pub width: usize,
    pub field: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    Chain(ChainModel),
    Cylinder(CylinderModel),
}

/// Pauli X and Z in the ascending-m basis, and the parity operator.
fn pauli() -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let x = ndarray::array![[0.0, 1.0], [1.0, 0.0]];
    let z = ndarray::array![[-1.0, 0.0], [0.0, 1.0]];
    let p = ndarray::array![[1.0, 0.0], [0.0, -1.0]];
    (x, z, p)
}

/// Embed `op` on component `i` of `width` spin-1/2 factors.
pub fn embed_component(op: &Array2<f64>, i: usize, width: usize) -> Array2<f64> {
    let eye = Array2::<f64>::eye(2);
    let mut out = Array2::<f64>::eye(1);
    for k in 0..width {
        out = kron(&out, if k == i { op } else { &eye });
    }
    out
}

impl Model {
    pub fn chain(length: usize, field: f64, spin: f64) -> Result<Self, ModelError> {
        let m = Model::Chain(ChainModel { length, field, spin });
        m.validate()?;
        Ok(m)
    }

    pub fn cylinder(length: usize, width: usize, field: f64) -> Result<Self, ModelError> {
        let m = Model::Cylinder(CylinderModel { length, width, field });
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match *self {
            Model::Chain(c) => {
                SpinAlgebra::new(c.spin)?;
                if c.length < 2 {
                    return Err(ModelError::Invalid(format!("chain length {} < 2", c.length)));
                }
                if !c.field.is_finite() {
                    return Err(ModelError::Invalid("field must be finite".into()));
                }
            }
            Model::Cylinder(c) => {
                if c.length < 2 {
                    return Err(ModelError::Invalid(format!("cylinder length {} < 2", c.length)));
                }
                if !(2..=10).contains(&c.width) {
                    return Err(ModelError::Invalid(format!(
                        "cylinder width {} outside 2..=10",
                        c.width
                    )));
                }
                if !c.field.is_finite() {
                    return Err(ModelError::Invalid("field must be finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn length(&self) -> usize {
        match self {
            Model::Chain(c) => c.length,
            Model::Cylinder(c) => c.length,
        }
    }

    pub fn field(&self) -> f64 {
        match self {
            Model::Chain(c) => c.field,
            Model::Cylinder(c) => c.field,
        }
    }

    pub fn with_field(&self, field: f64) -> Self {
        match *self {
            Model::Chain(c) => Model::Chain(ChainModel { field, ..c }),
            Model::Cylinder(c) => Model::Cylinder(CylinderModel { field, ..c }),
        }
    }

    pub fn local_dim(&self) -> usize {
        match self {
            Model::Chain(c) => (2.0 * c.spin).round() as usize + 1,
            Model::Cylinder(c) => 1 << c.width,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::Chain(_) => "chain",
            Model::Cylinder(_) => "cylinder",
        }
    }

    /// Spin for the chain, width for the cylinder.
    pub fn shape_parameter(&self) -> f64 {
        match self {
            Model::Chain(c) => c.spin,
            Model::Cylinder(c) => c.width as f64,
        }
    }

    /// Spin-1/2 components per effective site.
    pub fn components(&self) -> usize {
        match self {
            Model::Chain(_) => 1,
            Model::Cylinder(c) => c.width,
        }
    }

    /// Local parity operator of one effective site.
    pub fn parity_operator(&self) -> Array2<f64> {
        match self {
            Model::Chain(c) => SpinAlgebra::new(c.spin).expect("validated").p,
            Model::Cylinder(c) => {
                let (_, _, p) = pauli();
                (0..c.width).fold(Array2::eye(1), |acc, _| kron(&acc, &p))
            }
        }
    }

    /// Parity charge of each local basis state.
    pub fn local_charges(&self) -> Vec<u8> {
        self.parity_operator()
            .diag()
            .iter()
            .map(|&v| if v > 0.0 { 0 } else { 1 })
            .collect()
    }

    /// `(d₊, d₋)`.
    pub fn parity_structure(&self) -> (usize, usize) {
        let c = self.local_charges();
        let odd = c.iter().filter(|&&q| q == 1).count();
        (c.len() - odd, odd)
    }

    /// X operators on each component of an effective site, normalized to
    /// unit largest eigenvalue (`X/S` for the chain, Pauli X for the cylinder).
    pub fn order_operators(&self) -> Vec<Array2<f64>> {
        match self {
            Model::Chain(c) => {
                let alg = SpinAlgebra::new(c.spin).expect("validated");
                vec![alg.x / c.spin]
            }
            Model::Cylinder(c) => {
                let (x, _, _) = pauli();
                (0..c.width).map(|i| embed_component(&x, i, c.width)).collect()
            }
        }
    }

    /// On-site part of the Hamiltonian of one effective site.
    pub fn onsite(&self) -> Array2<f64> {
        match self {
            Model::Chain(c) => {
                let alg = SpinAlgebra::new(c.spin).expect("validated");
                alg.z * (c.field / c.spin)
            }
            Model::Cylinder(c) => {
                let (x, z, _) = pauli();
                let d = 1 << c.width;
                let mut ring = Array2::<f64>::zeros((d, d));
                for i in 0..c.width {
                    // periodic i → i+1; for W = 2 both orientations of the
                    // single vertical bond appear, as in the lattice sum
                    let j = (i + 1) % c.width;
                    ring = ring - embed_component(&x, i, c.width).dot(&embed_component(&x, j, c.width));
                    ring = ring + embed_component(&z, i, c.width) * c.field;
                }
                ring
            }
        }
    }

    /// Inter-site coupling as a list of Kronecker factors `(left, right)`.
    pub fn coupling_terms(&self) -> Vec<(Array2<f64>, Array2<f64>)> {
        match self {
            Model::Chain(c) => {
                let alg = SpinAlgebra::new(c.spin).expect("validated");
                vec![(&alg.x * (-1.0 / (c.spin * c.spin)), alg.x.clone())]
            }
            Model::Cylinder(c) => {
                let (x, _, _) = pauli();
                (0..c.width)
                    .map(|i| {
                        let xi = embed_component(&x, i, c.width);
                        (-&xi, xi)
                    })
                    .collect()
            }
        }
    }

    /// Two-site Hermitian terms `h_bond(j)`, j = 0..L−2, summing to the full
    /// Hamiltonian. On-site terms are shared half/half between the two bonds
    /// of a bulk site; an end site gives its whole term to its only bond.
    pub fn bond_hamiltonians(&self) -> Vec<Array2<f64>> {
        let l = self.length();
        let d = self.local_dim();
        let eye = Array2::<f64>::eye(d);
        let onsite = self.onsite();
        let mut coupling = Array2::<f64>::zeros((d * d, d * d));
        for (a, b) in self.coupling_terms() {
            coupling = coupling + kron(&a, &b);
        }
        (0..l - 1)
            .map(|j| {
                let wl = if j == 0 { 1.0 } else { 0.5 };
                let wr = if j == l - 2 { 1.0 } else { 0.5 };
                &coupling + &(kron(&onsite, &eye) * wl) + &(kron(&eye, &onsite) * wr)
            })
            .collect()
    }
}
