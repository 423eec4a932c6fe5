use ndarray::{linalg::kron, Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::factorize::thin_svd;

/// Relative Schmidt-weight cutoff for the Kronecker-product form.
pub const DEFAULT_SCHMIDT_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateForm {
    /// One `d²×d²` block.
    #[serde(alias = "b")]
    Block,
    /// A sum of K Kronecker products of single-site operators.
    #[serde(alias = "p")]
    Product,
}

/// One term `left ⊗ right` with a definite parity charge on both factors.
#[derive(Debug, Clone)]
pub struct KronTerm {
    pub left: Array2<f64>,
    pub right: Array2<f64>,
    pub charge: u8,
}

/// Two-site imaginary-time gate `exp(−δt·h_bond)`.
#[derive(Debug, Clone)]
pub struct TwoSiteGate {
    pub form: GateForm,
    pub dt: f64,
    /// The `d²×d²` block, always present.
    pub matrix: Array2<f64>,
    /// Operator Schmidt terms; empty for the block form.
    pub terms: Vec<KronTerm>,
}

impl TwoSiteGate {
    pub fn local_dim(&self) -> usize {
        (self.matrix.nrows() as f64).sqrt().round() as usize
    }

    /// K; 1 for the block form.
    pub fn term_count(&self) -> usize {
        match self.form {
            GateForm::Block => 1,
            GateForm::Product => self.terms.len(),
        }
    }

    pub fn kron_sum(&self) -> Array2<f64> {
        let d = self.local_dim();
        self.terms
            .iter()
            .fold(Array2::zeros((d * d, d * d)), |acc, t| acc + kron(&t.left, &t.right))
    }
}

/// Exponentiate a bond Hamiltonian. `charges` are the local parity charges;
/// the product form splits the operator Schmidt decomposition by charge so
/// that each factor maps parity sectors onto definite sectors.
pub fn build_gate(
    h_bond: &Array2<f64>,
    charges: &[u8],
    dt: f64,
    form: GateForm,
    schmidt_tol: f64,
) -> Result<TwoSiteGate, ModelError> {
    let n = h_bond.nrows();
    let d = charges.len();
    if h_bond.ncols() != n || d * d != n {
        return Err(ModelError::Invalid(format!(
            "bond Hamiltonian is {}x{}, expected {}x{}",
            n,
            h_bond.ncols(),
            d * d,
            d * d
        )));
    }
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(ModelError::Invalid(format!(
            "time step {dt} must be finite and nonnegative"
        )));
    }
    let scale = h_bond.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let asym = (h_bond - &h_bond.t()).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if asym > 1e-12 * scale {
        return Err(ModelError::NotHermitian(asym));
    }
    let (evals, evecs) = h_bond
        .eigh(UPLO::Lower)
        .map_err(|e| ModelError::Invalid(format!("eigendecomposition failed: {e}")))?;
    let weights = Array1::from_shape_fn(n, |k| (-dt * evals[k]).exp());
    let mut scaled = evecs.clone();
    for (mut col, w) in scaled.columns_mut().into_iter().zip(weights.iter()) {
        col *= *w;
    }
    let matrix = scaled.dot(&evecs.t());

    let terms = match form {
        GateForm::Block => Vec::new(),
        GateForm::Product => operator_schmidt(&matrix, charges, schmidt_tol)?,
    };
    Ok(TwoSiteGate {
        form,
        dt,
        matrix,
        terms,
    })
}

fn operator_schmidt(g: &Array2<f64>, charges: &[u8], tol: f64) -> Result<Vec<KronTerm>, ModelError> {
    let d = charges.len();
    // M[(s1', s1), (s2', s2)] = G[(s1' s2'), (s1 s2)], split by charge of the
    // local operator components.
    let mut pairs: [Vec<(usize, usize)>; 2] = [Vec::new(), Vec::new()];
    for a in 0..d {
        for b in 0..d {
            pairs[(charges[a] ^ charges[b]) as usize].push((a, b));
        }
    }
    let mut violation = 0.0f64;
    for (p, rows) in pairs.iter().enumerate() {
        for &(a1, b1) in rows {
            for &(a2, b2) in &pairs[1 - p] {
                violation = violation.max(g[[a1 * d + a2, b1 * d + b2]].abs());
            }
        }
    }
    if violation > 1e-12 {
        return Err(ModelError::ParityViolation(violation));
    }

    let mut decomps = Vec::new();
    let mut top = 0.0f64;
    for (charge, idx) in pairs.iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let m = Array2::from_shape_fn((idx.len(), idx.len()), |(r, c)| {
            let (a1, b1) = idx[r];
            let (a2, b2) = idx[c];
            g[[a1 * d + a2, b1 * d + b2]]
        });
        let (u, s, vt) =
            thin_svd(m).map_err(|e| ModelError::Invalid(format!("operator Schmidt decomposition failed: {e}")))?;
        top = top.max(s.first().copied().unwrap_or(0.0));
        decomps.push((charge as u8, u, s, vt));
    }

    let mut terms = Vec::new();
    for (charge, u, s, vt) in decomps {
        let idx = &pairs[charge as usize];
        for k in 0..s.len() {
            if s[k] <= tol * top {
                break;
            }
            let w = s[k].sqrt();
            let mut left = Array2::zeros((d, d));
            let mut right = Array2::zeros((d, d));
            for (r, &(a, b)) in idx.iter().enumerate() {
                left[[a, b]] = w * u[[r, k]];
                right[[a, b]] = w * vt[[k, r]];
            }
            terms.push(KronTerm { left, right, charge });
        }
    }
    Ok(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Model;
    use ndarray::array;

    fn max_abs(a: &Array2<f64>) -> f64 {
        a.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[test]
    fn zero_step_is_identity() {
        let m = Model::chain(4, 1.0, 1.0).unwrap();
        let h = &m.bond_hamiltonians()[1];
        let g = build_gate(h, &m.local_charges(), 0.0, GateForm::Product, DEFAULT_SCHMIDT_TOL).unwrap();
        assert!(max_abs(&(&g.matrix - &Array2::<f64>::eye(9))) < 1e-14);
        assert_eq!(g.term_count(), 1);
        let t = &g.terms[0];
        assert_eq!(t.charge, 0);
        // identity factors up to a reciprocal scale
        let scale = t.left[[0, 0]];
        assert!(max_abs(&(&t.left / scale - &Array2::<f64>::eye(3))) < 1e-14);
        assert!(max_abs(&(&t.right * scale - &Array2::<f64>::eye(3))) < 1e-14);
    }

    #[test]
    fn xx_exponential_has_two_terms() {
        // exp(a X⊗X) = cosh(a) I⊗I + sinh(a) X⊗X for Pauli X
        let a = 0.3;
        let x = array![[0.0, 1.0], [1.0, 0.0]];
        let h = kron(&x, &x) * (-1.0);
        let g = build_gate(&h, &[0, 1], a, GateForm::Product, DEFAULT_SCHMIDT_TOL).unwrap();
        let analytic = Array2::<f64>::eye(4) * a.cosh() + kron(&x, &x) * a.sinh();
        assert!(max_abs(&(&g.matrix - &analytic)) < 1e-14);
        assert_eq!(g.term_count(), 2);
        for t in &g.terms {
            let prod = kron(&t.left, &t.right);
            let expect = if t.charge == 0 {
                Array2::<f64>::eye(4) * a.cosh()
            } else {
                kron(&x, &x) * a.sinh()
            };
            assert!(max_abs(&(&prod - &expect)) < 1e-14);
        }
    }

    #[test]
    fn product_form_reconstructs_block() {
        let models = [
            Model::chain(6, 1.77, 5.0).unwrap(),
            Model::chain(6, 0.4, 0.5).unwrap(),
            Model::cylinder(4, 3, 3.0).unwrap(),
        ];
        for (i, m) in models.iter().enumerate() {
            for (j, h) in m.bond_hamiltonians().iter().enumerate() {
                let dt = 0.4 * (1 + i + j) as f64 / 8.0;
                let g = build_gate(h, &m.local_charges(), dt, GateForm::Product, DEFAULT_SCHMIDT_TOL).unwrap();
                let err = (&g.kron_sum() - &g.matrix).iter().map(|x| x * x).sum::<f64>().sqrt();
                let norm = g.matrix.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!(err <= 1e-12 * norm, "err {err:e}");
            }
        }
    }

    #[test]
    fn factors_have_definite_parity() {
        let m = Model::cylinder(3, 2, 2.0).unwrap();
        let p = m.parity_operator();
        let h = &m.bond_hamiltonians()[0];
        let g = build_gate(h, &m.local_charges(), 0.2, GateForm::Product, DEFAULT_SCHMIDT_TOL).unwrap();
        let pp = kron(&p, &p);
        assert!(max_abs(&(g.matrix.dot(&pp) - pp.dot(&g.matrix))) < 1e-13);
        for t in &g.terms {
            let sign = if t.charge == 0 { 1.0 } else { -1.0 };
            assert!(max_abs(&(p.dot(&t.left).dot(&p) - &t.left * sign)) < 1e-14);
            assert!(max_abs(&(p.dot(&t.right).dot(&p) - &t.right * sign)) < 1e-14);
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let h = array![
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0]
        ];
        assert!(matches!(
            build_gate(&h, &[0, 1], 0.1, GateForm::Block, DEFAULT_SCHMIDT_TOL),
            Err(ModelError::NotHermitian(_))
        ));
    }
}
