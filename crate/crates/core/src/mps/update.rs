//! Two-site gate application and compression.

use std::time::Instant;

use ndarray::{s, Array1, Array2, Array4};
use ndarray_linalg::QR;

use super::env::LocalOp;
use super::{mat, tensor, MpsError, PhysBasis, SymmetricMps};
use crate::blocks::{block_factorize_with, BlockDiagMatrix, SectorId, SectorRankPolicy};
use crate::factorize::Method;
use crate::models::{GateForm, TwoSiteGate};
use crate::scalar::{adjoint, Field};

/// A gate split into the parity blocks the update needs.
#[derive(Debug, Clone)]
pub struct PreparedGate<T> {
    pub form: GateForm,
    pub dt: f64,
    /// Per pair charge `t`, the gate on the pair basis ordered `(s1, i1, i2)`.
    blocks: [Array2<T>; 2],
    terms: Vec<(u8, LocalOp<T>, LocalOp<T>)>,
}

fn pair_offset(ds: [usize; 2], t: usize, s1: usize) -> usize {
    if s1 == 0 {
        0
    } else {
        ds[0] * ds[t]
    }
}

impl<T: Field> PreparedGate<T> {
    pub fn new(gate: &TwoSiteGate, basis: &PhysBasis) -> Self {
        let d = basis.dim();
        let ds = basis.sector_dims();
        let pair_index = |t: usize| -> Vec<usize> {
            let mut idx = Vec::new();
            for s1 in 0..2 {
                let s2 = t ^ s1;
                for &o1 in basis.members(s1) {
                    for &o2 in basis.members(s2) {
                        idx.push(o1 * d + o2);
                    }
                }
            }
            idx
        };
        let block = |t: usize| {
            let idx = pair_index(t);
            debug_assert_eq!(idx.len(), ds[0] * ds[t] + ds[1] * ds[1 ^ t]);
            Array2::from_shape_fn((idx.len(), idx.len()), |(r, c)| {
                T::lift_real(gate.matrix[[idx[r], idx[c]]])
            })
        };
        let terms = gate
            .terms
            .iter()
            .map(|k| (k.charge, LocalOp::new(basis, &k.left), LocalOp::new(basis, &k.right)))
            .collect();
        Self {
            form: gate.form,
            dt: gate.dt,
            blocks: [block(0), block(1)],
            terms,
        }
    }

    pub fn term_count(&self) -> usize {
        match self.form {
            GateForm::Block => 1,
            GateForm::Product => self.terms.len(),
        }
    }
}

/// Diagnostics of one compression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionStats {
    /// `1 − ‖S‖²/‖A‖²`: weight lost relative to the compression input.
    pub discarded: f64,
    /// Wall time of the factorization call alone.
    pub seconds: f64,
    /// New bond dimension per sector.
    pub ranks: [usize; 2],
    /// Matrix shape handed to the factorization, summed over sectors.
    pub shape: (usize, usize),
}

/// `Φ_b` in factored form: the block form keeps it whole, the product form
/// as `L_b · R_b`.
enum Phi<T> {
    Whole(Array2<T>),
    Split(Array2<T>, Array2<T>),
}

impl<T: Field> Phi<T> {
    fn times(&self, y_adj: &Array2<T>) -> Array2<T> {
        match self {
            Phi::Whole(p) => p.dot(y_adj),
            Phi::Split(l, r) => l.dot(&r.dot(y_adj)),
        }
    }
}

/// Apply `gate` to sites `(j, j+1)` and compress the shared bond to at
/// most `chi`. Both site tensors and `λ_{j+1}` are replaced; the
/// retained Schmidt values are normalized.
pub fn apply_gate_and_compress<T: Field>(
    mps: &mut SymmetricMps<T>,
    j: usize,
    gate: &PreparedGate<T>,
    chi: usize,
    policy: &SectorRankPolicy,
    method: &Method,
) -> Result<CompressionStats, MpsError> {
    if j + 1 >= mps.len() {
        return Err(MpsError::Invalid(format!("bond ({j}, {}) outside the chain", j + 1)));
    }
    let ds = mps.basis().sector_dims();
    let dl = mps.bond_dims(j);
    let dm = mps.bond_dims(j + 1);
    let dr = mps.bond_dims(j + 2);
    let mut ro = [[0usize; 2]; 2];
    let mut co = [[0usize; 2]; 2];
    let mut rows = [0usize; 2];
    let mut cols = [0usize; 2];
    for b in 0..2 {
        ro[b][1] = dl[0] * ds[b];
        rows[b] = ro[b][1] + dl[1] * ds[1 ^ b];
        co[b][1] = ds[0] * dr[b];
        cols[b] = co[b][1] + ds[1] * dr[b ^ 1];
    }

    let phis: [Phi<T>; 2] = match gate.form {
        GateForm::Block => {
            let mut phi = [Array2::zeros((rows[0], cols[0])), Array2::zeros((rows[1], cols[1]))];
            for a in 0..2 {
                for c in 0..2 {
                    if dl[a] == 0 || dr[c] == 0 {
                        continue;
                    }
                    let t = a ^ c;
                    let g = &gate.blocks[t];
                    let p = g.nrows();
                    if p == 0 {
                        continue;
                    }
                    let mut theta = Array2::<T>::zeros((p, dl[a] * dr[c]));
                    for s1 in 0..2 {
                        let (b, s2) = (a ^ s1, t ^ s1);
                        if ds[s1] == 0 || ds[s2] == 0 || dm[b] == 0 {
                            continue;
                        }
                        let left = mat(&mps.site(j).blocks[a][s1], dl[a] * ds[s1], dm[b]);
                        let right = mat(&mps.site(j + 1).blocks[b][s2], dm[b], ds[s2] * dr[c]);
                        let prod: Array4<T> = left
                            .dot(&right)
                            .as_standard_layout()
                            .into_owned()
                            .into_shape_with_order((dl[a], ds[s1], ds[s2], dr[c]))
                            .expect("standard layout");
                        let prod = prod.permuted_axes([1, 2, 0, 3]);
                        let prod = prod.as_standard_layout();
                        let off = pair_offset(ds, t, s1);
                        theta.slice_mut(s![off..off + ds[s1] * ds[s2], ..]).assign(
                            &prod
                                .to_shape((ds[s1] * ds[s2], dl[a] * dr[c]))
                                .expect("element count matches"),
                        );
                    }
                    let out = g.dot(&theta);
                    for s1 in 0..2 {
                        let (b, s2) = (a ^ s1, t ^ s1);
                        let off = pair_offset(ds, t, s1);
                        let (r0, c0) = (ro[b][a], co[b][s2]);
                        for i1 in 0..ds[s1] {
                            for i2 in 0..ds[s2] {
                                let src = out.row(off + i1 * ds[s2] + i2);
                                let src = src.to_shape((dl[a], dr[c])).expect("element count matches");
                                phi[b]
                                    .slice_mut(
                                        s![r0 + i1..r0 + dl[a] * ds[s1];ds[s1], c0 + i2 * dr[c]..c0 + (i2 + 1) * dr[c]],
                                    )
                                    .assign(&src);
                            }
                        }
                    }
                }
            }
            let [p0, p1] = phi;
            [Phi::Whole(p0), Phi::Whole(p1)]
        }
        GateForm::Product => {
            let mut out: Vec<Phi<T>> = Vec::with_capacity(2);
            for b in 0..2 {
                let mut kc = Vec::with_capacity(gate.terms.len());
                let mut kb = 0;
                for (p, _, _) in &gate.terms {
                    kc.push(kb);
                    kb += dm[b ^ *p as usize];
                }
                let mut lb = Array2::<T>::zeros((rows[b], kb));
                let mut rb = Array2::<T>::zeros((kb, cols[b]));
                for (k, (p, lop, rop)) in gate.terms.iter().enumerate() {
                    let m = b ^ *p as usize;
                    if dm[m] == 0 {
                        continue;
                    }
                    for a in 0..2 {
                        let s1o = a ^ b;
                        if dl[a] == 0 || ds[s1o] == 0 {
                            continue;
                        }
                        let (s1, op) = lop.block(s1o);
                        let applied = super::env::apply_phys(op, &mps.site(j).blocks[a][s1]);
                        lb.slice_mut(s![ro[b][a]..ro[b][a] + dl[a] * ds[s1o], kc[k]..kc[k] + dm[m]])
                            .assign(&mat(&applied, dl[a] * ds[s1o], dm[m]));
                    }
                    for s2o in 0..2 {
                        let c = b ^ s2o;
                        if dr[c] == 0 || ds[s2o] == 0 {
                            continue;
                        }
                        let (s2, op) = rop.block(s2o);
                        let applied = super::env::apply_phys(op, &mps.site(j + 1).blocks[m][s2]);
                        rb.slice_mut(s![kc[k]..kc[k] + dm[m], co[b][s2o]..co[b][s2o] + ds[s2o] * dr[c]])
                            .assign(&mat(&applied, dm[m], ds[s2o] * dr[c]));
                    }
                }
                out.push(Phi::Split(lb, rb));
            }
            let p1 = out.pop().expect("two sectors");
            let p0 = out.pop().expect("two sectors");
            [p0, p1]
        }
    };

    // row weights λ_j over (a, α, i1)
    let lam = mps.lambda(j).clone();
    let weights: [Array1<f64>; 2] = std::array::from_fn(|b| {
        let mut w = Vec::with_capacity(rows[b]);
        for a in 0..2 {
            for &x in lam[a].iter() {
                w.extend(std::iter::repeat_n(x, ds[a ^ b]));
            }
        }
        Array1::from(w)
    });
    let scale_rows = |m: &Array2<T>, w: &Array1<f64>| {
        let mut m = m.clone();
        for (mut row, &x) in m.rows_mut().into_iter().zip(w.iter()) {
            row.mapv_inplace(|v| v.mul_real(x));
        }
        m
    };

    let mut inputs = Vec::new();
    let mut present = Vec::new();
    let mut total = 0.0;
    let mut max_abs = 0.0f64;
    let mut shape = (0, 0);
    for b in 0..2 {
        if rows[b] == 0 || cols[b] == 0 {
            continue;
        }
        let a_b = match &phis[b] {
            Phi::Whole(p) => scale_rows(p, &weights[b]),
            Phi::Split(l, r) => {
                if l.ncols() == 0 {
                    continue;
                }
                let w = scale_rows(l, &weights[b]);
                let (_, r_l) = w.qr().map_err(|e| MpsError::Backend {
                    site: j,
                    reason: e.to_string(),
                })?;
                r_l.dot(r)
            }
        };
        total += a_b.iter().map(|x| x.square()).sum::<f64>();
        max_abs = a_b.iter().fold(max_abs, |m, x| m.max(x.abs()));
        shape = (shape.0 + a_b.nrows(), shape.1 + a_b.ncols());
        inputs.push((SectorId(b as u8), a_b));
        present.push(b);
    }
    if inputs.is_empty() || !(total > 0.0) {
        return Err(MpsError::ZeroSpectrum { bond: j + 1, max_abs });
    }
    let estimates: Vec<usize> = present.iter().map(|&b| dm[b]).collect();
    let matrix = BlockDiagMatrix::new(inputs).map_err(|source| MpsError::Compression { bond: j + 1, source })?;
    let clock = Instant::now();
    let fact = block_factorize_with(&matrix, chi, policy, method, Some(&estimates))
        .map_err(|source| MpsError::Compression { bond: j + 1, source })?;
    let seconds = clock.elapsed().as_secs_f64();

    let kept: f64 = fact
        .sectors
        .iter()
        .flat_map(|f| f.factor.sigma.iter())
        .map(|x| x * x)
        .sum();
    if !(kept > 0.0) {
        return Err(MpsError::ZeroSpectrum { bond: j + 1, max_abs });
    }
    let norm = kept.sqrt();

    let mut new_lam = [Array1::zeros(0), Array1::zeros(0)];
    let mut ys: [Option<Array2<T>>; 2] = [None, None];
    for (f, &b) in fact.sectors.iter().zip(&present) {
        new_lam[b] = f.factor.sigma.mapv(|x| x / norm);
        ys[b] = Some(f.factor.right_adj.clone());
    }
    let k = [new_lam[0].len(), new_lam[1].len()];
    for b in 0..2 {
        let (left, y) = match &ys[b] {
            Some(y) if k[b] > 0 => (phis[b].times(&adjoint(y)).mapv(|x| x.div_real(norm)), y.clone()),
            _ => (Array2::zeros((rows[b], 0)), Array2::zeros((0, cols[b]))),
        };
        for a in 0..2 {
            let s1 = a ^ b;
            let blk = left.slice(s![ro[b][a]..ro[b][a] + dl[a] * ds[s1], ..]).to_owned();
            mps.site_mut(j).blocks[a][s1] = tensor(blk, (dl[a], ds[s1], k[b]));
        }
        for s2 in 0..2 {
            let c = b ^ s2;
            let blk = y.slice(s![.., co[b][s2]..co[b][s2] + ds[s2] * dr[c]]).to_owned();
            mps.site_mut(j + 1).blocks[b][s2] = tensor(blk, (k[b], ds[s2], dr[c]));
        }
    }
    mps.set_lambda(j + 1, new_lam);

    Ok(CompressionStats {
        discarded: (1.0 - kept / total).max(0.0),
        seconds,
        ranks: k,
        shape,
    })
}
