//! Left/right environments and local expectation values.
//!
//! An environment on a bond is a 2×2 array of matrices indexed
//! `[bra charge][ket charge]`; odd operators move weight off the diagonal.

use ndarray::{Array2, Array3};

use super::{mat, tensor, PhysBasis, SiteTensor, SymmetricMps};
use crate::scalar::Field;

pub type Env<T> = [[Array2<T>; 2]; 2];

/// A local operator split into parity blocks, `blocks[out][in]`.
#[derive(Debug, Clone)]
pub struct LocalOp<T> {
    pub parity: u8,
    blocks: [[Option<Array2<T>>; 2]; 2],
}

impl<T: Field> LocalOp<T> {
    /// Panics if `op` has no definite parity.
    pub fn new(basis: &PhysBasis, op: &Array2<f64>) -> Self {
        let parity = basis.op_parity(op).expect("local operators must have definite parity");
        let mut blocks: [[Option<Array2<T>>; 2]; 2] = Default::default();
        for out in 0..2 {
            let inp = out ^ parity as usize;
            blocks[out][inp] = Some(basis.op_block(op, out, inp));
        }
        Self { parity, blocks }
    }

    pub fn block(&self, out: usize) -> (usize, &Array2<T>) {
        let inp = out ^ self.parity as usize;
        (inp, self.blocks[out][inp].as_ref().expect("built in new"))
    }
}

fn zeros_env<T: Field>(bra: [usize; 2], ket: [usize; 2]) -> Env<T> {
    let z = |b: usize, k: usize| Array2::zeros((bra[b], ket[k]));
    [[z(0, 0), z(0, 1)], [z(1, 0), z(1, 1)]]
}

fn reshape<T: Field>(m: Array2<T>, shape: (usize, usize)) -> Array2<T> {
    m.as_standard_layout()
        .into_owned()
        .into_shape_with_order(shape)
        .expect("element count matches")
}

/// `(dl, d_in, dr)` tensor with an operator block on the physical leg.
pub(crate) fn apply_phys<T: Field>(op: &Array2<T>, b: &Array3<T>) -> Array3<T> {
    let (dl, din, dr) = b.dim();
    let dout = op.nrows();
    let moved = b.view().permuted_axes([1, 0, 2]);
    let flat = moved.to_shape((din, dl * dr)).expect("element count matches");
    let out = tensor(op.dot(&flat), (dout, dl, dr));
    out.permuted_axes([1, 0, 2]).as_standard_layout().into_owned()
}

fn ket_block<T: Field>(
    site: &SiteTensor<T>,
    kc: usize,
    s_out: usize,
    op: Option<&LocalOp<T>>,
) -> Option<(usize, Array3<T>)> {
    match op {
        None => Some((s_out, site.blocks[kc][s_out].clone())),
        Some(o) => {
            let (s_in, blk) = o.block(s_out);
            let b = &site.blocks[kc][s_in];
            if b.is_empty() && (b.dim().0 == 0 || b.dim().2 == 0) {
                return Some((s_in, Array3::zeros((b.dim().0, blk.nrows(), b.dim().2))));
            }
            Some((s_in, apply_phys(blk, b)))
        }
    }
}

/// Absorb one site into a left environment; `op` acts on the ket.
pub fn transfer_left<T: Field>(env: &Env<T>, site: &SiteTensor<T>, op: Option<&LocalOp<T>>) -> Env<T> {
    let dr = [site.blocks[0][0].dim().2, site.blocks[0][1].dim().2];
    let mut out = zeros_env(dr, dr);
    for bc in 0..2 {
        for kc in 0..2 {
            let e = &env[bc][kc];
            if e.is_empty() {
                continue;
            }
            for s_bra in 0..2 {
                let Some((s_ket, k)) = ket_block(site, kc, s_bra, op) else {
                    continue;
                };
                let bra = &site.blocks[bc][s_bra];
                let (dlb, d, drb) = bra.dim();
                let (dlk, _, drk) = k.dim();
                if d == 0 || drb == 0 || drk == 0 {
                    continue;
                }
                let m = e.dot(&mat(&k, dlk, d * drk));
                let m = reshape(m, (dlb * d, drk));
                let bra_h = mat(bra, dlb * d, drb).t().mapv(|x| x.conj());
                out[bc ^ s_bra][kc ^ s_ket] += &bra_h.dot(&m);
            }
        }
    }
    out
}

/// Absorb one site into a right environment; `op` acts on the ket.
pub fn transfer_right<T: Field>(env: &Env<T>, site: &SiteTensor<T>, op: Option<&LocalOp<T>>) -> Env<T> {
    let dl = [site.blocks[0][0].dim().0, site.blocks[1][0].dim().0];
    let mut out = zeros_env(dl, dl);
    for bc in 0..2 {
        for kc in 0..2 {
            for s_bra in 0..2 {
                let Some((s_ket, k)) = ket_block(site, kc, s_bra, op) else {
                    continue;
                };
                let e = &env[bc ^ s_bra][kc ^ s_ket];
                let bra = &site.blocks[bc][s_bra];
                let (dlb, d, drb) = bra.dim();
                let (dlk, _, drk) = k.dim();
                if e.is_empty() || d == 0 || dlb == 0 || dlk == 0 {
                    continue;
                }
                let t1 = mat(&k, dlk * d, drk).dot(&e.t());
                let t1 = reshape(t1, (dlk, d * drb));
                let bra_c = mat(bra, dlb, d * drb).mapv(|x| x.conj());
                out[bc][kc] += &bra_c.dot(&t1.t());
            }
        }
    }
    out
}

/// Contract a left and a right environment on the same bond.
pub fn close<T: Field>(left: &Env<T>, right: &Env<T>) -> T {
    let mut acc = T::zero();
    for b in 0..2 {
        for k in 0..2 {
            if left[b][k].dim() == right[b][k].dim() {
                acc += (&left[b][k] * &right[b][k]).sum();
            }
        }
    }
    acc
}

/// Cached identity environments for every bond.
#[derive(Debug, Clone)]
pub struct Environments<T> {
    pub left: Vec<Env<T>>,
    pub right: Vec<Env<T>>,
}

impl<T: Field> Environments<T> {
    pub fn new(mps: &SymmetricMps<T>) -> Self {
        let l = mps.len();
        let mut edge = zeros_env::<T>([1, 0], [1, 0]);
        edge[0][0][[0, 0]] = T::one();
        let mut left = vec![edge.clone()];
        for j in 0..l {
            let next = transfer_left(&left[j], mps.site(j), None);
            left.push(next);
        }
        let mut right = vec![edge; l + 1];
        for j in (0..l).rev() {
            right[j] = transfer_right(&right[j + 1], mps.site(j), None);
        }
        Self { left, right }
    }

    pub fn norm_squared(&self) -> f64 {
        let l = self.left.len() - 1;
        close(&self.left[l], &self.right[l]).re()
    }

    /// `⟨ψ| O_j O_{j+1} … |ψ⟩` for operators on consecutive sites starting at `j`.
    pub fn string<'a>(
        &self,
        mps: &SymmetricMps<T>,
        j: usize,
        ops: impl IntoIterator<Item = Option<&'a LocalOp<T>>>,
    ) -> T
    where
        T: 'a,
    {
        let mut e = self.left[j].clone();
        let mut k = j;
        for op in ops {
            e = transfer_left(&e, mps.site(k), op);
            k += 1;
        }
        close(&e, &self.right[k])
    }
}
