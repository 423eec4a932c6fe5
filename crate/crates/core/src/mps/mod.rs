//! Parity-symmetric open-boundary MPS.
//!
//! Site tensors are stored right-canonical, `B_j = Γ_j λ_{j+1}`, with one
//! singular-value vector per bond and parity sector. Every site tensor is a
//! pair-indexed set of blocks `blocks[a][s]` of shape `(D_j[a], d_s,
//! D_{j+1}[a⊕s])`: the right bond charge is the parity accumulated from the
//! left edge, so the state is globally even when the last bond carries
//! charge 0 only.
//!
//! A two-site update on sites `(j, j+1)` forms `Φ = G·B_j·B_{j+1}`,
//! compresses `diag(λ_j)·Φ ≈ X S Y` and sets `B_{j+1} = Y`,
//! `B_j = Φ Y† / ‖S‖`, which never divides by λ.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use ndarray_linalg::QR;
use rand::Rng;
use thiserror::Error;

use crate::blocks::BlockError;
use crate::factorize::thin_svd;
use crate::models::Model;
use crate::scalar::Field;
use crate::seed::{self, Stream};

mod env;
mod tebd;
mod update;

pub use env::{close, transfer_left, transfer_right, Env, Environments, LocalOp};
pub use tebd::{
    evolve, run_ground_state, sweep, AuditSummary, Check, ConvergenceState, GateSet, SpectrumSnapshot, Stop,
    TebdConfig, TebdOutcome,
};
pub use update::{apply_gate_and_compress, CompressionStats, PreparedGate};

#[derive(Debug, Error)]
pub enum MpsError {
    #[error("bond {bond}: all retained singular values vanished (max |Φ| = {max_abs:e})")]
    ZeroSpectrum { bond: usize, max_abs: f64 },
    #[error("bond {bond}: {source}")]
    Compression {
        bond: usize,
        #[source]
        source: BlockError,
    },
    #[error("linear algebra failure at site {site}: {reason}")]
    Backend { site: usize, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
}

/// Local basis split into parity sectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysBasis {
    charges: Vec<u8>,
    members: [Vec<usize>; 2],
}

impl PhysBasis {
    pub fn new(charges: &[u8]) -> Self {
        let mut members = [Vec::new(), Vec::new()];
        for (i, &c) in charges.iter().enumerate() {
            members[(c & 1) as usize].push(i);
        }
        Self {
            charges: charges.to_vec(),
            members,
        }
    }

    pub fn dim(&self) -> usize {
        self.charges.len()
    }

    pub fn sector_dim(&self, s: usize) -> usize {
        self.members[s].len()
    }

    pub fn sector_dims(&self) -> [usize; 2] {
        [self.members[0].len(), self.members[1].len()]
    }

    /// Original basis indices of sector `s`, in ascending order.
    pub fn members(&self, s: usize) -> &[usize] {
        &self.members[s]
    }

    pub fn charges(&self) -> &[u8] {
        &self.charges
    }

    /// The `(out, inp)` sector block of a local operator.
    pub fn op_block<T: Field>(&self, op: &Array2<f64>, out: usize, inp: usize) -> Array2<T> {
        let (ro, ci) = (&self.members[out], &self.members[inp]);
        Array2::from_shape_fn((ro.len(), ci.len()), |(r, c)| T::lift_real(op[[ro[r], ci[c]]]))
    }

    /// Parity charge of an operator with definite parity, `None` otherwise.
    pub fn op_parity(&self, op: &Array2<f64>) -> Option<u8> {
        let mut seen = [false; 2];
        for ((r, c), v) in op.indexed_iter() {
            if *v != 0.0 {
                seen[((self.charges[r] ^ self.charges[c]) & 1) as usize] = true;
            }
        }
        match seen {
            [_, false] => Some(0),
            [false, true] => Some(1),
            [true, true] => None,
        }
    }
}

/// Block-sparse site tensor, `blocks[left charge][physical charge]`.
#[derive(Debug, Clone)]
pub struct SiteTensor<T> {
    pub blocks: [[Array3<T>; 2]; 2],
}

impl<T: Field> SiteTensor<T> {
    pub fn zeros(dl: [usize; 2], ds: [usize; 2], dr: [usize; 2]) -> Self {
        let blk = |a: usize, s: usize| Array3::zeros((dl[a], ds[s], dr[a ^ s]));
        Self {
            blocks: [[blk(0, 0), blk(0, 1)], [blk(1, 0), blk(1, 1)]],
        }
    }
}

/// Reshape a standard-layout 3-tensor into a matrix without copying when possible.
pub(crate) fn mat<T: Field>(a: &Array3<T>, rows: usize, cols: usize) -> ArrayView2<'_, T> {
    a.view()
        .into_shape_with_order((rows, cols))
        .expect("site tensors are kept in standard layout")
}

pub(crate) fn tensor<T: Field>(m: Array2<T>, shape: (usize, usize, usize)) -> Array3<T> {
    m.as_standard_layout()
        .into_owned()
        .into_shape_with_order(shape)
        .expect("element count matches")
}

#[derive(Debug, Clone)]
pub struct SymmetricMps<T> {
    basis: PhysBasis,
    sites: Vec<SiteTensor<T>>,
    /// `lambdas[k]` sits on the bond left of site `k`; `k = 0` and `k = L`
    /// are the trivial edge bonds.
    lambdas: Vec<[Array1<f64>; 2]>,
}

/// Structural audit of a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Audit {
    /// Every block has the shape parity fusion dictates.
    pub parity_ok: bool,
    /// Largest `|Σλ² − 1|` over bonds.
    pub norm_deviation: f64,
    /// Largest deviation of `Σ_s B_s B_s†` from the identity.
    pub isometry_deviation: f64,
    /// Largest bond dimension.
    pub max_bond: usize,
}

fn edge() -> [Array1<f64>; 2] {
    [Array1::ones(1), Array1::zeros(0)]
}

impl<T: Field> SymmetricMps<T> {
    pub fn from_parts(
        basis: PhysBasis,
        sites: Vec<SiteTensor<T>>,
        lambdas: Vec<[Array1<f64>; 2]>,
    ) -> Result<Self, MpsError> {
        let mps = Self { basis, sites, lambdas };
        if mps.sites.len() < 2 || mps.lambdas.len() != mps.sites.len() + 1 {
            return Err(MpsError::Invalid("need at least two sites and one λ per bond".into()));
        }
        if !mps.shapes_consistent() {
            return Err(MpsError::Invalid("site tensor shapes violate parity fusion".into()));
        }
        Ok(mps)
    }

    /// Bond-dimension-one product state; each site is a random unit vector
    /// inside one parity sector, with the sectors drawn so the total parity
    /// is even.
    pub fn random_product_state(model: &Model, seed: u64) -> Self {
        let basis = PhysBasis::new(&model.local_charges());
        let ds = basis.sector_dims();
        let l = model.length();
        let mut rng = seed::substream(seed, Stream::InitialState);
        let mut sectors = Vec::with_capacity(l);
        let mut acc = 0usize;
        for j in 0..l {
            let s = if j + 1 == l {
                acc
            } else if ds[0] == 0 || ds[1] == 0 {
                if ds[0] > 0 {
                    0
                } else {
                    1
                }
            } else {
                rng.random_range(0..2usize)
            };
            sectors.push(s);
            acc ^= s;
        }
        let mut sites = Vec::with_capacity(l);
        let mut lambdas = vec![edge()];
        let mut left = 0usize;
        for (j, &s) in sectors.iter().enumerate() {
            let right = left ^ s;
            let mut dl = [0, 0];
            dl[left] = 1;
            let mut dr = [0, 0];
            dr[right] = 1;
            let mut site = SiteTensor::zeros(dl, ds, dr);
            let v: Vec<T> = (0..ds[s]).map(|_| T::gaussian(&mut rng)).collect();
            let n = v.iter().map(|x| x.square()).sum::<f64>().sqrt();
            for (i, x) in v.into_iter().enumerate() {
                site.blocks[left][s][[0, i, 0]] = x.div_real(n);
            }
            sites.push(site);
            let mut lam = [Array1::zeros(0), Array1::zeros(0)];
            lam[right] = Array1::ones(1);
            if j + 1 < l {
                lambdas.push(lam);
            }
            left = right;
        }
        lambdas.push(edge());
        Self { basis, sites, lambdas }
    }

    /// Random entangled even-parity state with bond dimension up to `chi`
    /// (split evenly over the two sectors), brought to canonical form.
    pub fn random(model: &Model, chi: usize, seed: u64) -> Result<Self, MpsError> {
        let basis = PhysBasis::new(&model.local_charges());
        let ds = basis.sector_dims();
        let l = model.length();
        let mut from_left = vec![[1usize, 0usize]];
        for j in 0..l {
            let p = from_left[j];
            let mut n = [0usize; 2];
            for a in 0..2 {
                for s in 0..2 {
                    n[a ^ s] = n[a ^ s].saturating_add(p[a].saturating_mul(ds[s]));
                }
            }
            from_left.push(n);
        }
        let mut from_right = vec![[1usize, 0usize]; l + 1];
        for j in (0..l).rev() {
            let p = from_right[j + 1];
            let mut n = [0usize; 2];
            for a in 0..2 {
                for s in 0..2 {
                    n[a] = n[a].saturating_add(ds[s].saturating_mul(p[a ^ s]));
                }
            }
            from_right[j] = n;
        }
        let per = (chi / 2).max(1);
        let dims: Vec<[usize; 2]> = (0..=l)
            .map(|k| {
                let mut d = [0; 2];
                for c in 0..2 {
                    d[c] = from_left[k][c].min(from_right[k][c]).min(per);
                }
                d
            })
            .collect();
        let mut rng = seed::substream(seed, Stream::InitialState);
        let sites = (0..l)
            .map(|j| {
                let mut site = SiteTensor::zeros(dims[j], ds, dims[j + 1]);
                for a in 0..2 {
                    for s in 0..2 {
                        site.blocks[a][s].mapv_inplace(|_| T::gaussian(&mut rng));
                    }
                }
                site
            })
            .collect();
        let lambdas = dims.iter().map(|d| [Array1::ones(d[0]), Array1::ones(d[1])]).collect();
        let mut mps = Self { basis, sites, lambdas };
        mps.canonicalize()?;
        Ok(mps)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn basis(&self) -> &PhysBasis {
        &self.basis
    }

    pub fn site(&self, j: usize) -> &SiteTensor<T> {
        &self.sites[j]
    }

    pub(crate) fn site_mut(&mut self, j: usize) -> &mut SiteTensor<T> {
        &mut self.sites[j]
    }

    /// Singular values on bond `k` (left of site `k`), per sector.
    pub fn lambda(&self, k: usize) -> &[Array1<f64>; 2] {
        &self.lambdas[k]
    }

    pub(crate) fn set_lambda(&mut self, k: usize, lam: [Array1<f64>; 2]) {
        self.lambdas[k] = lam;
    }

    /// Per-sector dimension of bond `k`, read off the site tensors.
    pub fn bond_dims(&self, k: usize) -> [usize; 2] {
        if k < self.sites.len() {
            let b = &self.sites[k].blocks;
            [b[0][0].dim().0, b[1][0].dim().0]
        } else {
            let b = &self.sites[k - 1].blocks;
            [b[0][0].dim().2, b[0][1].dim().2]
        }
    }

    pub fn max_bond_dim(&self) -> usize {
        (0..=self.len())
            .map(|k| self.bond_dims(k).iter().sum::<usize>())
            .max()
            .unwrap_or(0)
    }

    /// Interior bond spectra, bonds `1..L`, each as `[even, odd]`.
    pub fn spectra(&self) -> Vec<[Vec<f64>; 2]> {
        self.lambdas[1..self.len()]
            .iter()
            .map(|l| [l[0].to_vec(), l[1].to_vec()])
            .collect()
    }

    fn shapes_consistent(&self) -> bool {
        let ds = self.basis.sector_dims();
        for (j, site) in self.sites.iter().enumerate() {
            let dl = [site.blocks[0][0].dim().0, site.blocks[1][0].dim().0];
            let dr = [site.blocks[0][0].dim().2, site.blocks[0][1].dim().2];
            for a in 0..2 {
                for s in 0..2 {
                    if site.blocks[a][s].dim() != (dl[a], ds[s], dr[a ^ s]) {
                        return false;
                    }
                }
            }
            let lam = &self.lambdas[j];
            if j > 0 && (lam[0].len() != dl[0] || lam[1].len() != dl[1]) {
                return false;
            }
        }
        let l = self.len();
        self.bond_dims(0) == [1, 0] && self.bond_dims(l) == [1, 0]
    }

    /// Dense state vector, site 0 most significant, original local basis.
    pub fn to_dense(&self) -> Array1<T> {
        let d = self.basis.dim();
        let ds = self.basis.sector_dims();
        let mut psi: [Array2<T>; 2] = [Array2::ones((1, 1)), Array2::zeros((1, 0))];
        for site in &self.sites {
            let rows = psi[0].nrows() * d;
            let dr = [site.blocks[0][0].dim().2, site.blocks[0][1].dim().2];
            let mut next = [Array2::zeros((rows, dr[0])), Array2::zeros((rows, dr[1]))];
            for a in 0..2 {
                for s in 0..2 {
                    let blk = &site.blocks[a][s];
                    if blk.is_empty() || psi[a].ncols() == 0 {
                        continue;
                    }
                    for i in 0..ds[s] {
                        let o = self.basis.members(s)[i];
                        let part = psi[a].dot(&blk.index_axis(Axis(1), i));
                        let mut dst = next[a ^ s].slice_mut(s![o..;d, ..]);
                        dst += &part;
                    }
                }
            }
            psi = next;
        }
        psi[0].column(0).to_owned()
    }

    /// Structural audit: parity-fusion shapes, per-bond Σλ² and right isometry.
    pub fn audit(&self) -> Audit {
        let parity_ok = self.shapes_consistent();
        let mut norm_deviation = 0.0f64;
        for lam in &self.lambdas {
            let w: f64 = lam.iter().flat_map(|l| l.iter()).map(|x| x * x).sum();
            norm_deviation = norm_deviation.max((w - 1.0).abs());
        }
        let mut isometry_deviation = 0.0f64;
        for site in &self.sites {
            for a in 0..2 {
                let dl = site.blocks[a][0].dim().0;
                if dl == 0 {
                    continue;
                }
                let mut g = Array2::<T>::zeros((dl, dl));
                for s in 0..2 {
                    let (_, d, dr) = site.blocks[a][s].dim();
                    let m = mat(&site.blocks[a][s], dl, d * dr);
                    g = g + m.dot(&m.t().mapv(|x| x.conj()));
                }
                for ((r, c), v) in g.indexed_iter() {
                    let target = if r == c { 1.0 } else { 0.0 };
                    isometry_deviation = isometry_deviation.max((*v - T::lift_real(target)).abs());
                }
            }
        }
        Audit {
            parity_ok,
            norm_deviation,
            isometry_deviation,
            max_bond: self.max_bond_dim(),
        }
    }

    /// Restore exact right-canonical form with normalized Schmidt values:
    /// a QR sweep left to right, then an SVD sweep right to left. The state
    /// is renormalized; singular values below `1e-15` are dropped.
    pub fn canonicalize(&mut self) -> Result<(), MpsError> {
        let l = self.len();
        let ds = self.basis.sector_dims();
        // left to right: make every site left-orthonormal
        for j in 0..l {
            let dl = self.bond_dims(j);
            let dr = self.bond_dims(j + 1);
            let mut carry: [Array2<T>; 2] = [Array2::zeros((0, 0)), Array2::zeros((0, 0))];
            let mut new_dr = [0usize; 2];
            let mut newq: [[Option<Array3<T>>; 2]; 2] = Default::default();
            for c in 0..2 {
                let parts: Vec<(usize, usize)> = (0..2).map(|a| (a, a ^ c)).collect();
                let rows: usize = parts.iter().map(|&(a, s)| dl[a] * ds[s]).sum();
                let mut m = Array2::<T>::zeros((rows, dr[c]));
                let mut off = 0;
                for &(a, s) in &parts {
                    let r = dl[a] * ds[s];
                    m.slice_mut(s![off..off + r, ..])
                        .assign(&mat(&self.sites[j].blocks[a][s], r, dr[c]));
                    off += r;
                }
                let (q, rmat) = if rows == 0 || dr[c] == 0 {
                    (Array2::zeros((rows, 0)), Array2::zeros((0, dr[c])))
                } else {
                    m.qr().map_err(|e| MpsError::Backend {
                        site: j,
                        reason: e.to_string(),
                    })?
                };
                let k = q.ncols();
                new_dr[c] = k;
                let mut off = 0;
                for &(a, s) in &parts {
                    let r = dl[a] * ds[s];
                    let blk = q.slice(s![off..off + r, ..]).to_owned();
                    newq[a][s] = Some(tensor(blk, (dl[a], ds[s], k)));
                    off += r;
                }
                carry[c] = rmat;
            }
            for a in 0..2 {
                for s in 0..2 {
                    self.sites[j].blocks[a][s] = newq[a][s].take().expect("filled above");
                }
            }
            if j + 1 < l {
                let dr_next = self.bond_dims(j + 2);
                for c in 0..2 {
                    for s2 in 0..2 {
                        let blk = &self.sites[j + 1].blocks[c][s2];
                        let (dm, d2, drr) = blk.dim();
                        let prod = carry[c].dot(&mat(blk, dm, d2 * drr));
                        self.sites[j + 1].blocks[c][s2] = tensor(prod, (new_dr[c], ds[s2], dr_next[c ^ s2]));
                    }
                }
            } else {
                // carry[0] is the 1×1 norm (with phase); keep the phase only
                let r = carry[0].get((0, 0)).copied().unwrap_or(T::zero());
                let n = r.abs();
                if !(n > 0.0) {
                    return Err(MpsError::ZeroSpectrum { bond: l, max_abs: 0.0 });
                }
                let phase = r.div_real(n);
                for a in 0..2 {
                    for s in 0..2 {
                        self.sites[j].blocks[a][s].mapv_inplace(|x| x * phase);
                    }
                }
            }
        }
        // right to left: SVD, keep V† as the new right-orthonormal tensor
        for j in (0..l).rev() {
            let dl = self.bond_dims(j);
            let dr = self.bond_dims(j + 1);
            let mut new_dl = [0usize; 2];
            let mut carry: [Array2<T>; 2] = [Array2::zeros((0, 0)), Array2::zeros((0, 0))];
            let mut lam = [Array1::zeros(0), Array1::zeros(0)];
            for a in 0..2 {
                let w = [ds[0] * dr[a], ds[1] * dr[a ^ 1]];
                let cols = w[0] + w[1];
                let mut m = Array2::<T>::zeros((dl[a], cols));
                m.slice_mut(s![.., ..w[0]])
                    .assign(&mat(&self.sites[j].blocks[a][0], dl[a], w[0]));
                m.slice_mut(s![.., w[0]..])
                    .assign(&mat(&self.sites[j].blocks[a][1], dl[a], w[1]));
                if j == 0 {
                    if a == 0 {
                        let n = crate::scalar::frobenius(&m);
                        if !(n > 0.0) {
                            return Err(MpsError::ZeroSpectrum { bond: 0, max_abs: 0.0 });
                        }
                        m.mapv_inplace(|x| x.div_real(n));
                        new_dl[0] = 1;
                    }
                    self.sites[0].blocks[a][0] = tensor(m.slice(s![.., ..w[0]]).to_owned(), (dl[a], ds[0], dr[a]));
                    self.sites[0].blocks[a][1] = tensor(m.slice(s![.., w[0]..]).to_owned(), (dl[a], ds[1], dr[a ^ 1]));
                    continue;
                }
                let (u, sv, vt) = if dl[a] == 0 || cols == 0 {
                    (Array2::zeros((dl[a], 0)), Array1::zeros(0), Array2::zeros((0, cols)))
                } else {
                    thin_svd(m).map_err(|e| MpsError::Backend {
                        site: j,
                        reason: e.to_string(),
                    })?
                };
                let k = sv.iter().take_while(|&&x| x > 1e-15).count();
                new_dl[a] = k;
                let vt = vt.slice(s![..k, ..]).to_owned();
                self.sites[j].blocks[a][0] = tensor(vt.slice(s![.., ..w[0]]).to_owned(), (k, ds[0], dr[a]));
                self.sites[j].blocks[a][1] = tensor(vt.slice(s![.., w[0]..]).to_owned(), (k, ds[1], dr[a ^ 1]));
                let mut us = u.slice(s![.., ..k]).to_owned();
                for (mut col, &x) in us.columns_mut().into_iter().zip(sv.iter()) {
                    col.mapv_inplace(|v| v.mul_real(x));
                }
                carry[a] = us;
                lam[a] = sv.slice(s![..k]).to_owned();
            }
            if j == 0 {
                self.lambdas[0] = edge();
                break;
            }
            let norm = lam.iter().flat_map(|l| l.iter()).map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                return Err(MpsError::ZeroSpectrum { bond: j, max_abs: 0.0 });
            }
            for (a, l) in lam.iter_mut().enumerate() {
                l.mapv_inplace(|x| x / norm);
                carry[a].mapv_inplace(|x| x.div_real(norm));
            }
            self.lambdas[j] = lam;
            let dlp = self.bond_dims(j - 1);
            for a in 0..2 {
                for s in 0..2 {
                    let c = a ^ s;
                    let blk = &self.sites[j - 1].blocks[a][s];
                    let prod = mat(blk, dlp[a] * ds[s], dl[c]).dot(&carry[c]);
                    self.sites[j - 1].blocks[a][s] = tensor(prod, (dlp[a], ds[s], new_dl[c]));
                }
            }
        }
        self.lambdas[l] = edge();
        Ok(())
    }
}
