//! Dense rank-χ truncated factorization.
//!
//! Two routes produce a [`TruncatedFactorization`]:
//!
//! * [`tsvd`] computes the full SVD (LAPACK divide and conquer) and keeps the
//!   χ largest singular triplets. Its truncation error is the Eckart–Young
//!   minimum.
//! * [`rsvd`] samples the range of `(A A†)^q A` with an `n×ℓ` Gaussian test
//!   matrix ([`randomized_range`]), projects `B = Q† A` and finishes with the
//!   same full-SVD primitive on the small `ℓ×n` matrix. Left factors are
//!   `Q·Ũ`, so both factors remain exact isometries.
//!
//! Power iterations re-orthonormalize after every product with `A` or `A†`
//! (2q+1 QR factorizations), which keeps the sample well conditioned when the
//! spectrum spans many orders of magnitude.

use ndarray::{s, Array1, Array2, ArrayView2};
use ndarray_linalg::error::LinalgError;
use ndarray_linalg::{JobSvd, SVDDCInto, SVDInto, QR};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{adjoint, frobenius, Field};

#[derive(Debug, Error)]
pub enum FactorizeError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("{routine} failed on a {rows}x{cols} matrix (max |a_ij| = {max_abs:e}, finite = {finite}): {reason}")]
    Backend {
        routine: &'static str,
        rows: usize,
        cols: usize,
        max_abs: f64,
        finite: bool,
        reason: String,
    },
}

fn backend_error<T: Field>(
    routine: &'static str,
    a: ArrayView2<'_, T>,
    err: ndarray_linalg::error::LinalgError,
) -> FactorizeError {
    FactorizeError::Backend {
        routine,
        rows: a.nrows(),
        cols: a.ncols(),
        max_abs: a.iter().map(|x| x.abs()).fold(0.0, f64::max),
        finite: a.iter().all(|x| x.is_finite_value()),
        reason: err.to_string(),
    }
}

/// A validated dense matrix: at least one row and column, finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T>(Array2<T>);

impl<T: Field> DenseMatrix<T> {
    pub fn new(a: Array2<T>) -> Result<Self, FactorizeError> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(FactorizeError::Argument(format!(
                "matrix must be non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if let Some(pos) = a.iter().position(|x| !x.is_finite_value()) {
            return Err(FactorizeError::Argument(format!(
                "non-finite entry at row {}, col {}",
                pos / a.ncols(),
                pos % a.ncols()
            )));
        }
        Ok(Self(a))
    }

    pub fn view(&self) -> ArrayView2<'_, T> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<T> {
        self.0
    }
}

impl<T> std::ops::Deref for DenseMatrix<T> {
    type Target = Array2<T>;
    fn deref(&self) -> &Array2<T> {
        &self.0
    }
}

/// Sum of squares of dropped singular values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Discarded {
    /// All dropped values were computed (full SVD).
    Exact(f64),
    /// Only the values computed by the randomized path are included, a lower
    /// bound on the true discarded weight.
    Approximate(f64),
}

impl Discarded {
    pub fn value(&self) -> f64 {
        match *self {
            Discarded::Exact(v) | Discarded::Approximate(v) => v,
        }
    }
}

/// Rank-χ factors `A ≈ left · diag(sigma) · right_adj`.
#[derive(Debug, Clone)]
pub struct TruncatedFactorization<T> {
    /// `m×χ_eff`, orthonormal columns.
    pub left: Array2<T>,
    /// Descending, nonnegative.
    pub sigma: Array1<f64>,
    /// `χ_eff×n`, orthonormal rows.
    pub right_adj: Array2<T>,
    pub discarded: Discarded,
}

impl<T: Field> TruncatedFactorization<T> {
    /// Rank-zero factorization of an `m×n` block.
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            left: Array2::zeros((rows, 0)),
            sigma: Array1::zeros(0),
            right_adj: Array2::zeros((0, cols)),
            discarded: Discarded::Exact(0.0),
        }
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.left.nrows(), self.right_adj.ncols())
    }

    pub fn reconstruct(&self) -> Array2<T> {
        let mut scaled = self.left.clone();
        for (mut col, &s) in scaled.columns_mut().into_iter().zip(self.sigma.iter()) {
            col.mapv_inplace(|x| x.mul_real(s));
        }
        scaled.dot(&self.right_adj)
    }

    /// Keep only the leading `rank` triplets; the rest joins the discarded weight.
    pub fn truncate(&mut self, rank: usize) {
        if rank >= self.rank() {
            return;
        }
        let extra: f64 = self.sigma.iter().skip(rank).map(|s| s * s).sum();
        self.discarded = match self.discarded {
            Discarded::Exact(v) => Discarded::Exact(v + extra),
            Discarded::Approximate(v) => Discarded::Approximate(v + extra),
        };
        self.left = self.left.slice(s![.., ..rank]).to_owned();
        self.right_adj = self.right_adj.slice(s![..rank, ..]).to_owned();
        self.sigma = self.sigma.slice(s![..rank]).to_owned();
    }
}

/// Parameters of the randomized path for one dense matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsvdParams {
    pub rank: usize,
    pub oversample: usize,
    pub power: usize,
    pub seed: u64,
}

impl RsvdParams {
    /// `ℓ = 2χ`, `q = 4`.
    pub fn new(rank: usize, seed: u64) -> Self {
        Self {
            rank,
            oversample: 2 * rank,
            power: 4,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), FactorizeError> {
        if self.rank == 0 {
            return Err(FactorizeError::Argument("rank must be at least 1".into()));
        }
        if self.oversample < self.rank {
            return Err(FactorizeError::Argument(format!(
                "oversampling {} is below the rank {}",
                self.oversample, self.rank
            )));
        }
        Ok(())
    }
}

/// Randomized-path settings independent of the target rank; the sample
/// size for rank χ is `⌈oversample_ratio·χ⌉`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RsvdSettings {
    pub oversample_ratio: f64,
    pub power: usize,
    pub seed: u64,
    /// Blocks whose smaller side is below this use the deterministic path.
    pub min_dim: usize,
}

impl Default for RsvdSettings {
    fn default() -> Self {
        Self {
            oversample_ratio: 2.0,
            power: 4,
            seed: 0,
            min_dim: 32,
        }
    }
}

impl RsvdSettings {
    pub fn params_for(&self, rank: usize, seed: u64) -> RsvdParams {
        RsvdParams {
            rank,
            oversample: ((rank as f64 * self.oversample_ratio).ceil() as usize).max(rank),
            power: self.power,
            seed,
        }
    }
}

/// Which truncated factorization to run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Tsvd,
    Rsvd(RsvdSettings),
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Tsvd => "tsvd",
            Method::Rsvd(_) => "rsvd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    Frobenius,
    Spectral,
}

/// `(U, σ, V†)`.
pub(crate) type Svd<T> = (Array2<T>, Array1<f64>, Array2<T>);

/// Thin SVD by divide and conquer (`gesdd`), retried with `gesvd` if that
/// fails to converge. Some OpenBLAS kernels make `gesdd` report a failure on
/// ordinary, well-scaled inputs.
pub(crate) fn thin_svd<T: Field>(a: Array2<T>) -> Result<Svd<T>, LinalgError> {
    match a.clone().svddc_into(JobSvd::Some) {
        // JobSvd::Some always returns both factors.
        Ok((u, s, vt)) => Ok((u.unwrap(), s, vt.unwrap())),
        Err(_) => {
            let (u, s, vt) = a.svd_into(true, true)?;
            Ok((u.unwrap(), s, vt.unwrap()))
        }
    }
}

fn full_svd<T: Field>(a: ArrayView2<'_, T>) -> Result<Svd<T>, FactorizeError> {
    thin_svd(a.to_owned()).map_err(|e| backend_error("gesdd/gesvd", a, e))
}

/// Number of leading singular values that are numerically nonzero.
///
/// A zero matrix keeps its full requested rank (all zero values) so callers
/// still receive orthonormal factors.
fn effective_rank(sigma: &Array1<f64>, rank: usize, rows: usize, cols: usize) -> usize {
    let top = sigma.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return rank;
    }
    let floor = top * rows.max(cols) as f64 * f64::EPSILON;
    sigma.iter().take(rank).take_while(|&&s| s > floor).count()
}

fn check_rank(rank: usize, rows: usize, cols: usize) -> Result<(), FactorizeError> {
    if rows == 0 || cols == 0 {
        return Err(FactorizeError::Argument(format!(
            "cannot factorize an empty {rows}x{cols} matrix"
        )));
    }
    if rank == 0 || rank > rows.min(cols) {
        return Err(FactorizeError::Argument(format!(
            "rank {rank} outside 1..={} for a {rows}x{cols} matrix",
            rows.min(cols)
        )));
    }
    Ok(())
}

/// Deterministic truncated SVD: full SVD, keep the `rank` largest triplets.
///
/// Trailing values below `σ₁·max(m,n)·ε` are dropped as well, so the
/// returned rank can be smaller than requested; their weight is counted as
/// discarded.
pub fn tsvd<T: Field>(a: ArrayView2<'_, T>, rank: usize) -> Result<TruncatedFactorization<T>, FactorizeError> {
    let (m, n) = a.dim();
    check_rank(rank, m, n)?;
    let (u, sigma, vt) = full_svd(a)?;
    let keep = effective_rank(&sigma, rank, m, n);
    let discarded = sigma.iter().skip(keep).map(|s| s * s).sum();
    Ok(TruncatedFactorization {
        left: u.slice(s![.., ..keep]).to_owned(),
        sigma: sigma.slice(s![..keep]).to_owned(),
        right_adj: vt.slice(s![..keep, ..]).to_owned(),
        discarded: Discarded::Exact(discarded),
    })
}

fn orthonormalize<T: Field>(y: Array2<T>) -> Result<Array2<T>, FactorizeError> {
    y.qr().map(|(q, _)| q).map_err(|e| backend_error("geqrf", y.view(), e))
}

fn gaussian_matrix<T: Field>(rows: usize, cols: usize, seed: u64) -> Array2<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || T::gaussian(&mut rng))
}

/// Orthonormal `m×ℓ` basis for a randomized sample of the range of
/// `(A A†)^q A`.
///
/// The QR after every product returns orthonormal columns even when the
/// sample is rank deficient; the extra columns then complete an orthonormal
/// basis of the achieved range.
pub fn randomized_range<T: Field>(
    a: ArrayView2<'_, T>,
    samples: usize,
    power: usize,
    seed: u64,
) -> Result<Array2<T>, FactorizeError> {
    let (m, n) = a.dim();
    if m == 0 || n == 0 {
        return Err(FactorizeError::Argument(format!(
            "cannot sample an empty {m}x{n} matrix"
        )));
    }
    if samples == 0 || samples > m.min(n) {
        return Err(FactorizeError::Argument(format!(
            "sample count {samples} outside 1..={} for a {m}x{n} matrix",
            m.min(n)
        )));
    }
    let omega = gaussian_matrix::<T>(n, samples, seed);
    let mut q = orthonormalize(a.dot(&omega))?;
    if power > 0 {
        let a_adj = adjoint(&a);
        for _ in 0..power {
            let z = orthonormalize(a_adj.dot(&q))?;
            q = orthonormalize(a.dot(&z))?;
        }
    }
    Ok(q)
}

/// Randomized truncated SVD with oversampling and power iteration.
pub fn rsvd<T: Field>(a: ArrayView2<'_, T>, params: &RsvdParams) -> Result<TruncatedFactorization<T>, FactorizeError> {
    params.validate()?;
    let (m, n) = a.dim();
    check_rank(params.rank, m, n)?;
    if params.oversample > m.min(n) {
        return Err(FactorizeError::Argument(format!(
            "oversampling {} exceeds min(m, n) = {}",
            params.oversample,
            m.min(n)
        )));
    }
    let q = randomized_range(a, params.oversample, params.power, params.seed)?;
    let b = adjoint(&q).dot(&a);
    let (u_small, sigma, vt) = full_svd(b.view())?;
    let keep = effective_rank(&sigma, params.rank, m, n);
    let discarded = sigma.iter().skip(keep).map(|s| s * s).sum();
    Ok(TruncatedFactorization {
        left: q.dot(&u_small.slice(s![.., ..keep])),
        sigma: sigma.slice(s![..keep]).to_owned(),
        right_adj: vt.slice(s![..keep, ..]).to_owned(),
        discarded: Discarded::Approximate(discarded),
    })
}

/// `‖A − left·diag(sigma)·right_adj‖` in the requested norm.
pub fn reconstruction_error<T: Field>(
    a: ArrayView2<'_, T>,
    f: &TruncatedFactorization<T>,
    norm: Norm,
) -> Result<f64, FactorizeError> {
    if f.shape() != a.dim() || f.left.ncols() != f.rank() || f.right_adj.nrows() != f.rank() {
        return Err(FactorizeError::Argument(format!(
            "factorization of shape {:?} (rank {}) does not conform to a {:?} matrix",
            f.shape(),
            f.rank(),
            a.dim()
        )));
    }
    let residual = &a - &f.reconstruct();
    match norm {
        Norm::Frobenius => Ok(frobenius(&residual)),
        Norm::Spectral => {
            let (_, s, _) = residual
                .view()
                .to_owned()
                .svddc_into(JobSvd::None)
                .map_err(|e| backend_error("gesdd", residual.view(), e))?;
            Ok(s.first().copied().unwrap_or(0.0))
        }
    }
}

/// Build `U·diag(spectrum)·V†` from random isometries; the reference matrices
/// of the tests and synthetic benchmarks.
pub fn with_spectrum<T: Field>(rows: usize, cols: usize, spectrum: &[f64], seed: u64) -> Array2<T> {
    let k = spectrum.len();
    assert!(k <= rows.min(cols), "spectrum longer than min(rows, cols)");
    let u =
        orthonormalize(gaussian_matrix::<T>(rows, k, crate::seed::derive(seed, 0))).expect("QR of a Gaussian matrix");
    let v =
        orthonormalize(gaussian_matrix::<T>(cols, k, crate::seed::derive(seed, 1))).expect("QR of a Gaussian matrix");
    let mut us = u;
    for (mut col, &s) in us.columns_mut().into_iter().zip(spectrum) {
        col.mapv_inplace(|x| x.mul_real(s));
    }
    us.dot(&adjoint(&v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use num_complex::Complex64;

    fn isometry_defect<T: Field>(q: &Array2<T>) -> f64 {
        let g = adjoint(q).dot(q);
        let eye = Array2::<T>::eye(g.nrows());
        (&g - &eye).iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    #[test]
    fn tsvd_diagonal() {
        let a = Array2::from_diag(&array![3.0, 2.0, 1.0]);
        let f = tsvd(a.view(), 2).unwrap();
        assert_eq!(f.sigma.to_vec(), vec![3.0, 2.0]);
        assert_eq!(f.discarded, Discarded::Exact(1.0));
        let fro = reconstruction_error(a.view(), &f, Norm::Frobenius).unwrap();
        let spec = reconstruction_error(a.view(), &f, Norm::Spectral).unwrap();
        assert!((fro - 1.0).abs() < 1e-14 && (spec - 1.0).abs() < 1e-14);
    }

    #[test]
    fn tsvd_exact_rank_one() {
        let u = array![0.6, 0.8, 0.0];
        let v = array![0.0, 1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt(), 0.0];
        let a = 2.0
            * &u.view()
                .insert_axis(ndarray::Axis(1))
                .dot(&v.view().insert_axis(ndarray::Axis(0)));
        let f = tsvd(a.view(), 1).unwrap();
        assert!((f.sigma[0] - 2.0).abs() < 1e-14);
        assert!(reconstruction_error(a.view(), &f, Norm::Frobenius).unwrap() < 1e-14);
    }

    #[test]
    fn tsvd_prescribed_spectrum() {
        let spectrum: Vec<f64> = (0..30).map(|k| 2f64.powi(-k)).collect();
        let a: Array2<f64> = with_spectrum(50, 30, &spectrum, 11);
        let f = tsvd(a.view(), 10).unwrap();
        for k in 0..10 {
            assert!((f.sigma[k] - spectrum[k]).abs() < 1e-12, "k={k}");
        }
        assert!(isometry_defect(&f.left) < 1e-12);
        assert!(isometry_defect(&f.right_adj.t().to_owned()) < 1e-12);
    }

    #[test]
    fn rank_arguments_are_checked() {
        let a = Array2::<f64>::eye(3);
        assert!(matches!(tsvd(a.view(), 0), Err(FactorizeError::Argument(_))));
        assert!(matches!(tsvd(a.view(), 4), Err(FactorizeError::Argument(_))));
        let p = RsvdParams {
            rank: 3,
            oversample: 2,
            power: 0,
            seed: 1,
        };
        assert!(matches!(rsvd(a.view(), &p), Err(FactorizeError::Argument(_))));
    }

    #[test]
    fn dense_matrix_rejects_nan_and_empty() {
        assert!(DenseMatrix::new(Array2::<f64>::zeros((0, 3))).is_err());
        let mut a = Array2::<f64>::eye(2);
        a[[1, 0]] = f64::NAN;
        assert!(DenseMatrix::new(a).is_err());
    }

    #[test]
    fn range_is_orthonormal_and_captures_exact_rank() {
        let spectrum = [5.0, 3.0, 1.0, 0.5];
        let a: Array2<Complex64> = with_spectrum(40, 30, &spectrum, 3);
        let q = randomized_range(a.view(), 6, 1, 99).unwrap();
        assert!(isometry_defect(&q) < 1e-12);
        let resid = &a - &q.dot(&adjoint(&q).dot(&a));
        assert!(frobenius(&resid) <= 1e-10 * frobenius(&a));
    }

    #[test]
    fn range_of_rank_deficient_sample_stays_orthonormal() {
        // rank 1, eight samples
        let a: Array2<f64> = with_spectrum(20, 20, &[1.0], 5);
        let q = randomized_range(a.view(), 8, 2, 1).unwrap();
        assert!(isometry_defect(&q) < 1e-12);
    }

    #[test]
    fn rsvd_matches_tsvd_on_prescribed_spectrum() {
        let spectrum: Vec<f64> = (0..30).map(|k| 2f64.powi(-k)).collect();
        let a: Array2<f64> = with_spectrum(50, 30, &spectrum, 11);
        let t = tsvd(a.view(), 10).unwrap();
        let r = rsvd(
            a.view(),
            &RsvdParams {
                rank: 10,
                oversample: 20,
                power: 4,
                seed: 5,
            },
        )
        .unwrap();
        for k in 0..10 {
            assert!((r.sigma[k] - t.sigma[k]).abs() <= 1e-10 * t.sigma[k]);
        }
        assert!(matches!(r.discarded, Discarded::Approximate(_)));
        assert!(isometry_defect(&r.left) < 1e-12);
        assert!(isometry_defect(&r.right_adj.t().to_owned()) < 1e-12);
    }

    #[test]
    fn rsvd_zero_matrix() {
        let a = Array2::<f64>::zeros((12, 9));
        let r = rsvd(
            a.view(),
            &RsvdParams {
                rank: 3,
                oversample: 6,
                power: 4,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(r.rank(), 3);
        assert!(r.sigma.iter().all(|&s| s == 0.0));
        assert!(isometry_defect(&r.left) < 1e-12);
        assert!(isometry_defect(&r.right_adj.t().to_owned()) < 1e-12);
    }

    #[test]
    fn rsvd_exact_rank_five() {
        let spectrum = [9.0, 4.0, 2.0, 1.0, 0.3];
        let a: Array2<Complex64> = with_spectrum(60, 45, &spectrum, 8);
        let r = rsvd(
            a.view(),
            &RsvdParams {
                rank: 5,
                oversample: 10,
                power: 4,
                seed: 2,
            },
        )
        .unwrap();
        let err = reconstruction_error(a.view(), &r, Norm::Frobenius).unwrap();
        assert!(err <= 1e-10 * frobenius(&a));
    }

    #[test]
    fn rank_deficient_input_reports_effective_rank() {
        let a: Array2<f64> = with_spectrum(30, 30, &[2.0, 1.0], 4);
        let t = tsvd(a.view(), 5).unwrap();
        assert_eq!(t.rank(), 2);
        let r = rsvd(a.view(), &RsvdParams::new(5, 3)).unwrap();
        assert_eq!(r.rank(), 2);
    }

    #[test]
    fn reconstruction_error_of_full_svd_is_zero() {
        let a: Array2<f64> = gaussian_matrix(7, 5, 3);
        let f = tsvd(a.view(), 5).unwrap();
        assert!(reconstruction_error(a.view(), &f, Norm::Frobenius).unwrap() < 1e-12);
        let wrong = tsvd(a.t(), 3).unwrap();
        assert!(reconstruction_error(a.view(), &wrong, Norm::Spectral).is_err());
    }

    #[test]
    fn thin_svd_of_a_wide_matrix() {
        let a: Array2<f64> = gaussian_matrix(29, 400, 6);
        let (u, s, vt) = thin_svd(a.clone()).unwrap();
        assert_eq!((u.dim(), s.len(), vt.dim()), ((29, 29), 29, (29, 400)));
        let back = u.dot(&Array2::from_diag(&s)).dot(&vt);
        assert!((&back - &a).iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn reconstruction_error_matches_tail_norm() {
        let a: Array2<f64> = gaussian_matrix(40, 40, 17);
        let (_, full, _) = a.clone().svddc_into(JobSvd::None).unwrap();
        let tail = full.iter().skip(8).map(|s| s * s).sum::<f64>().sqrt();
        let f = tsvd(a.view(), 8).unwrap();
        let err = reconstruction_error(a.view(), &f, Norm::Frobenius).unwrap();
        assert!((err - tail).abs() < 1e-10);
    }

    #[test]
    fn rsvd_is_deterministic_for_a_seed() {
        let a: Array2<f64> = gaussian_matrix(64, 48, 1);
        let p = RsvdParams::new(6, 1234);
        let x = rsvd(a.view(), &p).unwrap();
        let y = rsvd(a.view(), &p).unwrap();
        assert_eq!(x.sigma, y.sigma);
    }

    #[test]
    fn truncate_moves_weight_into_discarded() {
        let a = Array2::from_diag(&array![3.0, 2.0, 1.0]);
        let mut f = tsvd(a.view(), 3).unwrap();
        f.truncate(1);
        assert_eq!(f.rank(), 1);
        assert_eq!(f.discarded, Discarded::Exact(5.0));
    }
}
