use ndarray::{Array2, ArrayBase, Data, Ix2};
use ndarray_linalg::{Lapack, Scalar};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

/// Scalar field the solver runs in: `f64` or `Complex64`.
pub trait Field: Scalar<Real = f64> + Lapack + Send + Sync {
    const IS_COMPLEX: bool;

    /// One standard-Gaussian sample (complex: unit variance split over both parts).
    fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Self;

    fn lift_real(x: f64) -> Self {
        <Self as Scalar>::from_real(x)
    }

    fn is_finite_value(&self) -> bool;
}

impl Field for f64 {
    const IS_COMPLEX: bool = false;

    fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }

    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl Field for Complex64 {
    const IS_COMPLEX: bool = true;

    fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }

    fn is_finite_value(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Conjugate transpose.
pub fn adjoint<T: Field, S: Data<Elem = T>>(a: &ArrayBase<S, Ix2>) -> Array2<T> {
    a.t().mapv(|x| x.conj())
}

/// Frobenius norm.
pub fn frobenius<T: Field, S: Data<Elem = T>>(a: &ArrayBase<S, Ix2>) -> f64 {
    a.iter().map(|x| x.square()).sum::<f64>().sqrt()
}

/// Lift a real matrix into the field.
pub fn lift<T: Field, S: Data<Elem = f64>>(a: &ArrayBase<S, Ix2>) -> Array2<T> {
    a.mapv(T::lift_real)
}
