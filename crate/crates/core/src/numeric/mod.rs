//! Dense arithmetic, stable nonlinearities, seeded randomness and the
//! finite-difference gradient oracle.

mod matrix;
mod rng;

pub use matrix::DenseMatrix;
pub use rng::{mix_seed, SeededRng};

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::NumericError;

/// Scalar type the model math is generic over.
///
/// Implemented for `f32` and `f64`. Training and gradient checks run in
/// `f64`; `f32` is the storage precision of checkpoints.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Lossless-or-rounding conversion from an `f64` constant.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `ln(1 + exp(x))` without overflow.
pub fn softplus_stable<T: Real>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function, the derivative of [`softplus_stable`].
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Max-shifted softmax.
pub fn softmax<T: Real>(e: &[T]) -> Result<Vec<T>, NumericError> {
    if e.is_empty() {
        return Err(NumericError::EmptyInput("softmax"));
    }
    let max = e.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = e.iter().map(|&x| (x - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|x| x / total).collect())
}

pub fn tanh_eval<T: Real>(x: T) -> T {
    x.tanh()
}

/// Derivative of tanh expressed through its output `y = tanh(x)`.
pub fn tanh_grad<T: Real>(y: T) -> T {
    T::one() - y * y
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn l2_norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// Dropout mask with entries in `{0, 1}`, each 1 with probability `p_keep`.
pub fn bernoulli_mask<T: Real>(
    rng: &mut SeededRng,
    len: usize,
    p_keep: f64,
) -> Result<Vec<T>, NumericError> {
    if !(p_keep > 0.0 && p_keep <= 1.0) {
        return Err(NumericError::Probability(p_keep));
    }
    Ok((0..len)
        .map(|_| {
            if rng.bernoulli(p_keep) {
                T::one()
            } else {
                T::zero()
            }
        })
        .collect())
}

/// Central-difference gradient of `f` at `theta`.
pub fn finite_diff_grad<T, F>(mut f: F, theta: &[T], h: T) -> Result<Vec<T>, NumericError>
where
    T: Real,
    F: FnMut(&[T]) -> T,
{
    let mut probe = theta.to_vec();
    let two_h = h + h;
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(NumericError::NonFiniteProbe { coordinate: i });
        }
        grad.push((up - down) / two_h);
    }
    Ok(grad)
}

/// `|a - n| / max(|a|, |n|, 1e-8)` with magnitudes taken as Euclidean norms,
/// so a scalar pair and a whole gradient block use the same formula.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    diff / na.max(nn).max(1e-8)
}
