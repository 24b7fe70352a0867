//! Finite-difference gradient oracle.
//!
//! Central differences evaluated around a point give an estimator of the
//! gradient that is independent of the tape's backward rules; every backward
//! implementation in this crate is validated against it in 64-bit mode.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Central-difference gradient of a scalar function: per element `i`,
/// `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_difference_gradient<T: Scalar>(
    f: &mut dyn FnMut(&Tensor<T>) -> Result<T>,
    x: &Tensor<T>,
    h: f64,
) -> Result<Tensor<T>> {
    if h <= 0.0 {
        return Err(Error::Config(format!("finite difference step {h} must be > 0")));
    }
    let hv = T::from_f64(h);
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + hv;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - hv;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (plus - minus) / (hv + hv);
    }
    Ok(grad)
}

/// Relative error between two gradient estimates, guarded against tiny
/// denominators so near-zero gradients compare on an absolute scale.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-6);
    (a - b).abs() / denom
}

/// Largest elementwise relative error between two gradient tensors.
pub fn max_relative_error<T: Scalar>(got: &Tensor<T>, expected: &Tensor<T>) -> f64 {
    got.data()
        .iter()
        .zip(expected.data())
        .map(|(&g, &e)| relative_error(g.as_f64(), e.as_f64()))
        .fold(0.0, f64::max)
}
