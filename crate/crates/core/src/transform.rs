//! Box-Cox transformation and its first three derivatives in λ.
//!
//! Every routine works on `log y` internally. Writing `x = λ·log y`, the
//! closed forms
//!
//! ```text
//! T     = (e^x − 1)/λ
//! ∂T    = (e^x (x − 1) + 1)/λ²
//! ∂²T   = (e^x x² − 2(e^x (x − 1) + 1))/λ³
//! ∂³T   = (e^x x² (x − 3) + 6(e^x (x − 1) + 1))/λ⁴
//! ```
//!
//! cancel catastrophically as `x → 0`. For `|x| ≤ 1` the derivatives are
//! evaluated from the everywhere-convergent series
//! `∂ᵐT = (log y)^{m+1} Σ_k x^k / (k! (k + m + 1))`, which is exact at λ = 0.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest `|λ·log y|` evaluated by series rather than closed form.
const SERIES_CUTOFF: f64 = 1.0;
const MAX_SERIES_TERMS: usize = 48;

/// Admissible range of the transformation parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaInterval<T> {
    lambda_min: T,
    lambda_max: T,
}

impl<T: Scalar> LambdaInterval<T> {
    pub fn new(lambda_min: T, lambda_max: T) -> Result<Self> {
        if !lambda_min.is_finite() || !lambda_max.is_finite() {
            return Err(Error::InvalidConfig("lambda interval must be finite".into()));
        }
        if !(lambda_min < T::zero() && T::zero() < lambda_max) {
            return Err(Error::InvalidConfig(format!(
                "lambda interval must satisfy lambda_min < 0 < lambda_max, got [{lambda_min}, {lambda_max}]"
            )));
        }
        Ok(Self { lambda_min, lambda_max })
    }

    pub fn lambda_min(&self) -> T {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> T {
        self.lambda_max
    }

    /// `max(|λ_min|, λ_max)`.
    pub fn c_lambda(&self) -> T {
        self.lambda_min.abs().max(self.lambda_max)
    }

    pub fn contains(&self, lambda: T) -> bool {
        lambda >= self.lambda_min && lambda <= self.lambda_max
    }
}

fn check_positive<T: Scalar>(y: T) -> Result<T> {
    if y > T::zero() && y.is_finite() {
        Ok(y.ln())
    } else {
        Err(Error::InvalidData(format!("response must be strictly positive, got {y}")))
    }
}

/// `T(y, λ)`.
pub fn box_cox<T: Scalar>(y: T, lambda: T) -> Result<T> {
    check_positive(y).map(|l| box_cox_log(l, lambda, 0))
}

/// `∂T(y, λ)/∂λ`.
pub fn box_cox_d1<T: Scalar>(y: T, lambda: T) -> Result<T> {
    check_positive(y).map(|l| box_cox_log(l, lambda, 1))
}

/// `∂²T(y, λ)/∂λ²`.
pub fn box_cox_d2<T: Scalar>(y: T, lambda: T) -> Result<T> {
    check_positive(y).map(|l| box_cox_log(l, lambda, 2))
}

/// `∂³T(y, λ)/∂λ³`.
pub fn box_cox_d3<T: Scalar>(y: T, lambda: T) -> Result<T> {
    check_positive(y).map(|l| box_cox_log(l, lambda, 3))
}

/// Derivative of order `order ∈ {0,1,2,3}` of the transform, given `log y`.
///
/// Unchecked hot-path entry point; the caller guarantees `log_y` is finite.
pub fn box_cox_log<T: Scalar>(log_y: T, lambda: T, order: u8) -> T {
    let x = lambda * log_y;
    if order == 0 {
        return if lambda == T::zero() { log_y } else { x.exp_m1() / lambda };
    }
    if x.abs() <= T::lit(SERIES_CUTOFF) {
        return series(log_y, x, order);
    }
    let ex = x.exp();
    let one = T::one();
    let first = ex * (x - one) + one;
    match order {
        1 => first / (lambda * lambda),
        2 => (ex * x * x - T::lit(2.0) * first) / lambda.powi(3),
        3 => (ex * x * x * (x - T::lit(3.0)) + T::lit(6.0) * first) / lambda.powi(4),
        _ => panic!("box-cox derivative order {order} not supported"),
    }
}

fn series<T: Scalar>(log_y: T, x: T, order: u8) -> T {
    let m = order as usize;
    let mut term = T::one(); // x^k / k!
    let mut acc = T::zero();
    for k in 0..MAX_SERIES_TERMS {
        let contrib = term / T::from_count(k + m + 1);
        acc += contrib;
        if contrib.abs() <= T::epsilon() * acc.abs() * T::lit(0.25) {
            break;
        }
        term = term * x / T::from_count(k + 1);
    }
    acc * log_y.powi(m as i32 + 1)
}

/// Inverse transform `(λu + 1)^{1/λ}` (or `e^u` at λ = 0); `None` outside the domain.
pub fn inverse_box_cox<T: Scalar>(u: T, lambda: T) -> Option<T> {
    if lambda == T::zero() {
        return Some(u.exp());
    }
    let base = lambda * u + T::one();
    if base <= T::zero() {
        return None;
    }
    let y = ((lambda * u).ln_1p() / lambda).exp();
    (y.is_finite() && y > T::zero()).then_some(y)
}

/// Applies the derivative of the given order to every element of `y`.
pub fn box_cox_vec<T: Scalar>(y: &[T], lambda: T, order: u8) -> Result<Vec<T>> {
    y.iter()
        .map(|&v| check_positive(v).map(|l| box_cox_log(l, lambda, order)))
        .collect()
}
