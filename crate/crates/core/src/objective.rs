//! Losses and objectives, evaluated directly from their definitions.
//!
//! Every function here takes views so the solvers and the tests can share
//! them. Shapes are `Y: D x N`, `X: D x K`, `W: K x N`.

use ndarray::{ArrayView1, ArrayView2};

use crate::error::{Result, UnmixError};
use crate::linalg;
use crate::model::check_factor_shapes;

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(UnmixError::NonPositiveSigma(sigma2));
    }
    Ok(())
}

/// `||Y - XW||_F^2`.
pub fn frobenius_loss(y: ArrayView2<f64>, x: ArrayView2<f64>, w: ArrayView2<f64>) -> Result<f64> {
    check_factor_shapes(&y, &x, &w)?;
    Ok(linalg::sq_norm(&linalg::residual(&y, &x, &w).view()))
}

/// Gaussian kernel of a squared norm, `exp(-r2 / sigma2)`.
#[inline]
pub fn kernel(r2: f64, sigma2: f64) -> f64 {
    (-r2 / sigma2).exp()
}

/// Negative correntropy summed over bands: `-sum_d exp(-||y^d - (XW)^d||^2 / sigma2)`.
///
/// The kernel divides by `sigma2`, not `2 sigma2`.
pub fn correntropy_loss(
    y: ArrayView2<f64>,
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    sigma2: f64,
) -> Result<f64> {
    check_factor_shapes(&y, &x, &w)?;
    check_sigma2(sigma2)?;
    Ok(correntropy_from_residuals(
        &linalg::band_residuals(&y, &x, &w),
        sigma2,
    ))
}

pub(crate) fn correntropy_from_residuals(band_r2: &[f64], sigma2: f64) -> f64 {
    -band_r2.iter().map(|&r2| kernel(r2, sigma2)).sum::<f64>()
}

/// Correntropy loss plus `2 lambda sum_n ||w_n||_1`.
pub fn cenmf_objective(
    y: ArrayView2<f64>,
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    sigma2: f64,
    lambda: f64,
) -> Result<f64> {
    Ok(correntropy_loss(y, x, w, sigma2)? + l1_penalty(w, lambda))
}

/// `2 lambda sum |W|`.
pub fn l1_penalty(w: ArrayView2<f64>, lambda: f64) -> f64 {
    2.0 * lambda * w.iter().map(|v| v.abs()).sum::<f64>()
}

/// Conjugate term of the Welsch kernel, `psi(-u) = u ln u - u`.
///
/// With this choice `min_u (u a + psi(-u)) = -exp(-a)`, attained at `u = exp(-a)`.
#[inline]
pub fn welsch_conjugate(u: f64) -> f64 {
    u * u.ln() - u
}

/// Half-quadratic augmented objective for fixed band weights `u`.
pub fn augmented_objective(
    y: ArrayView2<f64>,
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    u: ArrayView1<f64>,
    sigma2: f64,
    lambda: f64,
) -> Result<f64> {
    check_factor_shapes(&y, &x, &w)?;
    check_sigma2(sigma2)?;
    if u.len() != y.nrows() {
        return Err(UnmixError::ShapeMismatch(format!(
            "{} band weights for {} bands",
            u.len(),
            y.nrows()
        )));
    }
    for (band, &value) in u.iter().enumerate() {
        if !(value > 0.0 && value <= 1.0) {
            return Err(UnmixError::WeightOutOfRange { band, value });
        }
    }
    let r2 = linalg::band_residuals(&y, &x, &w);
    let fit: f64 = r2
        .iter()
        .zip(u.iter())
        .map(|(&r2, &ud)| ud * r2 / sigma2 + welsch_conjugate(ud))
        .sum();
    Ok(fit + l1_penalty(w, lambda))
}

/// Objective of the scaled inner problem: `||Yh - Xh W||_F^2 + 2 lambda sum |W|`.
pub fn weighted_l1_objective(
    yhat: ArrayView2<f64>,
    xhat: ArrayView2<f64>,
    w: ArrayView2<f64>,
    lambda: f64,
) -> Result<f64> {
    Ok(frobenius_loss(yhat, xhat, w)? + l1_penalty(w, lambda))
}
