//! Dense products used by the solvers.
//!
//! With the `parallel` feature the output is split into fixed-size row or
//! column blocks that are filled concurrently. Block boundaries depend only on
//! the shapes, never on the thread count, so results are reproducible.

use ndarray::{Array2, ArrayView2};

#[cfg(feature = "parallel")]
use ndarray::linalg::general_mat_mul;
#[cfg(feature = "parallel")]
use ndarray::Axis;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Rows (or columns) per parallel block.
pub const BLOCK: usize = 64;

/// Below this many multiply-adds the parallel path falls back to one block.
pub const PAR_THRESHOLD: usize = 1 << 18;

pub fn matmul_seq(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    a.dot(b)
}

#[cfg(feature = "parallel")]
pub fn matmul_par(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    let (m, k) = a.dim();
    let n = b.ncols();
    assert_eq!(k, b.nrows(), "inner dimensions differ");
    if m * n * k < PAR_THRESHOLD {
        return a.dot(b);
    }
    let mut out = Array2::<f64>::zeros((m, n));
    if m >= n {
        out.axis_chunks_iter_mut(Axis(0), BLOCK)
            .into_par_iter()
            .enumerate()
            .for_each(|(i, mut block)| {
                let rows = a.slice(ndarray::s![i * BLOCK..i * BLOCK + block.nrows(), ..]);
                general_mat_mul(1.0, &rows, b, 0.0, &mut block);
            });
    } else {
        out.axis_chunks_iter_mut(Axis(1), BLOCK)
            .into_par_iter()
            .enumerate()
            .for_each(|(j, mut block)| {
                let cols = b.slice(ndarray::s![.., j * BLOCK..j * BLOCK + block.ncols()]);
                general_mat_mul(1.0, a, &cols, 0.0, &mut block);
            });
    }
    out
}

/// `a * b`, dispatched on the `parallel` feature.
pub fn matmul(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    #[cfg(feature = "parallel")]
    {
        matmul_par(a, b)
    }
    #[cfg(not(feature = "parallel"))]
    {
        matmul_seq(a, b)
    }
}

/// `a^T * b` without materialising the transpose.
pub fn matmul_tn(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    matmul(&a.t(), b)
}

/// `a * b^T` without materialising the transpose.
pub fn matmul_nt(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    matmul(a, &b.t())
}

/// Squared Frobenius norm.
pub fn sq_norm(a: &ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Sum of elementwise products, `<a, b>`.
pub fn inner(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> f64 {
    ndarray::Zip::from(a)
        .and(b)
        .fold(0.0, |acc, &x, &y| acc + x * y)
}

/// `Y - X W`.
pub fn residual(y: &ArrayView2<f64>, x: &ArrayView2<f64>, w: &ArrayView2<f64>) -> Array2<f64> {
    let mut r = matmul(x, w);
    ndarray::Zip::from(&mut r)
        .and(y)
        .for_each(|r, &y| *r = y - *r);
    r
}

/// Squared residual norm of every row of `Y - X W`.
pub fn band_residuals(y: &ArrayView2<f64>, x: &ArrayView2<f64>, w: &ArrayView2<f64>) -> Vec<f64> {
    residual(y, x, w)
        .rows()
        .into_iter()
        .map(|row| row.iter().map(|v| v * v).sum())
        .collect()
}
