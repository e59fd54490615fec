//! Starting points shared by every solver.
//!
//! Endmembers come from a pure-pixel search in the style of vertex component
//! analysis: the data are projected onto their dominant `K`-dimensional
//! subspace and pixels are picked one at a time as the extreme point along a
//! random direction orthogonal to everything already picked. Abundances are
//! then the per-pixel nonnegative least-squares fit to those endmembers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Result, UnmixError};
use crate::linalg;
use crate::model::{validate, Abundances, Endmembers, SpectraMatrix};

/// Redraws of the random direction before falling back to a distance search.
const DIRECTION_ATTEMPTS: usize = 8;

fn to_nalgebra(a: &ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Orthonormal basis (D x K) of the dominant left singular subspace of `y`.
fn dominant_subspace(y: &ArrayView2<f64>, k: usize) -> Array2<f64> {
    let (d, n) = y.dim();
    if d <= n {
        let gram = linalg::matmul_nt(y, y);
        let eig = SymmetricEigen::new(to_nalgebra(&gram.view()));
        let order = descending(&eig.eigenvalues);
        Array2::from_shape_fn((d, k), |(i, j)| eig.eigenvectors[(i, order[j])])
    } else {
        // Left vectors from the smaller Gram matrix: u = Y v / |Y v|.
        let gram = linalg::matmul_tn(y, y);
        let eig = SymmetricEigen::new(to_nalgebra(&gram.view()));
        let order = descending(&eig.eigenvalues);
        let mut basis = Array2::zeros((d, k));
        for (j, &idx) in order.iter().take(k).enumerate() {
            let v = Array1::from_iter(eig.eigenvectors.column(idx).iter().copied());
            let mut u = y.dot(&v);
            let norm = u.dot(&u).sqrt();
            if norm > 0.0 {
                u /= norm;
            }
            basis.column_mut(j).assign(&u);
        }
        basis
    }
}

fn descending(values: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Removes the components of `v` along the orthonormal `basis` vectors.
fn orthogonalize(v: &mut Array1<f64>, basis: &[Array1<f64>]) {
    // Two passes of Gram-Schmidt keep the result orthogonal in floating point.
    for _ in 0..2 {
        for q in basis {
            let c = v.dot(q);
            v.scaled_add(-c, q);
        }
    }
}

fn argmax_abs(v: ArrayView1<f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best_val {
            best_val = x.abs();
            best = i;
        }
    }
    best
}

/// Pixel indices chosen as endmembers, in selection order.
pub fn select_pure_pixels(y: &SpectraMatrix, k: usize, seed: u64) -> Result<Vec<usize>> {
    validate(y.as_array(), k)?;
    let yv = y.view();
    if yv.iter().all(|&v| v == 0.0) {
        return Err(UnmixError::DegenerateData("all-zero data".into()));
    }
    let basis = dominant_subspace(&yv, k);
    let proj = linalg::matmul_tn(&basis.view(), &yv); // K x N
    let col_norm = proj
        .columns()
        .into_iter()
        .map(|c| c.dot(&c).sqrt())
        .fold(0.0f64, f64::max);
    let tiny = 1e-10 * col_norm;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = Vec::with_capacity(k);
    let mut span: Vec<Array1<f64>> = Vec::with_capacity(k);

    'outer: while picked.len() < k {
        for _ in 0..DIRECTION_ATTEMPTS {
            let mut f: Array1<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
            orthogonalize(&mut f, &span);
            let norm = f.dot(&f).sqrt();
            if norm == 0.0 {
                continue;
            }
            f /= norm;
            let scores = f.dot(&proj);
            let idx = argmax_abs(scores.view());
            let mut candidate = proj.column(idx).to_owned();
            orthogonalize(&mut candidate, &span);
            let cnorm = candidate.dot(&candidate).sqrt();
            if cnorm > tiny && !picked.contains(&idx) {
                picked.push(idx);
                span.push(candidate / cnorm);
                continue 'outer;
            }
        }
        // The projected data do not span K directions; fill the rest by distance.
        fill_by_distance(&yv, &mut picked, k);
        break;
    }
    Ok(picked)
}

/// Adds pixels furthest from the span of the picked pixels (or, once that
/// span explains everything, furthest from the nearest picked pixel).
fn fill_by_distance(y: &ArrayView2<f64>, picked: &mut Vec<usize>, k: usize) {
    while picked.len() < k {
        let mut span: Vec<Array1<f64>> = Vec::new();
        for &p in picked.iter() {
            let mut v = y.column(p).to_owned();
            orthogonalize(&mut v, &span);
            let n = v.dot(&v).sqrt();
            if n > 0.0 {
                span.push(v / n);
            }
        }
        let mut best = None;
        let mut best_key = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for n in 0..y.ncols() {
            if picked.contains(&n) {
                continue;
            }
            let col = y.column(n);
            let mut v = col.to_owned();
            orthogonalize(&mut v, &span);
            let off_span = v.dot(&v);
            let nearest = picked
                .iter()
                .map(|&p| {
                    let diff = &col - &y.column(p);
                    diff.dot(&diff)
                })
                .fold(f64::INFINITY, f64::min);
            let key = (off_span, nearest);
            if key.0 > best_key.0 * (1.0 + 1e-12)
                || (key.0 >= best_key.0 * (1.0 - 1e-12) && key.1 > best_key.1)
            {
                best_key = key;
                best = Some(n);
            }
        }
        picked.push(best.expect("validated: at least K pixels"));
    }
}

/// Endmembers initialised as selected pixel spectra.
pub fn init_endmembers(y: &SpectraMatrix, k: usize, seed: u64) -> Result<Endmembers> {
    let idx = select_pure_pixels(y, k, seed)?;
    Endmembers::new(y.as_array().select(ndarray::Axis(1), &idx))
}

/// Solves `min_{w >= 0} |b - A w|^2` given the normal equations `ata = A^T A`
/// and `atb = A^T b`, by the Lawson-Hanson active-set method.
pub fn nnls_normal(ata: &DMatrix<f64>, atb: &DVector<f64>) -> DVector<f64> {
    let k = atb.len();
    let mut w = DVector::<f64>::zeros(k);
    let mut passive = vec![false; k];
    let scale = ata.diagonal().max().max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale * (1.0 + atb.amax());
    let max_iter = 3 * k + 10;

    for _ in 0..max_iter {
        let grad = atb - ata * &w;
        let mut best = None;
        let mut best_g = tol;
        for j in 0..k {
            if !passive[j] && grad[j] > best_g {
                best_g = grad[j];
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        passive[j] = true;

        // Inner loop: keep the passive solution feasible.
        loop {
            let idx: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let z = solve_subset(ata, atb, &idx);
            if z.iter().all(|&v| v > 0.0) {
                for (pos, &i) in idx.iter().enumerate() {
                    w[i] = z[pos];
                }
                for i in (0..k).filter(|&i| !passive[i]) {
                    w[i] = 0.0;
                }
                break;
            }
            // Step toward z until the first passive variable hits zero.
            let mut alpha = f64::INFINITY;
            let mut hit = None;
            for (pos, &i) in idx.iter().enumerate() {
                if z[pos] <= 0.0 {
                    let denom = w[i] - z[pos];
                    let a = if denom > 0.0 { w[i] / denom } else { 0.0 };
                    if a < alpha {
                        alpha = a;
                        hit = Some(i);
                    }
                }
            }
            for (pos, &i) in idx.iter().enumerate() {
                w[i] += alpha * (z[pos] - w[i]);
            }
            if let Some(h) = hit {
                w[h] = 0.0;
                passive[h] = false;
            }
            for i in 0..k {
                if passive[i] && w[i] <= 0.0 {
                    w[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    w.map(|v| v.max(0.0))
}

fn solve_subset(ata: &DMatrix<f64>, atb: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    let m = idx.len();
    let sub = DMatrix::from_fn(m, m, |a, b| ata[(idx[a], idx[b])]);
    let rhs = DVector::from_fn(m, |a, _| atb[idx[a]]);
    if let Some(chol) = sub.clone().cholesky() {
        return chol.solve(&rhs);
    }
    // Singular subsystem: least-squares via pseudo-inverse.
    sub.svd(true, true)
        .solve(&rhs, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(m))
}

/// Per-pixel nonnegative least squares of `y` on the endmembers `x`.
pub fn init_abundances(y: &SpectraMatrix, x: &Endmembers) -> Result<Abundances> {
    let (yv, xv) = (y.view(), x.view());
    if xv.nrows() != yv.nrows() {
        return Err(UnmixError::ShapeMismatch(format!(
            "endmembers have {} bands, data has {}",
            xv.nrows(),
            yv.nrows()
        )));
    }
    let k = xv.ncols();
    let ata = to_nalgebra(&linalg::matmul_tn(&xv, &xv).view());
    let atb = linalg::matmul_tn(&xv, &yv); // K x N
    let solve_pixel = |n: usize| {
        let rhs = DVector::from_fn(k, |i, _| atb[[i, n]]);
        nnls_normal(&ata, &rhs)
    };

    #[cfg(feature = "parallel")]
    let cols: Vec<DVector<f64>> = (0..yv.ncols()).into_par_iter().map(solve_pixel).collect();
    #[cfg(not(feature = "parallel"))]
    let cols: Vec<DVector<f64>> = (0..yv.ncols()).map(solve_pixel).collect();

    let w = Array2::from_shape_fn((k, yv.ncols()), |(i, n)| cols[n][i]);
    Abundances::new(w)
}
