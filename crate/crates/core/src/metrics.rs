//! Spectral angle, abundance RMSE and matching of estimates to ground truth.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Result, UnmixError};

/// Spectral angle distance in radians, in `[0, pi]`.
///
/// Computed as `2 atan2(|a/|a| - b/|b||, |a/|a| + b/|b||)`, which equals
/// `arccos(a.b / (|a| |b|))` but stays accurate for nearly parallel spectra.
pub fn sad(x_true: ArrayView1<f64>, x_est: ArrayView1<f64>) -> Result<f64> {
    if x_true.len() != x_est.len() {
        return Err(UnmixError::ShapeMismatch(format!(
            "spectra of length {} and {}",
            x_true.len(),
            x_est.len()
        )));
    }
    let na = x_true.dot(&x_true).sqrt();
    let nb = x_est.dot(&x_est).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(UnmixError::ZeroNormSpectrum);
    }
    let (mut diff, mut sum) = (0.0, 0.0);
    for (&a, &b) in x_true.iter().zip(x_est.iter()) {
        let (a, b) = (a / na, b / nb);
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    Ok(2.0 * diff.sqrt().atan2(sum.sqrt()))
}

/// Root-mean-square difference of two abundance maps.
pub fn rmse(w_true: ArrayView1<f64>, w_est: ArrayView1<f64>) -> Result<f64> {
    if w_true.len() != w_est.len() {
        return Err(UnmixError::ShapeMismatch(format!(
            "abundance maps of length {} and {}",
            w_true.len(),
            w_est.len()
        )));
    }
    let ss: f64 = w_true
        .iter()
        .zip(w_est.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((ss / w_true.len() as f64).sqrt())
}

/// Pairwise SAD, `cost[[i, j]] = sad(true_i, est_j)`.
pub fn sad_matrix(x_true: ArrayView2<f64>, x_est: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x_true.dim() != x_est.dim() {
        return Err(UnmixError::ShapeMismatch(format!(
            "true endmembers {:?}, estimates {:?}",
            x_true.dim(),
            x_est.dim()
        )));
    }
    let k = x_true.ncols();
    let mut cost = Array2::zeros((k, k));
    for i in 0..k {
        for j in 0..k {
            cost[[i, j]] = sad(x_true.column(i), x_est.column(j))?;
        }
    }
    Ok(cost)
}

/// Minimum-cost perfect assignment on a square matrix (Hungarian method,
/// potentials form). Returns `assignment[row] = column`.
pub fn min_cost_assignment(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment needs a square cost matrix");
    // 1-based arrays with a sentinel column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if matched_row[j] > 0 {
            assignment[matched_row[j] - 1] = j - 1;
        }
    }
    assignment
}

/// For each true endmember `i`, the estimated column matched to it, chosen to
/// minimise the total SAD.
pub fn match_endmembers(x_true: ArrayView2<f64>, x_est: ArrayView2<f64>) -> Result<Vec<usize>> {
    Ok(min_cost_assignment(&sad_matrix(x_true, x_est)?))
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Rescale each estimated pixel's abundances to sum to one before RMSE.
    pub renormalize: bool,
    /// Bands left out of SAD. Applied to the estimates only when they still
    /// have the full band count.
    pub exclude_bands: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberScore {
    pub true_index: usize,
    pub est_index: usize,
    pub sad: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub per_endmember: Vec<EndmemberScore>,
    pub mean_sad: f64,
    pub mean_rmse: f64,
}

fn keep_bands(total: usize, exclude: &[usize]) -> Result<Vec<usize>> {
    if let Some(&b) = exclude.iter().find(|&&b| b >= total) {
        return Err(UnmixError::ShapeMismatch(format!(
            "excluded band {b} out of range for {total} bands"
        )));
    }
    Ok((0..total).filter(|d| !exclude.contains(d)).collect())
}

/// Matches endmembers, then scores each pair by SAD and abundance RMSE.
pub fn evaluate(
    x_true: ArrayView2<f64>,
    w_true: ArrayView2<f64>,
    x_est: ArrayView2<f64>,
    w_est: ArrayView2<f64>,
    opts: &EvalOptions,
) -> Result<Evaluation> {
    let d = x_true.nrows();
    let keep = keep_bands(d, &opts.exclude_bands)?;
    let xt = x_true.select(ndarray::Axis(0), &keep);
    let xe = if x_est.nrows() == d {
        x_est.select(ndarray::Axis(0), &keep)
    } else {
        x_est.to_owned()
    };
    if w_true.dim() != w_est.dim() {
        return Err(UnmixError::ShapeMismatch(format!(
            "true abundances {:?}, estimates {:?}",
            w_true.dim(),
            w_est.dim()
        )));
    }
    let perm = match_endmembers(xt.view(), xe.view())?;
    let mut w_est = w_est.to_owned();
    if opts.renormalize {
        for mut col in w_est.columns_mut() {
            let s = col.sum();
            if s > 0.0 {
                col /= s;
            }
        }
    }
    let mut per_endmember = Vec::with_capacity(perm.len());
    for (i, &j) in perm.iter().enumerate() {
        per_endmember.push(EndmemberScore {
            true_index: i,
            est_index: j,
            sad: sad(xt.column(i), xe.column(j))?,
            rmse: rmse(w_true.row(i), w_est.row(j))?,
        });
    }
    let k = per_endmember.len() as f64;
    Ok(Evaluation {
        mean_sad: per_endmember.iter().map(|s| s.sad).sum::<f64>() / k,
        mean_rmse: per_endmember.iter().map(|s| s.rmse).sum::<f64>() / k,
        per_endmember,
    })
}

/// [`evaluate`] for a generated scene and a solver report.
pub fn evaluate_run(
    scene: &crate::synthgen::Scene,
    report: &crate::model::SolveReport,
    opts: &EvalOptions,
) -> Result<Evaluation> {
    evaluate(
        scene.x_true.view(),
        scene.w_true.view(),
        report.endmembers.view(),
        report.abundances.view(),
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    #[allow(clippy::approx_constant)] // the decimal value is part of the example
    fn sad_examples() {
        let a = array![1.0, 2.0, 3.0];
        assert_eq!(sad(a.view(), a.view()).unwrap(), 0.0);
        assert!(
            (sad(array![1.0, 0.0].view(), array![0.0, 3.0].view()).unwrap() - FRAC_PI_2).abs()
                < 1e-15
        );
        let v = sad(array![1.0, 1.0, 0.0].view(), array![1.0, 0.0, 0.0].view()).unwrap();
        assert!((v - FRAC_PI_4).abs() < 1e-15);
        assert!((v - 0.785398).abs() < 1e-6);
        assert!(matches!(
            sad(array![0.0, 0.0].view(), a.slice(ndarray::s![..2])),
            Err(UnmixError::ZeroNormSpectrum)
        ));
    }

    #[test]
    fn rmse_examples() {
        let a = array![0.1, 0.4, 0.2, 0.9];
        assert_eq!(rmse(a.view(), a.view()).unwrap(), 0.0);
        let shifted = &a + 0.25;
        assert!((rmse(a.view(), shifted.view()).unwrap() - 0.25).abs() < 1e-15);
        let z = Array1::zeros(4);
        assert_eq!(
            rmse(array![1.0, 0.0, 0.0, 0.0].view(), z.view()).unwrap(),
            0.5
        );
        assert!(rmse(a.view(), array![1.0].view()).is_err());
    }

    #[test]
    fn matching_undoes_swap_and_ignores_scale() {
        let x = array![[1.0, 0.0, 0.2], [0.1, 1.0, 0.3], [0.0, 0.2, 1.0]];
        let swapped = x.select(ndarray::Axis(1), &[2, 0, 1]);
        assert_eq!(
            match_endmembers(x.view(), swapped.view()).unwrap(),
            vec![1, 2, 0]
        );
        let scaled = &x * &array![2.0, 0.5, 7.0];
        assert_eq!(
            match_endmembers(x.view(), scaled.view()).unwrap(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn assignment_small() {
        let c = array![[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]];
        // optimal: (0,1) (1,0) (2,2) = 1 + 2 + 2
        assert_eq!(min_cost_assignment(&c), vec![1, 0, 2]);
    }

    #[test]
    fn perfect_recovery_scores_zero() {
        let x = array![[1.0, 0.0], [0.5, 1.0], [0.0, 0.3]];
        let w = array![[0.2, 0.8, 0.5], [0.8, 0.2, 0.5]];
        let xe = x.select(ndarray::Axis(1), &[1, 0]);
        let we = w.select(ndarray::Axis(0), &[1, 0]);
        let e = evaluate(
            x.view(),
            w.view(),
            xe.view(),
            we.view(),
            &EvalOptions::default(),
        )
        .unwrap();
        assert!(e.mean_sad.abs() < 1e-7);
        assert_eq!(e.mean_rmse, 0.0);
    }

    #[test]
    fn zero_abundance_estimate() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let w = array![[0.3, 0.4, 0.0, 1.0], [0.7, 0.6, 1.0, 0.0]];
        let e = evaluate(
            x.view(),
            w.view(),
            x.view(),
            Array2::zeros((2, 4)).view(),
            &EvalOptions::default(),
        )
        .unwrap();
        for s in &e.per_endmember {
            let row = w.row(s.true_index);
            let rms = (row.dot(&row) / 4.0).sqrt();
            assert!((s.rmse - rms).abs() < 1e-15);
        }
        let mean = e.per_endmember.iter().map(|s| s.rmse).sum::<f64>() / 2.0;
        assert_eq!(e.mean_rmse, mean);
    }

    #[test]
    fn band_exclusion() {
        let x = array![[1.0, 0.0], [0.0, 1.0], [5.0, 5.0]];
        let w = array![[1.0], [0.0]];
        let mut xe = x.clone();
        xe[[2, 0]] = 0.0;
        let opts = EvalOptions {
            exclude_bands: vec![2],
            ..Default::default()
        };
        let e = evaluate(x.view(), w.view(), xe.view(), w.view(), &opts).unwrap();
        assert_eq!(e.mean_sad, 0.0);
        // Estimates already reduced to the kept bands.
        let reduced = xe.slice(ndarray::s![..2, ..]).to_owned();
        let e2 = evaluate(x.view(), w.view(), reduced.view(), w.view(), &opts).unwrap();
        assert_eq!(e2.mean_sad, 0.0);
        let bad = EvalOptions {
            exclude_bands: vec![9],
            ..Default::default()
        };
        assert!(evaluate(x.view(), w.view(), x.view(), w.view(), &bad).is_err());
    }

    #[test]
    fn renormalized_rmse() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let w = array![[0.25], [0.75]];
        let we = array![[0.5], [1.5]];
        let opts = EvalOptions {
            renormalize: true,
            ..Default::default()
        };
        let e = evaluate(x.view(), w.view(), x.view(), we.view(), &opts).unwrap();
        assert!(e.mean_rmse < 1e-15);
    }
}
