//! Correntropy-weighted sparse NMF.
//!
//! The outer loop alternates closed-form band weights with a weighted
//! l1-regularised NMF solved by multiplicative updates. Each band's
//! contribution is scaled by `u_d / sigma^2`, so bands that fit badly are
//! progressively ignored.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{Result, UnmixError};
use crate::init;
use crate::linalg;
use crate::model::{
    check_factor_shapes, validate, Abundances, BandWeights, Endmembers, KernelScale, Lambda,
    PassCheck, SolveReport, SolverConfig, SpectraMatrix, Termination,
};
use crate::objective::{correntropy_from_residuals, kernel, l1_penalty};

/// Smallest band weight; keeps `u` strictly positive when the kernel underflows.
pub const MIN_WEIGHT: f64 = 1e-300;

/// `u_d = exp(-||y^d - (XW)^d||^2 / sigma2)`, floored at [`MIN_WEIGHT`].
pub fn band_weights(
    y: ArrayView2<f64>,
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    sigma2: f64,
) -> Result<BandWeights> {
    check_factor_shapes(&y, &x, &w)?;
    if sigma2.is_nan() || sigma2 <= 0.0 {
        return Err(UnmixError::NonPositiveSigma(sigma2));
    }
    Ok(weights_from_residuals(
        &linalg::band_residuals(&y, &x, &w),
        sigma2,
    ))
}

fn weights_from_residuals(band_r2: &[f64], sigma2: f64) -> BandWeights {
    let u: Array1<f64> = band_r2
        .iter()
        .map(|&r2| kernel(r2, sigma2).max(MIN_WEIGHT))
        .collect();
    BandWeights::new(u).expect("kernel values lie in (0, 1]")
}

/// Kernel width from the residual: `max(alpha / (2 D N) * ||Y - XW||_F^2, floor)`.
pub fn update_sigma2(
    y: ArrayView2<f64>,
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    alpha: f64,
    floor: f64,
) -> Result<f64> {
    check_factor_shapes(&y, &x, &w)?;
    let total: f64 = linalg::band_residuals(&y, &x, &w).iter().sum();
    Ok(sigma2_from_total(
        total,
        y.dim(),
        alpha,
        KernelScale::PerEntry,
        floor,
    ))
}

fn sigma2_from_total(
    total_r2: f64,
    (d, n): (usize, usize),
    alpha: f64,
    scale: KernelScale,
    floor: f64,
) -> f64 {
    let per_entry = alpha / (2.0 * d as f64 * n as f64) * total_r2;
    let s = match scale {
        KernelScale::PerEntry => per_entry,
        KernelScale::PerBand => per_entry * n as f64,
    };
    s.max(floor)
}

/// Sparsity weight estimated from how peaked each band is:
/// `(1/sqrt D) sum_d (sqrt N - ||y^d||_1 / ||y^d||_2) / (sqrt N - 1)`.
///
/// All-zero bands contribute nothing.
pub fn estimate_lambda(y: ArrayView2<f64>) -> Result<f64> {
    let (d, n) = y.dim();
    if n < 2 {
        return Err(UnmixError::DegenerateData(
            "sparsity estimate needs at least 2 pixels".into(),
        ));
    }
    let sqrt_n = (n as f64).sqrt();
    let mut total = 0.0;
    let mut used = 0usize;
    for band in y.rows() {
        let l2 = band.iter().map(|v| v * v).sum::<f64>().sqrt();
        if l2 == 0.0 {
            continue;
        }
        let l1: f64 = band.iter().map(|v| v.abs()).sum();
        total += (sqrt_n - l1 / l2) / (sqrt_n - 1.0);
        used += 1;
    }
    if used == 0 {
        return Err(UnmixError::DegenerateBand);
    }
    // Clamp rounding noise; the exact value lies in [0, sqrt D].
    Ok((total / (d as f64).sqrt()).clamp(0.0, (d as f64).sqrt()))
}

pub(crate) fn resolve_lambda(lambda: Lambda, y: ArrayView2<f64>) -> Result<f64> {
    match lambda {
        Lambda::Fixed(v) => Ok(v),
        Lambda::Auto => estimate_lambda(y),
    }
}

/// Stopping rule and guard for the inner multiplicative loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerParams {
    pub tol: f64,
    pub max_iter: usize,
    pub denom_eps: f64,
}

impl From<&SolverConfig> for InnerParams {
    fn from(cfg: &SolverConfig) -> Self {
        Self {
            tol: cfg.inner_tol,
            max_iter: cfg.max_inner,
            denom_eps: cfg.denom_eps,
        }
    }
}

/// `base <- base * numer / (denom + shift)`, elementwise.
fn multiplicative(base: &mut Array2<f64>, numer: &Array2<f64>, denom: &Array2<f64>, shift: f64) {
    Zip::from(base)
        .and(numer)
        .and(denom)
        .for_each(|b, &n, &d| *b *= n / (d + shift));
}

/// Products left over from one step, reused for the objective and the next step.
struct StepProducts {
    xty: Array2<f64>,
    xtx: Array2<f64>,
}

/// One X-then-W update on the scaled problem. `gram_w` must equal `W W^T`.
fn step_in_place(
    yhat: &ArrayView2<f64>,
    xhat: &mut Array2<f64>,
    w: &mut Array2<f64>,
    gram_w: &Array2<f64>,
    lambda: f64,
    eps: f64,
) -> StepProducts {
    let ywt = linalg::matmul_nt(yhat, &w.view());
    let xwwt = linalg::matmul(&xhat.view(), &gram_w.view());
    multiplicative(xhat, &ywt, &xwwt, eps);

    let xty = linalg::matmul_tn(&xhat.view(), yhat);
    let xtx = linalg::matmul_tn(&xhat.view(), &xhat.view());
    let xtxw = linalg::matmul(&xtx.view(), &w.view());
    multiplicative(w, &xty, &xtxw, lambda + eps);
    StepProducts { xty, xtx }
}

/// One multiplicative update of the scaled problem
/// `min ||Yh - Xh W||_F^2 + 2 lambda sum W`: first `Xh`, then `W` using the new `Xh`.
pub fn weighted_update_step(
    yhat: ArrayView2<f64>,
    xhat: ArrayView2<f64>,
    w: ArrayView2<f64>,
    lambda: f64,
    denom_eps: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_factor_shapes(&yhat, &xhat, &w)?;
    let mut xhat = xhat.to_owned();
    let mut w = w.to_owned();
    let gram_w = linalg::matmul_nt(&w.view(), &w.view());
    step_in_place(&yhat, &mut xhat, &mut w, &gram_w, lambda, denom_eps);
    Ok((xhat, w))
}

#[derive(Debug, Clone)]
pub struct InnerResult {
    pub xhat: Array2<f64>,
    pub w: Array2<f64>,
    pub iterations: usize,
    /// Scaled-problem objective after the last step.
    pub objective: f64,
}

/// Repeats [`weighted_update_step`] until the relative objective change
/// drops below `params.tol` or the budget runs out.
pub fn inner_solve(
    yhat: ArrayView2<f64>,
    xhat0: Array2<f64>,
    w0: Array2<f64>,
    lambda: f64,
    params: &InnerParams,
) -> Result<InnerResult> {
    inner_solve_observed(yhat, xhat0, w0, lambda, params, |_, _| {})
}

/// [`inner_solve`] with a callback after every step.
pub fn inner_solve_observed(
    yhat: ArrayView2<f64>,
    mut xhat: Array2<f64>,
    mut w: Array2<f64>,
    lambda: f64,
    params: &InnerParams,
    mut on_step: impl FnMut(&Array2<f64>, &Array2<f64>),
) -> Result<InnerResult> {
    check_factor_shapes(&yhat, &xhat.view(), &w.view())?;
    let yy = linalg::sq_norm(&yhat);
    // ||Yh - Xh W||^2 = ||Yh||^2 - 2 <Xh^T Yh, W> + <Xh^T Xh, W W^T>
    let objective = |xty: &Array2<f64>, xtx: &Array2<f64>, w: &Array2<f64>, gram: &Array2<f64>| {
        (yy - 2.0 * linalg::inner(&xty.view(), &w.view())
            + linalg::inner(&xtx.view(), &gram.view()))
        .max(0.0)
            + l1_penalty(w.view(), lambda)
    };
    // The expanded form loses about 1e-15 * yy to rounding; changes below
    // that floor are noise.
    let scale_floor = (1e-8 * yy).max(f64::MIN_POSITIVE);

    let mut gram_w = linalg::matmul_nt(&w.view(), &w.view());
    let mut prev = {
        let xty = linalg::matmul_tn(&xhat.view(), &yhat);
        let xtx = linalg::matmul_tn(&xhat.view(), &xhat.view());
        objective(&xty, &xtx, &w, &gram_w)
    };
    let mut iterations = 0;
    loop {
        let products = step_in_place(&yhat, &mut xhat, &mut w, &gram_w, lambda, params.denom_eps);
        iterations += 1;
        on_step(&xhat, &w);
        gram_w = linalg::matmul_nt(&w.view(), &w.view());
        let current = objective(&products.xty, &products.xtx, &w, &gram_w);
        let change = (prev - current).abs() / prev.abs().max(scale_floor);
        prev = current;
        if change < params.tol || iterations >= params.max_iter {
            break;
        }
    }
    Ok(InnerResult {
        xhat,
        w,
        iterations,
        objective: prev,
    })
}

/// Iterate of the outer loop.
#[derive(Debug, Clone)]
pub struct OuterState {
    pub x: Array2<f64>,
    pub w: Array2<f64>,
    pub u: BandWeights,
    pub sigma2: f64,
    /// Objective at `(x, w)` with the current `sigma2`.
    pub objective: f64,
}

/// Per-band scale `sqrt(u_d / sigma2)`, the diagonal of `U^{1/2}`.
pub fn half_weights(u: ArrayView1<f64>, sigma2: f64) -> Array1<f64> {
    u.mapv(|ud| (ud / sigma2).sqrt())
}

pub(crate) fn scale_rows(a: &ArrayView2<f64>, s: &Array1<f64>) -> Array2<f64> {
    a * &s.view().insert_axis(Axis(1))
}

pub(crate) fn unscale_rows(a: &ArrayView2<f64>, s: &Array1<f64>) -> Array2<f64> {
    a / &s.view().insert_axis(Axis(1))
}

/// One outer pass for fixed weights and kernel width: scale by `U^{1/2}`,
/// run the inner solver, and map the endmembers back. Returns `(X, W, inner iterations)`.
pub fn outer_pass(
    y: ArrayView2<f64>,
    x: ArrayView2<f64>,
    w: Array2<f64>,
    u: &BandWeights,
    sigma2: f64,
    lambda: f64,
    params: &InnerParams,
) -> Result<(Array2<f64>, Array2<f64>, usize)> {
    check_factor_shapes(&y, &x, &w.view())?;
    if u.len() != y.nrows() {
        return Err(UnmixError::ShapeMismatch(format!(
            "{} band weights for {} bands",
            u.len(),
            y.nrows()
        )));
    }
    let s = half_weights(u.as_array().view(), sigma2);
    let yhat = scale_rows(&y, &s);
    let xhat = scale_rows(&x, &s);
    let inner = inner_solve(yhat.view(), xhat, w, lambda, params)?;
    let x = unscale_rows(&inner.xhat.view(), &s);
    Ok((x, inner.w, inner.iterations))
}

/// Robust unmixing of `y` into `k` endmembers.
pub fn solve(y: &SpectraMatrix, k: usize, cfg: &SolverConfig) -> Result<SolveReport> {
    validate(y.as_array(), k)?;
    cfg.validate()?;
    let x0 = init::init_endmembers(y, k, cfg.seed)?;
    let w0 = init::init_abundances(y, &x0)?;
    solve_from(y, x0.into_inner(), w0.into_inner(), cfg)
}

/// Like [`solve`] but starting from the given factors.
pub fn solve_from(
    y: &SpectraMatrix,
    x0: Array2<f64>,
    w0: Array2<f64>,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    let yv = y.view();
    check_factor_shapes(&yv, &x0.view(), &w0.view())?;
    validate(y.as_array(), x0.ncols())?;
    cfg.validate()?;
    let lambda = resolve_lambda(cfg.lambda, yv)?;
    let floor = cfg.sigma2_floor_for(y);
    let params = InnerParams::from(cfg);
    let dims = yv.dim();
    let width =
        |r2: &[f64]| sigma2_from_total(r2.iter().sum(), dims, cfg.alpha, cfg.kernel_scale, floor);
    let g = |r2: &[f64], w: &Array2<f64>, sigma2: f64| {
        correntropy_from_residuals(r2, sigma2) + l1_penalty(w.view(), lambda)
    };

    let mut r2 = linalg::band_residuals(&yv, &x0.view(), &w0.view());
    let sigma2 = width(&r2);
    let mut state = OuterState {
        objective: g(&r2, &w0, sigma2),
        x: x0,
        w: w0,
        u: BandWeights::ones(dims.0),
        sigma2,
    };
    let tol = cfg.outer_tol * (1.0 + state.objective.abs());
    let mut objective_trace = vec![state.objective];
    let mut sigma2_trace = vec![state.sigma2];
    let mut pass_checks = Vec::new();
    let mut inner_iterations = 0;
    let mut termination = Termination::MaxIterations;

    for _ in 0..cfg.max_outer {
        let (x, w, its) = outer_pass(
            yv,
            state.x.view(),
            state.w.clone(),
            &state.u,
            state.sigma2,
            lambda,
            &params,
        )?;
        inner_iterations += its;
        let r2_new = linalg::band_residuals(&yv, &x.view(), &w.view());
        pass_checks.push(PassCheck {
            before: state.objective,
            after: g(&r2_new, &w, state.sigma2),
        });

        // New width first, then weights consistent with it.
        let sigma2 = width(&r2_new);
        let previous = g(&r2, &state.w, sigma2);
        let current = g(&r2_new, &w, sigma2);
        state = OuterState {
            u: weights_from_residuals(&r2_new, sigma2),
            x,
            w,
            sigma2,
            objective: current,
        };
        r2 = r2_new;
        objective_trace.push(current);
        sigma2_trace.push(sigma2);
        if (current - previous).abs() < tol {
            termination = Termination::ToleranceReached;
            break;
        }
    }

    Ok(SolveReport {
        endmembers: Endmembers::new(state.x)?,
        abundances: Abundances::new(state.w)?,
        band_weights: state.u,
        objective_trace,
        sigma2_trace,
        pass_checks,
        lambda,
        inner_iterations,
        termination,
    })
}
