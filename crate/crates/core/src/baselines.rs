//! Comparison solvers: plain NMF, l1-regularised NMF and l1/2-regularised NMF.
//!
//! All three use the same initialisation as the robust solver and the same
//! pass structure: each outer pass runs up to `max_inner` multiplicative
//! steps, and the outer loop stops when a pass changes the objective by less
//! than `outer_tol * (1 + |F(0)|)`.

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::Result;
use crate::init;
use crate::linalg;
use crate::model::{
    validate, Abundances, BandWeights, Endmembers, PassCheck, SolveReport, SolverConfig,
    SpectraMatrix, Termination,
};
use crate::solver::{inner_solve, resolve_lambda, InnerParams};

/// Floor applied to `W` before the `-1/2` power in the l1/2 update.
pub const HALF_POWER_FLOOR: f64 = 1e-12;

/// Frobenius NMF by multiplicative updates.
pub fn nmf_solve(y: &SpectraMatrix, k: usize, cfg: &SolverConfig) -> Result<SolveReport> {
    l1_nmf_solve(y, k, 0.0, cfg)
}

/// `min ||Y - XW||_F^2 + 2 lambda sum W` by multiplicative updates.
pub fn l1_nmf_solve(
    y: &SpectraMatrix,
    k: usize,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    let (x0, w0) = start(y, k, cfg)?;
    l1_nmf_from(y, x0, w0, lambda, cfg)
}

pub fn l1_nmf_from(
    y: &SpectraMatrix,
    x0: Array2<f64>,
    w0: Array2<f64>,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    let params = InnerParams::from(cfg);
    let objective = |x: &Array2<f64>, w: &Array2<f64>| {
        linalg::sq_norm(&linalg::residual(&y.view(), &x.view(), &w.view()).view())
            + 2.0 * lambda * w.sum()
    };
    run_passes(y, x0, w0, lambda, cfg, objective, |x, w| {
        let r = inner_solve(y.view(), x, w, lambda, &params)?;
        Ok((r.xhat, r.w, r.iterations))
    })
}

/// `min ||Y - XW||_F^2 + lambda sum W^{1/2}`.
pub fn l12_nmf_solve(
    y: &SpectraMatrix,
    k: usize,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    let (x0, w0) = start(y, k, cfg)?;
    l12_nmf_from(y, x0, w0, lambda, cfg)
}

pub fn l12_nmf_from(
    y: &SpectraMatrix,
    x0: Array2<f64>,
    w0: Array2<f64>,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    let objective =
        |x: &Array2<f64>, w: &Array2<f64>| l12_objective(y.view(), x.view(), w.view(), lambda);
    run_passes(y, x0, w0, lambda, cfg, objective, |mut x, mut w| {
        let mut prev = objective(&x, &w);
        let mut its = 0;
        loop {
            l12_step(y.view(), &mut x, &mut w, lambda, cfg.denom_eps);
            its += 1;
            let cur = objective(&x, &w);
            let change = (prev - cur).abs() / prev.abs().max(f64::MIN_POSITIVE);
            prev = cur;
            if change < cfg.inner_tol || its >= cfg.max_inner {
                break;
            }
        }
        Ok((x, w, its))
    })
}

/// `||Y - XW||_F^2 + lambda sum W^{1/2}`.
pub fn l12_objective(
    y: ArrayView2<f64>,
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    lambda: f64,
) -> f64 {
    linalg::sq_norm(&linalg::residual(&y, &x, &w).view())
        + lambda * w.iter().map(|v| v.sqrt()).sum::<f64>()
}

/// One l1/2 step: the Frobenius X update, then
/// `W <- W * (X^T Y) / (X^T X W + lambda/2 W^{-1/2} + eps)`.
pub fn l12_step(
    y: ArrayView2<f64>,
    x: &mut Array2<f64>,
    w: &mut Array2<f64>,
    lambda: f64,
    eps: f64,
) {
    let ywt = linalg::matmul_nt(&y, &w.view());
    let gram_w = linalg::matmul_nt(&w.view(), &w.view());
    let xwwt = linalg::matmul(&x.view(), &gram_w.view());
    Zip::from(&mut *x)
        .and(&ywt)
        .and(&xwwt)
        .for_each(|x, &n, &d| *x *= n / (d + eps));

    let xty = linalg::matmul_tn(&x.view(), &y);
    let xtx = linalg::matmul_tn(&x.view(), &x.view());
    let xtxw = linalg::matmul(&xtx.view(), &w.view());
    Zip::from(w).and(&xty).and(&xtxw).for_each(|w, &n, &d| {
        let floored = w.max(HALF_POWER_FLOOR);
        *w = floored * n / (d + 0.5 * lambda / floored.sqrt() + eps);
    });
}

fn start(y: &SpectraMatrix, k: usize, cfg: &SolverConfig) -> Result<(Array2<f64>, Array2<f64>)> {
    validate(y.as_array(), k)?;
    cfg.validate()?;
    let x0 = init::init_endmembers(y, k, cfg.seed)?;
    let w0 = init::init_abundances(y, &x0)?;
    Ok((x0.into_inner(), w0.into_inner()))
}

fn run_passes(
    y: &SpectraMatrix,
    mut x: Array2<f64>,
    mut w: Array2<f64>,
    lambda: f64,
    cfg: &SolverConfig,
    objective: impl Fn(&Array2<f64>, &Array2<f64>) -> f64,
    mut pass: impl FnMut(Array2<f64>, Array2<f64>) -> Result<(Array2<f64>, Array2<f64>, usize)>,
) -> Result<SolveReport> {
    validate(y.as_array(), x.ncols())?;
    cfg.validate()?;
    let mut current = objective(&x, &w);
    let tol = cfg.outer_tol * (1.0 + current.abs());
    let mut trace = vec![current];
    let mut checks = Vec::new();
    let mut inner_iterations = 0;
    let mut termination = Termination::MaxIterations;
    for _ in 0..cfg.max_outer {
        let (nx, nw, its) = pass(x, w)?;
        x = nx;
        w = nw;
        inner_iterations += its;
        let next = objective(&x, &w);
        checks.push(PassCheck {
            before: current,
            after: next,
        });
        trace.push(next);
        let change = (current - next).abs();
        current = next;
        if change < tol {
            termination = Termination::ToleranceReached;
            break;
        }
    }
    Ok(SolveReport {
        endmembers: Endmembers::new(x)?,
        abundances: Abundances::new(w)?,
        band_weights: BandWeights::ones(y.bands()),
        objective_trace: trace,
        sigma2_trace: Vec::new(),
        pass_checks: checks,
        lambda,
        inner_iterations,
        termination,
    })
}

/// Which solver to run; used by the CLI and the experiment drivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Nmf,
    L1Nmf,
    L12Nmf,
    Cenmf,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Nmf, Method::L1Nmf, Method::L12Nmf, Method::Cenmf];

    pub fn name(self) -> &'static str {
        match self {
            Method::Nmf => "nmf",
            Method::L1Nmf => "l1nmf",
            Method::L12Nmf => "l12nmf",
            Method::Cenmf => "cenmf",
        }
    }

    pub fn solve(self, y: &SpectraMatrix, k: usize, cfg: &SolverConfig) -> Result<SolveReport> {
        let (x0, w0) = start(y, k, cfg)?;
        self.solve_from(y, x0, w0, cfg)
    }

    /// Runs from given starting factors; sparse methods resolve `cfg.lambda` here.
    pub fn solve_from(
        self,
        y: &SpectraMatrix,
        x0: Array2<f64>,
        w0: Array2<f64>,
        cfg: &SolverConfig,
    ) -> Result<SolveReport> {
        match self {
            Method::Nmf => l1_nmf_from(y, x0, w0, 0.0, cfg),
            Method::L1Nmf => l1_nmf_from(y, x0, w0, resolve_lambda(cfg.lambda, y.view())?, cfg),
            Method::L12Nmf => l12_nmf_from(y, x0, w0, resolve_lambda(cfg.lambda, y.view())?, cfg),
            Method::Cenmf => crate::solver::solve_from(y, x0, w0, cfg),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = crate::error::UnmixError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| crate::error::UnmixError::InvalidConfig(format!("unknown method {s:?}")))
    }
}
