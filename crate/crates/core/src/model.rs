//! Domain types shared by every solver.
//!
//! Matrices are stored bands-by-pixels: a hyperspectral cube with `D` bands
//! and `N` pixels is a `D x N` matrix whose row `d` is the image of band `d`
//! and whose column `n` is the spectrum of pixel `n`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Result, UnmixError};

fn check_entries(data: &ArrayView2<f64>) -> Result<()> {
    for ((row, col), &v) in data.indexed_iter() {
        if !v.is_finite() {
            return Err(UnmixError::NonFinite { row, col });
        }
        if v < 0.0 {
            return Err(UnmixError::NegativeEntry { row, col });
        }
    }
    Ok(())
}

fn check_nonempty(data: &ArrayView2<f64>) -> Result<()> {
    let (rows, cols) = data.dim();
    if rows == 0 || cols == 0 {
        return Err(UnmixError::Empty { rows, cols });
    }
    Ok(())
}

macro_rules! nonneg_matrix {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(Array2<f64>);

        impl $name {
            /// Wraps `data` after checking it is nonempty, finite and nonnegative.
            pub fn new(data: Array2<f64>) -> Result<Self> {
                check_nonempty(&data.view())?;
                check_entries(&data.view())?;
                Ok(Self(data))
            }

            pub fn view(&self) -> ArrayView2<'_, f64> {
                self.0.view()
            }

            pub fn as_array(&self) -> &Array2<f64> {
                &self.0
            }

            pub fn into_inner(self) -> Array2<f64> {
                self.0
            }

            pub fn nrows(&self) -> usize {
                self.0.nrows()
            }

            pub fn ncols(&self) -> usize {
                self.0.ncols()
            }
        }

        impl AsRef<Array2<f64>> for $name {
            fn as_ref(&self) -> &Array2<f64> {
                &self.0
            }
        }
    };
}

nonneg_matrix!(
    /// Observed data `Y`, bands x pixels.
    SpectraMatrix
);
nonneg_matrix!(
    /// Endmember signatures `X`, bands x endmembers. Column `k` is one spectrum.
    Endmembers
);
nonneg_matrix!(
    /// Abundances `W`, endmembers x pixels. Row `k` is the abundance map of
    /// endmember `k`. Columns are not required to sum to one.
    Abundances
);

impl SpectraMatrix {
    pub fn bands(&self) -> usize {
        self.0.nrows()
    }

    pub fn pixels(&self) -> usize {
        self.0.ncols()
    }

    pub fn band(&self, d: usize) -> ArrayView1<'_, f64> {
        self.0.row(d)
    }

    pub fn pixel(&self, n: usize) -> ArrayView1<'_, f64> {
        self.0.column(n)
    }

    /// Keeps only the listed bands, in the given order.
    pub fn select_bands(&self, bands: &[usize]) -> Result<Self> {
        let sub = select_rows(&self.0, bands)?;
        Self::new(sub)
    }
}

impl Endmembers {
    pub fn count(&self) -> usize {
        self.0.ncols()
    }

    pub fn select_bands(&self, bands: &[usize]) -> Result<Self> {
        let sub = select_rows(&self.0, bands)?;
        Self::new(sub)
    }
}

pub(crate) fn select_rows(a: &Array2<f64>, rows: &[usize]) -> Result<Array2<f64>> {
    if let Some(&bad) = rows.iter().find(|&&r| r >= a.nrows()) {
        return Err(UnmixError::ShapeMismatch(format!(
            "band index {bad} out of range for {} bands",
            a.nrows()
        )));
    }
    Ok(a.select(ndarray::Axis(0), rows))
}

/// Per-band weights `u`, one entry in `(0, 1]` per band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandWeights(Array1<f64>);

impl BandWeights {
    pub fn new(u: Array1<f64>) -> Result<Self> {
        for (band, &value) in u.iter().enumerate() {
            if !(value > 0.0 && value <= 1.0) {
                return Err(UnmixError::WeightOutOfRange { band, value });
            }
        }
        Ok(Self(u))
    }

    pub fn ones(bands: usize) -> Self {
        Self(Array1::ones(bands))
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Sparsity weight: a fixed value, or estimated from the data before solving.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    Auto,
    Fixed(f64),
}

impl std::str::FromStr for Lambda {
    type Err = UnmixError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Lambda::Auto);
        }
        let v: f64 = s.parse().map_err(|_| {
            UnmixError::InvalidConfig(format!("lambda must be a number or 'auto', got {s:?}"))
        })?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(UnmixError::InvalidConfig(format!(
                "lambda must be >= 0, got {v}"
            )));
        }
        Ok(Lambda::Fixed(v))
    }
}

/// How the kernel width tracks the residual.
///
/// `PerEntry` is `sigma^2 = alpha / (2 D N) * ||Y - XW||_F^2`, the mean squared
/// residual entry. `PerBand` multiplies that by `N`, putting `sigma^2` on the
/// same scale as the squared band residual norms the kernel is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelScale {
    PerEntry,
    PerBand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub lambda: Lambda,
    /// Kernel scale factor in the sigma update.
    pub alpha: f64,
    pub kernel_scale: KernelScale,
    /// Outer loop stops once `|G(t+1) - G(t)| < outer_tol * (1 + |G(0)|)`.
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Inner loop stops on relative objective change below this.
    pub inner_tol: f64,
    pub max_inner: usize,
    pub denom_eps: f64,
    /// Lower bound on sigma^2, relative to `mean(Y o Y)`.
    pub sigma2_floor: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: Lambda::Auto,
            alpha: 1.0,
            kernel_scale: KernelScale::PerBand,
            outer_tol: 1e-6,
            max_outer: 100,
            inner_tol: 1e-6,
            max_inner: 50,
            denom_eps: 1e-12,
            sigma2_floor: 1e-10,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("outer_tol", self.outer_tol),
            ("inner_tol", self.inner_tol),
            ("denom_eps", self.denom_eps),
            ("sigma2_floor", self.sigma2_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(UnmixError::InvalidConfig(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(UnmixError::InvalidConfig(
                "iteration budgets must be at least 1".into(),
            ));
        }
        if let Lambda::Fixed(v) = self.lambda {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(UnmixError::InvalidConfig(format!(
                    "lambda must be >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Absolute sigma^2 floor for a given data matrix.
    pub fn sigma2_floor_for(&self, y: &SpectraMatrix) -> f64 {
        let mean_sq = y.as_array().iter().map(|v| v * v).sum::<f64>() / y.as_array().len() as f64;
        if mean_sq > 0.0 {
            self.sigma2_floor * mean_sq
        } else {
            self.sigma2_floor
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ToleranceReached,
    MaxIterations,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Termination::ToleranceReached => f.write_str("tolerance_reached"),
            Termination::MaxIterations => f.write_str("max_iterations"),
        }
    }
}

/// Objective before and after one outer pass, both evaluated with the kernel
/// width held during that pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassCheck {
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub endmembers: Endmembers,
    pub abundances: Abundances,
    pub band_weights: BandWeights,
    /// Objective at the start and after every outer pass. For the correntropy
    /// solver entry `t` uses the kernel width in force at that point, which
    /// changes between passes; see `pass_checks` for fixed-width comparisons.
    pub objective_trace: Vec<f64>,
    pub sigma2_trace: Vec<f64>,
    pub pass_checks: Vec<PassCheck>,
    pub lambda: f64,
    pub inner_iterations: usize,
    pub termination: Termination,
}

impl SolveReport {
    pub fn outer_iterations(&self) -> usize {
        self.objective_trace.len().saturating_sub(1)
    }

    /// Number of endmembers whose column or abundance row is not identically zero.
    pub fn effective_rank(&self) -> usize {
        let x = self.endmembers.as_array();
        let w = self.abundances.as_array();
        (0..x.ncols())
            .filter(|&k| x.column(k).iter().any(|&v| v > 0.0) && w.row(k).iter().any(|&v| v > 0.0))
            .count()
    }
}

/// Checks that `y` can be factored with `k` endmembers.
pub fn validate(y: &Array2<f64>, k: usize) -> Result<()> {
    check_nonempty(&y.view())?;
    check_entries(&y.view())?;
    let max = y.nrows().min(y.ncols());
    if k == 0 || k > max {
        return Err(UnmixError::BadRank { k, max });
    }
    Ok(())
}

pub(crate) fn check_factor_shapes(
    y: &ArrayView2<f64>,
    x: &ArrayView2<f64>,
    w: &ArrayView2<f64>,
) -> Result<()> {
    let (d, n) = y.dim();
    let (dx, kx) = x.dim();
    let (kw, nw) = w.dim();
    if dx != d || nw != n || kx != kw {
        return Err(UnmixError::ShapeMismatch(format!(
            "Y is {d}x{n}, X is {dx}x{kx}, W is {kw}x{nw}"
        )));
    }
    Ok(())
}
