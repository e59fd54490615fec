//! Solver settings from flags, an optional key=value file, and defaults,
//! in that order of precedence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use unmix_core::io::{self, MatrixFormat};
use unmix_core::{KernelScale, Lambda, SolverConfig};

/// A bad combination of flags; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Clone, Args, Default)]
pub struct SolverArgs {
    /// Sparsity weight, or `auto` to estimate it from the data.
    #[arg(long)]
    pub lambda: Option<Lambda>,
    /// Kernel scale factor.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Kernel width scale: `band` or `entry`.
    #[arg(long, value_parser = parse_kernel_scale)]
    pub kernel_scale: Option<KernelScale>,
    #[arg(long)]
    pub outer_tol: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long)]
    pub inner_tol: Option<f64>,
    #[arg(long)]
    pub max_inner: Option<usize>,
    #[arg(long)]
    pub denom_eps: Option<f64>,
    /// Lower bound on sigma^2 relative to mean(Y^2).
    #[arg(long)]
    pub sigma2_floor: Option<f64>,
    /// Seed for initialisation.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Flat key=value file with any of the settings above (use the flag names
    /// with underscores, e.g. `max_outer=50`).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse_kernel_scale(s: &str) -> std::result::Result<KernelScale, String> {
    match s {
        "band" => Ok(KernelScale::PerBand),
        "entry" => Ok(KernelScale::PerEntry),
        _ => Err(format!("expected `band` or `entry`, got {s:?}")),
    }
}

fn from_file<T: std::str::FromStr>(
    map: &BTreeMap<String, String>,
    key: &str,
    path: &Path,
) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    map.get(key)
        .map(|v| {
            v.parse::<T>().map_err(|e| {
                anyhow::Error::new(UsageError(format!(
                    "{}: bad value for {key}: {e}",
                    path.display()
                )))
            })
        })
        .transpose()
}

impl SolverArgs {
    pub fn resolve(&self) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let map = io::parse_key_values(&text, path)?;
            const KNOWN: [&str; 10] = [
                "lambda",
                "alpha",
                "kernel_scale",
                "outer_tol",
                "max_outer",
                "inner_tol",
                "max_inner",
                "denom_eps",
                "sigma2_floor",
                "seed",
            ];
            if let Some(bad) = map.keys().find(|k| !KNOWN.contains(&k.as_str())) {
                return Err(UsageError(format!("{}: unknown key {bad:?}", path.display())).into());
            }
            if let Some(v) = from_file(&map, "lambda", path)? {
                cfg.lambda = v;
            }
            if let Some(v) = from_file(&map, "alpha", path)? {
                cfg.alpha = v;
            }
            if let Some(v) = map.get("kernel_scale") {
                cfg.kernel_scale = parse_kernel_scale(v).map_err(UsageError)?;
            }
            if let Some(v) = from_file(&map, "outer_tol", path)? {
                cfg.outer_tol = v;
            }
            if let Some(v) = from_file(&map, "max_outer", path)? {
                cfg.max_outer = v;
            }
            if let Some(v) = from_file(&map, "inner_tol", path)? {
                cfg.inner_tol = v;
            }
            if let Some(v) = from_file(&map, "max_inner", path)? {
                cfg.max_inner = v;
            }
            if let Some(v) = from_file(&map, "denom_eps", path)? {
                cfg.denom_eps = v;
            }
            if let Some(v) = from_file(&map, "sigma2_floor", path)? {
                cfg.sigma2_floor = v;
            }
            if let Some(v) = from_file(&map, "seed", path)? {
                cfg.seed = v;
            }
        }
        cfg.lambda = self.lambda.unwrap_or(cfg.lambda);
        cfg.alpha = self.alpha.unwrap_or(cfg.alpha);
        cfg.kernel_scale = self.kernel_scale.unwrap_or(cfg.kernel_scale);
        cfg.outer_tol = self.outer_tol.unwrap_or(cfg.outer_tol);
        cfg.max_outer = self.max_outer.unwrap_or(cfg.max_outer);
        cfg.inner_tol = self.inner_tol.unwrap_or(cfg.inner_tol);
        cfg.max_inner = self.max_inner.unwrap_or(cfg.max_inner);
        cfg.denom_eps = self.denom_eps.unwrap_or(cfg.denom_eps);
        cfg.sigma2_floor = self.sigma2_floor.unwrap_or(cfg.sigma2_floor);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }
}

/// Writes a matrix as `<dir>/<stem>.<ext>`.
pub fn write_matrix(
    dir: &Path,
    stem: &str,
    m: &ndarray::Array2<f64>,
    format: MatrixFormat,
) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    io::save_matrix(m, &path, format)?;
    Ok(path)
}

/// Finds `<dir>/<stem>.csv` or `<dir>/<stem>.f64`.
pub fn find_matrix(dir: &Path, stem: &str) -> Result<ndarray::Array2<f64>> {
    for format in [MatrixFormat::Csv, MatrixFormat::RawF64] {
        let path = dir.join(format!("{stem}.{}", format.extension()));
        if path.exists() {
            return Ok(io::load_matrix(&path, format)?);
        }
    }
    Err(unmix_core::UnmixError::io(
        dir.join(stem),
        std::io::Error::new(std::io::ErrorKind::NotFound, "no .csv or .f64 file"),
    )
    .into())
}

pub fn parse_format(s: &str) -> std::result::Result<MatrixFormat, String> {
    s.parse().map_err(|e: unmix_core::UnmixError| e.to_string())
}
