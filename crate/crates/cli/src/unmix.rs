use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use ndarray::Array2;
use unmix_core::io::{self, MatrixFormat};
use unmix_core::{Method, SpectraMatrix};

use crate::config::{parse_format, write_matrix, SolverArgs};

#[derive(Debug, Args)]
pub struct UnmixArgs {
    /// D x N data matrix (`.csv` or `.f64` with a `.desc` sidecar).
    #[arg(long)]
    pub input: PathBuf,
    /// One of nmf, l1nmf, l12nmf, cenmf.
    #[arg(long)]
    pub method: Method,
    /// Number of endmembers.
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Rescale each pixel's written abundances to sum to one.
    #[arg(long)]
    pub sum_to_one: bool,
    /// `csv` or `f64` for the estimate files.
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    pub format: MatrixFormat,
    #[command(flatten)]
    pub solver: SolverArgs,
}

pub fn run(args: &UnmixArgs) -> Result<()> {
    let cfg = args.solver.resolve()?;
    let y = SpectraMatrix::new(io::load_matrix_auto(&args.input)?)?;
    let start = Instant::now();
    let report = args.method.solve(&y, args.k, &cfg)?;
    let wall = start.elapsed().as_secs_f64();

    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let dir = &args.out_dir;
    let mut w = report.abundances.as_array().clone();
    if args.sum_to_one {
        for mut col in w.columns_mut() {
            let s = col.sum();
            if s > 0.0 {
                col /= s;
            }
        }
    }
    write_matrix(dir, "X_est", report.endmembers.as_array(), args.format)?;
    write_matrix(dir, "W_est", &w, args.format)?;
    if args.method == Method::Cenmf {
        let u = report.band_weights.as_array();
        write_matrix(
            dir,
            "band_weights",
            &Array2::from_shape_fn((u.len(), 1), |(d, _)| u[d]),
            args.format,
        )?;
    }

    let mut trace = String::from("iteration,objective,sigma2\n");
    for (i, g) in report.objective_trace.iter().enumerate() {
        let s2 = report
            .sigma2_trace
            .get(i)
            .map_or(String::new(), |v| format!("{v:.16e}"));
        let _ = writeln!(trace, "{i},{g:.16e},{s2}");
    }
    write_text(dir.join("objective_trace.csv"), trace)?;

    let mut summary = String::new();
    let _ = writeln!(summary, "method={}", args.method);
    let _ = writeln!(summary, "k={}", args.k);
    let _ = writeln!(summary, "lambda={:.16e}", report.lambda);
    let _ = writeln!(summary, "termination={}", report.termination);
    let _ = writeln!(summary, "outer_iterations={}", report.outer_iterations());
    let _ = writeln!(summary, "inner_iterations={}", report.inner_iterations);
    let _ = writeln!(summary, "effective_rank={}", report.effective_rank());
    if let Some(g) = report.objective_trace.last() {
        let _ = writeln!(summary, "final_objective={g:.16e}");
    }
    let _ = writeln!(summary, "wall_time_s={wall:.6}");
    write_text(dir.join("summary.txt"), summary)?;
    Ok(())
}

pub fn write_text(path: PathBuf, text: String) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| unmix_core::UnmixError::io(path, e))?;
    Ok(())
}
