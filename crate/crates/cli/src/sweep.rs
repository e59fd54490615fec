use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;
use unmix_core::experiment::{
    aggregate, run_cell, sweep_cells, CellResult, SweepAggregate, SweepCell, SweepSettings,
};
use unmix_core::metrics::EvalOptions;
use unmix_core::Method;

use crate::config::{SolverArgs, UsageError};
use crate::svg::{LinePlot, Series};
use crate::unmix::write_text;

pub const RESULTS_HEADER: &str = "snr,method,repeat,endmember,sad,rmse";

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated mean SNR levels in dB.
    #[arg(long, default_value = "50,40,30,20,10", value_delimiter = ',')]
    pub snr_list: Vec<f64>,
    /// Comma-separated methods.
    #[arg(long, default_value = "nmf,l1nmf,l12nmf,cenmf", value_delimiter = ',')]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    /// Repeat r uses scene and initialisation seed `seed_base + r`.
    #[arg(long, default_value_t = 0)]
    pub seed_base: u64,
    #[arg(long, default_value_t = 8)]
    pub z: usize,
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    #[arg(long, default_value_t = 200)]
    pub bands: usize,
    #[arg(long, default_value_t = 5.0)]
    pub snr_std: f64,
    /// Score RMSE on the raw abundances instead of per-pixel sum-to-one rescaled ones.
    #[arg(long)]
    pub raw_rmse: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
}

fn cell_stem(cell: &SweepCell) -> String {
    format!("snr{}_{}_r{}", cell.snr_db, cell.method, cell.repeat)
}

fn cell_rows(r: &CellResult) -> String {
    let mut out = String::new();
    for s in &r.evaluation.per_endmember {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.16e},{:.16e}",
            r.cell.snr_db, r.cell.method, r.cell.repeat, s.true_index, s.sad, s.rmse
        );
    }
    out
}

fn write_cell(cells_dir: &Path, r: &CellResult) -> Result<()> {
    let stem = cell_stem(&r.cell);
    write_text(
        cells_dir.join(format!("{stem}.csv")),
        format!("{RESULTS_HEADER}\n{}", cell_rows(r)),
    )?;
    if r.cell.method == Method::Cenmf {
        let mut u = String::from("band,weight\n");
        for (d, v) in r.report.band_weights.as_array().iter().enumerate() {
            let _ = writeln!(u, "{d},{v:.16e}");
        }
        write_text(cells_dir.join(format!("{stem}_band_weights.csv")), u)?;
    }
    Ok(())
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("ROBUST_UNMIX_THREADS") {
        let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            UsageError(format!(
                "ROBUST_UNMIX_THREADS must be a positive integer, got {v:?}"
            ))
        })?;
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

pub fn run(args: &SweepArgs) -> Result<()> {
    if args.snr_list.is_empty() || args.methods.is_empty() || args.repeats == 0 {
        return Err(UsageError("sweep needs at least one SNR, method and repeat".into()).into());
    }
    let settings = SweepSettings {
        z: args.z,
        k: args.k,
        bands: args.bands,
        snr_std_db: args.snr_std,
        seed_base: args.seed_base,
        solver: args.solver.resolve()?,
        eval: EvalOptions {
            renormalize: !args.raw_rmse,
            ..Default::default()
        },
    };
    let cells_dir = args.out_dir.join("cells");
    std::fs::create_dir_all(&cells_dir)
        .with_context(|| format!("creating {}", cells_dir.display()))?;

    let cells = sweep_cells(&args.snr_list, &args.methods, args.repeats);
    let outcomes: Vec<Result<CellResult>> = thread_pool()?.install(|| {
        cells
            .par_iter()
            .map(|&cell| {
                let r = run_cell(&settings, cell).with_context(|| {
                    format!(
                        "cell snr={} method={} repeat={}",
                        cell.snr_db, cell.method, cell.repeat
                    )
                })?;
                write_cell(&cells_dir, &r)?;
                Ok(r)
            })
            .collect()
    });

    // Merge in cell order whatever finished, then report the first failure.
    let mut results = Vec::with_capacity(outcomes.len());
    let mut first_err = None;
    for o in outcomes {
        match o {
            Ok(r) => results.push(r),
            Err(e) => {
                eprintln!("error: {e:#}");
                first_err.get_or_insert(e);
            }
        }
    }
    let mut merged = format!("{RESULTS_HEADER}\n");
    for r in &results {
        merged.push_str(&cell_rows(r));
    }
    write_text(args.out_dir.join("results.csv"), merged)?;

    let aggs = aggregate(&results);
    write_text(args.out_dir.join("summary.csv"), summary_csv(&aggs))?;
    write_plots(
        &args.out_dir,
        &aggs,
        &results,
        &args.methods,
        &args.snr_list,
    )?;

    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn summary_csv(aggs: &[SweepAggregate]) -> String {
    let mut out = String::from("snr,method,endmember,repeats,mean_sad,mean_rmse\n");
    for a in aggs {
        for (k, (s, r)) in a.mean_sad.iter().zip(&a.mean_rmse).enumerate() {
            let _ = writeln!(
                out,
                "{},{},{k},{},{s:.16e},{r:.16e}",
                a.snr_db, a.method, a.repeats
            );
        }
        let _ = writeln!(
            out,
            "{},{},all,{},{:.16e},{:.16e}",
            a.snr_db,
            a.method,
            a.repeats,
            a.overall_sad(),
            a.overall_rmse()
        );
    }
    out
}

fn save_plot(path: PathBuf, plot: LinePlot) -> Result<()> {
    write_text(path, plot.render())
}

fn write_plots(
    dir: &Path,
    aggs: &[SweepAggregate],
    results: &[CellResult],
    methods: &[Method],
    snrs: &[f64],
) -> Result<()> {
    let Some(k) = aggs.first().map(|a| a.mean_sad.len()) else {
        return Ok(());
    };
    let curve = |method: Method, value: &dyn Fn(&SweepAggregate) -> f64| -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = aggs
            .iter()
            .filter(|a| a.method == method)
            .map(|a| (a.snr_db, value(a)))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts
    };
    type Getter = fn(&SweepAggregate, usize) -> f64;
    let metrics: [(&str, &str, Getter); 2] = [
        ("sad", "SAD", |a, e| a.mean_sad[e]),
        ("rmse", "RMSE", |a, e| a.mean_rmse[e]),
    ];
    for (key, label, get) in metrics {
        // One panel per endmember, one line per method.
        for e in 0..k {
            let series = methods
                .iter()
                .map(|&m| Series {
                    label: m.to_string(),
                    points: curve(m, &|a| get(a, e)),
                })
                .collect();
            save_plot(
                dir.join(format!("{key}_endmember{e}.svg")),
                LinePlot {
                    title: format!("Endmember {e}: mean {label} vs SNR"),
                    x_label: "SNR (dB)".into(),
                    y_label: label.into(),
                    series,
                },
            )?;
        }
        // One panel per method, one line per endmember.
        for &m in methods {
            let series = (0..k)
                .map(|e| Series {
                    label: format!("endmember {e}"),
                    points: curve(m, &|a| get(a, e)),
                })
                .collect();
            save_plot(
                dir.join(format!("{key}_{m}.svg")),
                LinePlot {
                    title: format!("{m}: mean {label} vs SNR"),
                    x_label: "SNR (dB)".into(),
                    y_label: label.into(),
                    series,
                },
            )?;
        }
    }

    // Mean learned band weights per SNR level.
    let mut series = Vec::new();
    for &snr in snrs {
        let runs: Vec<_> = results
            .iter()
            .filter(|r| r.cell.method == Method::Cenmf && r.cell.snr_db == snr)
            .map(|r| r.report.band_weights.as_array())
            .collect();
        let Some(first) = runs.first() else { continue };
        let points = (0..first.len())
            .map(|d| {
                (
                    d as f64,
                    runs.iter().map(|u| u[d]).sum::<f64>() / runs.len() as f64,
                )
            })
            .collect();
        series.push(Series {
            label: format!("{snr} dB"),
            points,
        });
    }
    if !series.is_empty() {
        save_plot(
            dir.join("band_weights.svg"),
            LinePlot {
                title: "cenmf: mean band weight vs band index".into(),
                x_label: "band".into(),
                y_label: "u_d".into(),
                series,
            },
        )?;
    }
    Ok(())
}
