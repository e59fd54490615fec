use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use unmix_core::experiment::bandmask_compare;
use unmix_core::io;
use unmix_core::metrics::EvalOptions;
use unmix_core::{Method, SpectraMatrix, UnmixError};

use crate::config::{find_matrix, SolverArgs, UsageError};
use crate::unmix::write_text;

#[derive(Debug, Args)]
pub struct BandmaskArgs {
    /// Directory written by `generate` (Y_noisy, X_true, W_true).
    #[arg(long, conflicts_with_all = ["input", "x_true", "w_true"])]
    pub scene_dir: Option<PathBuf>,
    /// D x N data matrix.
    #[arg(long, requires_all = ["x_true", "w_true"])]
    pub input: Option<PathBuf>,
    /// D x K reference endmembers.
    #[arg(long)]
    pub x_true: Option<PathBuf>,
    /// K x N reference abundances.
    #[arg(long)]
    pub w_true: Option<PathBuf>,
    /// File listing the band indices to remove.
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long, default_value = "nmf,l1nmf,l12nmf,cenmf", value_delimiter = ',')]
    pub methods: Vec<Method>,
    #[arg(long)]
    pub k: usize,
    /// Score RMSE on the raw abundances instead of per-pixel sum-to-one rescaled ones.
    #[arg(long)]
    pub raw_rmse: bool,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
}

pub fn run(args: &BandmaskArgs) -> Result<()> {
    let cfg = args.solver.resolve()?;
    let (y, x_true, w_true) = match (&args.scene_dir, &args.input, &args.x_true, &args.w_true) {
        (Some(dir), ..) => (
            find_matrix(dir, "Y_noisy")?,
            find_matrix(dir, "X_true")?,
            find_matrix(dir, "W_true")?,
        ),
        (None, Some(y), Some(x), Some(w)) => (
            io::load_matrix_auto(y)?,
            io::load_matrix_auto(x)?,
            io::load_matrix_auto(w)?,
        ),
        _ => {
            return Err(
                UsageError("pass --scene-dir or all of --input, --x-true, --w-true".into()).into(),
            )
        }
    };
    let text = std::fs::read_to_string(&args.mask).map_err(|e| UnmixError::io(&args.mask, e))?;
    let mut mask = io::parse_index_list(&text, &args.mask)?;
    mask.sort_unstable();
    mask.dedup();

    let y = SpectraMatrix::new(y)?;
    let eval = EvalOptions {
        renormalize: !args.raw_rmse,
        ..Default::default()
    };
    let results = bandmask_compare(
        &y,
        x_true.view(),
        w_true.view(),
        &mask,
        &args.methods,
        args.k,
        &cfg,
        &eval,
    )?;

    let mut out =
        String::from("method,bands_full,bands_masked,sad_full,sad_masked,rmse_full,rmse_masked\n");
    for r in &results {
        let _ = writeln!(
            out,
            "{},{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.method,
            y.bands(),
            y.bands() - mask.len(),
            r.full.mean_sad,
            r.masked.mean_sad,
            r.full.mean_rmse,
            r.masked.mean_rmse
        );
    }
    write_text(args.out.clone(), out)
}
