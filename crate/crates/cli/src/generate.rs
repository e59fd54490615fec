use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use ndarray::{s, Array2};
use unmix_core::io::{self, MatrixFormat};
use unmix_core::synthgen::{builtin_library, generate_scene, SceneSpec};
use unmix_core::Endmembers;

use crate::config::{parse_format, write_matrix};

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Block size; the image has z^2 x z^2 pixels.
    #[arg(long, default_value_t = 8)]
    pub z: usize,
    /// Number of endmembers (at least 2).
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub k: u64,
    /// `builtin` or a D x K' matrix file; the first K columns are used.
    #[arg(long, default_value = "builtin")]
    pub endmember_lib: String,
    /// Band count of the built-in library.
    #[arg(long, default_value_t = 200)]
    pub bands: usize,
    #[arg(long)]
    pub mean_snr: f64,
    #[arg(long, default_value_t = 5.0)]
    pub snr_std: f64,
    #[arg(long, default_value_t = 0.8)]
    pub purity: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// `csv` or `f64`.
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    pub format: MatrixFormat,
}

pub fn run(args: &GenerateArgs) -> Result<()> {
    let k = args.k as usize;
    let lib = if args.endmember_lib == "builtin" {
        builtin_library(args.bands)
    } else {
        Endmembers::new(io::load_matrix_auto(args.endmember_lib.as_ref())?)?
    };
    if k > lib.count() {
        return Err(crate::config::UsageError(format!(
            "library has {} endmembers, --k {k} requested",
            lib.count()
        ))
        .into());
    }
    let lib = Endmembers::new(lib.as_array().slice(s![.., ..k]).to_owned())?;
    let spec = SceneSpec {
        z: args.z,
        snr_std_db: args.snr_std,
        purity_threshold: args.purity,
        ..SceneSpec::new(lib, args.mean_snr, args.seed)
    };
    let scene = generate_scene(&spec)?;

    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let dir = &args.out_dir;
    write_matrix(dir, "Y_noisy", scene.y_noisy.as_array(), args.format)?;
    write_matrix(dir, "Y_clean", scene.y_clean.as_array(), args.format)?;
    write_matrix(dir, "X_true", scene.x_true.as_array(), args.format)?;
    write_matrix(dir, "W_true", scene.w_true.as_array(), args.format)?;
    let snr = Array2::from_shape_vec((scene.band_snr_db.len(), 1), scene.band_snr_db.clone())?;
    write_matrix(dir, "band_snr", &snr, args.format)?;

    let mut meta = String::new();
    let _ = writeln!(meta, "z={}", spec.z);
    let _ = writeln!(meta, "side={}", spec.side());
    let _ = writeln!(meta, "bands={}", scene.y_noisy.bands());
    let _ = writeln!(meta, "pixels={}", scene.y_noisy.pixels());
    let _ = writeln!(meta, "k={k}");
    let _ = writeln!(meta, "endmember_lib={}", args.endmember_lib);
    let _ = writeln!(meta, "mean_snr_db={}", spec.mean_snr_db);
    let _ = writeln!(meta, "snr_std_db={}", spec.snr_std_db);
    let _ = writeln!(meta, "purity_threshold={}", spec.purity_threshold);
    let _ = writeln!(meta, "seed={}", spec.seed);
    let _ = writeln!(meta, "format={}", args.format.extension());
    let path = dir.join("scene.meta");
    std::fs::write(&path, meta).map_err(|e| unmix_core::UnmixError::io(path, e))?;
    Ok(())
}
