//! Synthetic scenes with block-structured, smoothed abundances and per-band
//! Gaussian noise.
//!
//! A `z^2 x z^2` image is tiled with `z x z` blocks, each filled with one
//! endmember. The one-hot abundance maps are smoothed with a normalised
//! `(z+1) x (z+1)` box filter, then every pixel that is still too pure is
//! replaced by an equal two-endmember mixture. Pixels are numbered row-major.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Result, UnmixError};
use crate::model::{Abundances, Endmembers, SpectraMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    /// Block size; the image is `z^2 x z^2` pixels.
    pub z: usize,
    pub endmember_library: Endmembers,
    pub mean_snr_db: f64,
    pub snr_std_db: f64,
    /// Pixels whose largest abundance exceeds this are replaced.
    pub purity_threshold: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// Defaults: `z = 8`, SNR spread 5 dB, purity threshold 0.8.
    pub fn new(endmember_library: Endmembers, mean_snr_db: f64, seed: u64) -> Self {
        Self {
            z: 8,
            endmember_library,
            mean_snr_db,
            snr_std_db: 5.0,
            purity_threshold: 0.8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(UnmixError::InvalidConfig(m));
        if self.z < 2 {
            return bad(format!("block size must be >= 2, got {}", self.z));
        }
        if self.endmember_library.count() < 2 {
            return bad("scene needs at least 2 endmembers".into());
        }
        // Replaced pixels have largest abundance 0.5, so thresholds below that
        // could never be met.
        if !(self.purity_threshold >= 0.5 && self.purity_threshold <= 1.0) {
            return bad(format!(
                "purity threshold must lie in [0.5, 1], got {}",
                self.purity_threshold
            ));
        }
        if !(self.snr_std_db >= 0.0 && self.snr_std_db.is_finite()) || !self.mean_snr_db.is_finite()
        {
            return bad("SNR parameters must be finite with nonnegative spread".into());
        }
        Ok(())
    }

    pub fn side(&self) -> usize {
        self.z * self.z
    }

    pub fn pixels(&self) -> usize {
        self.side() * self.side()
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub y_clean: SpectraMatrix,
    pub y_noisy: SpectraMatrix,
    pub w_true: Abundances,
    pub x_true: Endmembers,
    pub band_snr_db: Vec<f64>,
}

/// Steps 1-2: one endmember per block, drawn uniformly. Returns `K x N` one-hot abundances.
pub fn block_abundances(z: usize, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let side = z * z;
    let labels: Vec<usize> = (0..z * z).map(|_| rng.random_range(0..k)).collect();
    let mut w = Array2::zeros((k, side * side));
    for r in 0..side {
        for c in 0..side {
            let block = (r / z) * z + c / z;
            w[[labels[block], r * side + c]] = 1.0;
        }
    }
    w
}

/// Step 3: normalised `(z+1) x (z+1)` box filter over each abundance map,
/// with replicated edges. Column sums are preserved.
pub fn smooth_abundances(w: &Array2<f64>, z: usize) -> Array2<f64> {
    let side = z * z;
    let lo = z / 2;
    let hi = z - lo; // window covers offsets -lo..=hi, z + 1 taps
    let clamp = |i: isize| i.clamp(0, side as isize - 1) as usize;
    let norm = ((z + 1) * (z + 1)) as f64;
    let mut out = Array2::zeros(w.dim());
    for (k, map) in w.rows().into_iter().enumerate() {
        // Separable: rows then columns, sums only; one division at the end.
        let mut horiz = vec![0.0; side * side];
        for r in 0..side {
            for c in 0..side {
                let mut s = 0.0;
                for o in -(lo as isize)..=(hi as isize) {
                    s += map[r * side + clamp(c as isize + o)];
                }
                horiz[r * side + c] = s;
            }
        }
        for r in 0..side {
            for c in 0..side {
                let mut s = 0.0;
                for o in -(lo as isize)..=(hi as isize) {
                    s += horiz[clamp(r as isize + o) * side + c];
                }
                out[[k, r * side + c]] = s / norm;
            }
        }
    }
    out
}

/// Step 4: replaces every pixel whose largest abundance exceeds `threshold`
/// with a 0.5/0.5 mix of its dominant endmember and a different one chosen
/// uniformly. Returns the number of replaced pixels.
pub fn remove_pure_pixels(w: &mut Array2<f64>, threshold: f64, rng: &mut impl Rng) -> usize {
    let k = w.nrows();
    let mut replaced = 0;
    for mut col in w.columns_mut() {
        let (dominant, &max) = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("at least one endmember");
        if max <= threshold {
            continue;
        }
        let mut partner = rng.random_range(0..k - 1);
        if partner >= dominant {
            partner += 1;
        }
        col.fill(0.0);
        col[dominant] = 0.5;
        col[partner] = 0.5;
        replaced += 1;
    }
    replaced
}

/// Noise-free part of the scene: abundances from steps 1-4 and `Y = X W`.
pub fn generate_clean(spec: &SceneSpec) -> Result<(Array2<f64>, Array2<f64>)> {
    spec.validate()?;
    let x = spec.endmember_library.as_array();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let blocks = block_abundances(spec.z, x.ncols(), &mut rng);
    let mut w = smooth_abundances(&blocks, spec.z);
    remove_pure_pixels(&mut w, spec.purity_threshold, &mut rng);
    let y = x.dot(&w);
    Ok((y, w))
}

/// Full scene: clean data plus per-band noise at SNRs drawn around the mean.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    let (y, w) = generate_clean(spec)?;
    let y_clean = SpectraMatrix::new(y)?;
    let (y_noisy, band_snr_db) = add_band_noise(
        &y_clean,
        spec.mean_snr_db,
        spec.snr_std_db,
        noise_seed(spec.seed),
    )?;
    Ok(Scene {
        y_clean,
        y_noisy,
        w_true: Abundances::new(w)?,
        x_true: spec.endmember_library.clone(),
        band_snr_db,
    })
}

/// Noise uses its own seed so the layout and the noise can vary independently.
pub fn noise_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

fn band_rng(seed: u64, band: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(band as u64 + 1);
    rng
}

/// Noise variance giving `snr_db` for a band with mean squared value `power`.
pub fn noise_variance(power: f64, snr_db: f64) -> f64 {
    power / 10f64.powf(snr_db / 10.0)
}

/// Mean squared value of each row.
pub fn band_power(y: &Array2<f64>) -> Array1<f64> {
    y.rows()
        .into_iter()
        .map(|r| r.dot(&r) / r.len() as f64)
        .collect()
}

/// Realised SNR in dB of `signal` against `noise`, both single bands.
pub fn realized_snr_db(signal: ndarray::ArrayView1<f64>, noise: ndarray::ArrayView1<f64>) -> f64 {
    10.0 * (signal.dot(&signal) / noise.dot(&noise)).log10()
}

/// Zero-mean Gaussian noise with the given per-band SNRs. Band `d` draws from
/// its own RNG stream, so the result does not depend on evaluation order.
pub fn band_noise(y_clean: &Array2<f64>, snr_db: &[f64], seed: u64) -> Result<Array2<f64>> {
    if snr_db.len() != y_clean.nrows() {
        return Err(UnmixError::ShapeMismatch(format!(
            "{} SNR values for {} bands",
            snr_db.len(),
            y_clean.nrows()
        )));
    }
    let power = band_power(y_clean);
    let n = y_clean.ncols();
    let make_band = |d: usize| -> Vec<f64> {
        let std = noise_variance(power[d], snr_db[d]).sqrt();
        let mut rng = band_rng(seed, d);
        if std > 0.0 && std.is_finite() {
            let dist = Normal::new(0.0, std).expect("finite std");
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        } else {
            vec![0.0; n]
        }
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f64>> = (0..y_clean.nrows())
        .into_par_iter()
        .map(make_band)
        .collect();
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f64>> = (0..y_clean.nrows()).map(make_band).collect();
    Ok(Array2::from_shape_fn(y_clean.dim(), |(d, j)| rows[d][j]))
}

/// Adds noise at explicit per-band SNRs and clips negatives to zero.
pub fn add_noise_with_snrs(
    y_clean: &SpectraMatrix,
    snr_db: &[f64],
    seed: u64,
) -> Result<SpectraMatrix> {
    let noise = band_noise(y_clean.as_array(), snr_db, seed)?;
    let noisy = (y_clean.as_array() + &noise).mapv(|v| v.max(0.0));
    SpectraMatrix::new(noisy)
}

/// Per-band SNR targets drawn from `Normal(mean, std^2)`, one per band stream.
pub fn sample_band_snrs(bands: usize, mean_snr_db: f64, snr_std_db: f64, seed: u64) -> Vec<f64> {
    // Stream 0 is reserved for SNR draws; bands use streams 1..=D.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let dist = Normal::new(mean_snr_db, snr_std_db).expect("validated spread");
    (0..bands).map(|_| dist.sample(&mut rng)).collect()
}

/// Draws per-band SNRs and adds the matching noise. Returns the noisy data
/// and the drawn SNR targets.
pub fn add_band_noise(
    y_clean: &SpectraMatrix,
    mean_snr_db: f64,
    snr_std_db: f64,
    seed: u64,
) -> Result<(SpectraMatrix, Vec<f64>)> {
    if !(snr_std_db >= 0.0 && snr_std_db.is_finite()) || !mean_snr_db.is_finite() {
        return Err(UnmixError::InvalidConfig(
            "SNR parameters must be finite with nonnegative spread".into(),
        ));
    }
    let snrs = sample_band_snrs(y_clean.bands(), mean_snr_db, snr_std_db, seed);
    let noisy = add_noise_with_snrs(y_clean, &snrs, seed)?;
    Ok((noisy, snrs))
}

/// `(centre, width, amplitude)` of one Gaussian feature.
type Feature = (f64, f64, f64);

/// Smooth stand-in endmember library: six spectra over `bands` samples, each
/// a baseline plus a few Gaussian absorption/reflection features.
pub fn builtin_library(bands: usize) -> Endmembers {
    // (baseline, slope, [(centre, width, amplitude)]) with centre/width as
    // fractions of the spectral range.
    const SPECS: [(f64, f64, [Feature; 3]); 6] = [
        (
            0.10,
            0.50,
            [(0.25, 0.06, 0.30), (0.70, 0.10, -0.20), (0.90, 0.05, 0.10)],
        ),
        (
            0.55,
            -0.25,
            [(0.15, 0.08, 0.25), (0.50, 0.05, -0.30), (0.80, 0.12, 0.10)],
        ),
        (
            0.30,
            0.10,
            [(0.35, 0.04, 0.45), (0.60, 0.15, 0.20), (0.95, 0.06, -0.15)],
        ),
        (
            0.20,
            0.30,
            [(0.10, 0.05, 0.20), (0.45, 0.10, 0.35), (0.75, 0.04, -0.15)],
        ),
        (
            0.65,
            0.05,
            [(0.30, 0.12, -0.35), (0.55, 0.05, 0.15), (0.85, 0.08, -0.25)],
        ),
        (
            0.15,
            0.15,
            [(0.05, 0.10, 0.10), (0.40, 0.06, -0.05), (0.65, 0.07, 0.55)],
        ),
    ];
    let x = Array2::from_shape_fn((bands, SPECS.len()), |(d, k)| {
        let t = if bands > 1 {
            d as f64 / (bands - 1) as f64
        } else {
            0.0
        };
        let (base, slope, bumps) = SPECS[k];
        let mut v = base + slope * t;
        for (c, s, a) in bumps {
            v += a * (-0.5 * ((t - c) / s).powi(2)).exp();
        }
        v.max(0.01)
    });
    Endmembers::new(x).expect("library spectra are positive")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lib(k: usize) -> Endmembers {
        let full = builtin_library(50);
        Endmembers::new(full.as_array().slice(ndarray::s![.., ..k]).to_owned()).unwrap()
    }

    #[test]
    fn scene_shapes() {
        let spec = SceneSpec::new(builtin_library(200), 30.0, 1);
        let scene = generate_scene(&spec).unwrap();
        assert_eq!(scene.y_clean.as_array().dim(), (200, 4096));
        assert_eq!(scene.w_true.as_array().dim(), (6, 4096));
        assert_eq!(scene.band_snr_db.len(), 200);
    }

    #[test]
    fn simplex_preserved_by_smoothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = block_abundances(4, 3, &mut rng);
        let s = smooth_abundances(&w, 4);
        for col in s.columns() {
            assert!((col.sum() - 1.0).abs() < 1e-12);
            assert!(col.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn uniform_blocks_become_two_endmember_mixtures() {
        let w = {
            let mut w = Array2::zeros((3, 256));
            w.row_mut(1).fill(1.0);
            w
        };
        let mut s = smooth_abundances(&w, 4);
        assert!(s.row(1).iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(remove_pure_pixels(&mut s, 0.8, &mut rng), 256);
        for col in s.columns() {
            assert_eq!(col.iter().filter(|&&v| v != 0.0).count(), 2);
            assert!(col.iter().all(|&v| v == 0.0 || v == 0.5));
            assert_eq!(col[1], 0.5);
        }
    }

    #[test]
    fn odd_block_size_window() {
        let spec = SceneSpec {
            z: 3,
            ..SceneSpec::new(lib(3), 20.0, 9)
        };
        let (y, w) = generate_clean(&spec).unwrap();
        assert_eq!(w.dim(), (3, 81));
        assert_eq!(y.dim(), (50, 81));
        for col in w.columns() {
            assert!((col.sum() - 1.0).abs() < 1e-9);
            assert!(col.iter().fold(0.0f64, |m, &v| m.max(v)) <= 0.8 + 1e-9);
        }
    }

    #[test]
    fn snr_to_variance() {
        assert_eq!(noise_variance(2.5, 0.0), 2.5);
        assert!((noise_variance(2.5, 10.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn reproducible() {
        let spec = SceneSpec::new(lib(4), 25.0, 42);
        let a = generate_scene(&spec).unwrap();
        let b = generate_scene(&spec).unwrap();
        assert_eq!(a.y_noisy, b.y_noisy);
        assert_eq!(a.band_snr_db, b.band_snr_db);
    }

    #[test]
    fn spec_validation() {
        let mut spec = SceneSpec::new(lib(3), 20.0, 0);
        spec.z = 1;
        assert!(spec.validate().is_err());
        let spec = SceneSpec::new(lib(1), 20.0, 0);
        assert!(spec.validate().is_err());
        let spec = SceneSpec {
            purity_threshold: 0.3,
            ..SceneSpec::new(lib(3), 20.0, 0)
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn band_noise_shape_check() {
        let y = Array2::ones((3, 4));
        assert!(band_noise(&y, &[10.0, 10.0], 0).is_err());
    }
}
