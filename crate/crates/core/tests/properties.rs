use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use unmix_core::init::init_abundances;
use unmix_core::io::{self, MatrixFormat};
use unmix_core::metrics::{match_endmembers, sad, sad_matrix};
use unmix_core::objective::{augmented_objective, cenmf_objective};
use unmix_core::solver::{band_weights, estimate_lambda};
use unmix_core::synthgen::{block_abundances, remove_pure_pixels, smooth_abundances};
use unmix_core::{Endmembers, SpectraMatrix};

fn matrix(
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
    lo: f64,
    hi: f64,
) -> impl Strategy<Value = Array2<f64>> {
    (rows, cols).prop_flat_map(move |(r, c)| {
        prop::collection::vec(lo..hi, r * c)
            .prop_map(move |v| Array2::from_shape_vec((r, c), v).unwrap())
    })
}

/// `(Y, X, W)` with compatible shapes.
fn instance() -> impl Strategy<Value = (Array2<f64>, Array2<f64>, Array2<f64>)> {
    (1usize..8, 1usize..8, 1usize..4).prop_flat_map(|(d, n, k)| {
        (
            prop::collection::vec(0.0..2.0, d * n),
            prop::collection::vec(0.0..1.0, d * k),
            prop::collection::vec(0.0..1.0, k * n),
        )
            .prop_map(move |(y, x, w)| {
                (
                    Array2::from_shape_vec((d, n), y).unwrap(),
                    Array2::from_shape_vec((d, k), x).unwrap(),
                    Array2::from_shape_vec((k, n), w).unwrap(),
                )
            })
    })
}

fn tmp(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("unmix-props-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sad_is_scale_invariant_and_symmetric(
        v in prop::collection::vec((0.01f64..1.0, 0.01f64..1.0), 2..40),
        ca in 1e-3f64..1e3,
        cb in 1e-3f64..1e3,
    ) {
        let a: Array1<f64> = v.iter().map(|p| p.0).collect();
        let b: Array1<f64> = v.iter().map(|p| p.1).collect();
        let base = sad(a.view(), b.view()).unwrap();
        prop_assert!((0.0..=std::f64::consts::PI).contains(&base));
        prop_assert_eq!(base, sad(b.view(), a.view()).unwrap());
        let scaled = sad((&a * ca).view(), (&b * cb).view()).unwrap();
        prop_assert!((base - scaled).abs() < 1e-12);
    }

    #[test]
    fn lambda_estimate_is_bounded(y in matrix(1..15, 2..30, 0.0, 5.0)) {
        let l = estimate_lambda(y.view()).unwrap();
        prop_assert!(l >= 0.0 && l <= (y.nrows() as f64).sqrt());
    }

    #[test]
    fn band_weights_lie_in_unit_interval((y, x, w) in instance(), sigma2 in 1e-3f64..10.0) {
        let u = band_weights(y.view(), x.view(), w.view(), sigma2).unwrap();
        prop_assert!(u.as_array().iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn augmented_objective_bounds_cenmf_objective(
        (y, x, w) in instance(),
        sigma2 in 0.1f64..10.0,
        lambda in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let g = cenmf_objective(y.view(), x.view(), w.view(), sigma2, lambda).unwrap();
        let u_star = band_weights(y.view(), x.view(), w.view(), sigma2).unwrap();
        let at_star = augmented_objective(y.view(), x.view(), w.view(), u_star.as_array().view(), sigma2, lambda).unwrap();
        prop_assert!((at_star - g).abs() <= 1e-12 * g.abs().max(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Array1<f64> = (0..y.nrows()).map(|_| rand::Rng::random_range(&mut rng, 1e-6..=1.0)).collect();
        let other = augmented_objective(y.view(), x.view(), w.view(), u.view(), sigma2, lambda).unwrap();
        prop_assert!(other >= g - 1e-12 * g.abs().max(1.0));
    }

    #[test]
    fn init_abundances_are_nonnegative_and_beat_zero((y, x, _) in instance()) {
        prop_assume!(x.columns().into_iter().all(|c| c.sum() > 1e-3));
        let ym = SpectraMatrix::new(y.clone()).unwrap();
        let xm = Endmembers::new(x.clone()).unwrap();
        let w = init_abundances(&ym, &xm).unwrap();
        prop_assert!(w.as_array().iter().all(|&v| v >= 0.0));
        let r = &y - &x.dot(w.as_array());
        for n in 0..y.ncols() {
            let fit: f64 = r.column(n).iter().map(|v| v * v).sum();
            let zero: f64 = y.column(n).iter().map(|v| v * v).sum();
            prop_assert!(fit <= zero * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn csv_round_trip_is_exact(m in matrix(1..6, 1..6, -1e300, 1e300), tiny in -1e-300f64..1e-300) {
        let mut m = m;
        m[[0, 0]] = tiny;
        let path = tmp("p.csv");
        io::save_matrix(&m, &path, MatrixFormat::Csv).unwrap();
        let back = io::load_matrix(&path, MatrixFormat::Csv).unwrap();
        prop_assert!(back.iter().zip(&m).all(|(a, b)| a.to_bits() == b.to_bits() || (*a == 0.0 && *b == 0.0)));
    }

    #[test]
    fn raw_round_trip_is_bitwise(bits in prop::collection::vec(any::<u64>(), 12)) {
        let m = Array2::from_shape_vec((3, 4), bits.iter().map(|&b| f64::from_bits(b)).collect()).unwrap();
        let path = tmp("p.f64");
        io::save_matrix(&m, &path, MatrixFormat::RawF64).unwrap();
        let back = io::load_matrix(&path, MatrixFormat::RawF64).unwrap();
        prop_assert!(back.iter().zip(&m).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn generated_abundances_stay_on_the_simplex(z in 2usize..7, k in 2usize..6, seed in any::<u64>(), thr in 0.5f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w0 = block_abundances(z, k, &mut rng);
        let mut w = smooth_abundances(&w0, z);
        for c in w.columns() {
            prop_assert!((c.sum() - 1.0).abs() < 1e-12);
        }
        let before = w.clone();
        remove_pure_pixels(&mut w, thr, &mut rng);
        for (c, old) in w.columns().into_iter().zip(before.columns()) {
            prop_assert!((c.sum() - 1.0).abs() < 1e-12);
            prop_assert!(c.iter().all(|&v| v >= 0.0 && v <= thr + 1e-9));
            if c != old {
                prop_assert_eq!(c.iter().filter(|&&v| v != 0.0).count(), 2);
                prop_assert!(c.iter().all(|&v| v == 0.0 || v == 0.5));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn matching_agrees_with_brute_force(xt in matrix(4..9, 3..4, 0.01, 1.0), xe in matrix(4..9, 3..4, 0.01, 1.0)) {
        prop_assume!(xt.nrows() == xe.nrows());
        let cost = sad_matrix(xt.view(), xe.view()).unwrap();
        let perm = match_endmembers(xt.view(), xe.view()).unwrap();
        let total = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum::<f64>();
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let best = perms.iter().map(|p| total(p)).fold(f64::INFINITY, f64::min);
        prop_assert!((total(&perm) - best).abs() < 1e-12);
    }
}
