use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unmix_core::baselines::{l12_nmf_from, l12_objective, l12_step, l1_nmf_from};
use unmix_core::init::{init_abundances, init_endmembers};
use unmix_core::metrics::{match_endmembers, sad};
use unmix_core::objective::{correntropy_loss, frobenius_loss};
use unmix_core::solver::solve_from;
use unmix_core::synthgen::{
    block_abundances, builtin_library, generate_clean, generate_scene, realized_snr_db,
    smooth_abundances, SceneSpec,
};
use unmix_core::{Endmembers, Lambda, Method, SolverConfig, SpectraMatrix, Termination};

fn uniform(rng: &mut impl Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
}

fn library(k: usize, bands: usize) -> Endmembers {
    Endmembers::new(
        builtin_library(bands)
            .as_array()
            .slice(s![.., ..k])
            .to_owned(),
    )
    .unwrap()
}

fn noisy(rng: &mut impl Rng, x: &Array2<f64>, w: &Array2<f64>, level: f64) -> SpectraMatrix {
    let (d, n) = (x.nrows(), w.ncols());
    SpectraMatrix::new(x.dot(w) + uniform(rng, d, n, 0.0, level)).unwrap()
}

#[test]
fn baselines_fit_exact_data_from_a_good_start() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = library(3, 40).into_inner();
    let w = uniform(&mut rng, 3, 120, 0.0, 1.0);
    let y = SpectraMatrix::new(x.dot(&w)).unwrap();
    let x0 = x.mapv(|v| v * rng.random_range(0.9..1.1));
    let w0 = w.mapv(|v| v * 0.9 + 0.05);
    let cfg = SolverConfig {
        lambda: Lambda::Fixed(0.0),
        max_outer: 200,
        outer_tol: 1e-12,
        inner_tol: 1e-12,
        ..Default::default()
    };
    let yy = y.as_array().iter().map(|v| v * v).sum::<f64>();
    for method in [Method::Nmf, Method::L1Nmf, Method::L12Nmf] {
        let r = method.solve_from(&y, x0.clone(), w0.clone(), &cfg).unwrap();
        let loss = frobenius_loss(y.view(), r.endmembers.view(), r.abundances.view()).unwrap();
        assert!(loss <= 1e-6 * yy, "{method}: {loss} vs {yy}");
    }
}

#[test]
fn nmf_objective_trace_is_nonincreasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..20 {
        let x = uniform(&mut rng, 20, 3, 0.0, 1.0);
        let w = uniform(&mut rng, 3, 50, 0.0, 1.0);
        let y = noisy(&mut rng, &x, &w, 0.3);
        for method in [Method::Nmf, Method::L1Nmf] {
            let r = method
                .solve(
                    &y,
                    3,
                    &SolverConfig {
                        seed: i,
                        max_outer: 10,
                        ..Default::default()
                    },
                )
                .unwrap();
            let t = &r.objective_trace;
            for pair in t.windows(2) {
                assert!(
                    pair[1] <= pair[0] + 1e-9 * (1.0 + t[0].abs()),
                    "{method} seed {i}: {t:?}"
                );
            }
        }
    }
}

#[test]
fn large_penalty_drives_abundances_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = uniform(&mut rng, 15, 3, 0.1, 1.0);
    let w = uniform(&mut rng, 3, 40, 0.0, 1.0);
    let y = noisy(&mut rng, &x, &w, 0.1);
    let x0 = init_endmembers(&y, 3, 0).unwrap();
    let w0 = init_abundances(&y, &x0).unwrap().into_inner();
    let start: f64 = w0.sum();
    let cfg = SolverConfig {
        max_outer: 50,
        ..Default::default()
    };
    let r = l1_nmf_from(&y, x0.into_inner(), w0, 1e6, &cfg).unwrap();
    assert!(r.abundances.as_array().sum() < 1e-6 * start);
}

#[test]
fn penalties_shrink_abundances() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = uniform(&mut rng, 15, 3, 0.1, 1.0);
    let w = uniform(&mut rng, 3, 40, 0.0, 1.0);
    let y = noisy(&mut rng, &x, &w, 0.1);
    let x0 = init_endmembers(&y, 3, 0).unwrap().into_inner();
    let w0 = init_abundances(&y, &Endmembers::new(x0.clone()).unwrap())
        .unwrap()
        .into_inner();
    let cfg = SolverConfig {
        max_outer: 20,
        ..Default::default()
    };

    let free = l1_nmf_from(&y, x0.clone(), w0.clone(), 0.0, &cfg).unwrap();
    let l1 = l1_nmf_from(&y, x0.clone(), w0.clone(), 0.1, &cfg).unwrap();
    assert!(l1.abundances.as_array().sum() < free.abundances.as_array().sum());

    let half = |w: &Array2<f64>| w.iter().map(|v| v.sqrt()).sum::<f64>();
    let l12 = l12_nmf_from(&y, x0, w0, 0.5, &cfg).unwrap();
    assert!(half(l12.abundances.as_array()) < half(free.abundances.as_array()));
}

#[test]
fn l12_objective_is_nonincreasing_per_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let x0 = uniform(&mut rng, 12, 3, 0.1, 1.0);
        let w0 = uniform(&mut rng, 3, 30, 0.1, 1.0);
        let y = noisy(&mut rng, &x0, &w0, 0.2).into_inner();
        let (mut x, mut w) = (
            uniform(&mut rng, 12, 3, 0.1, 1.0),
            uniform(&mut rng, 3, 30, 0.1, 1.0),
        );
        let lambda = rng.random_range(0.01..0.5);
        let mut prev = l12_objective(y.view(), x.view(), w.view(), lambda);
        for _ in 0..100 {
            l12_step(y.view(), &mut x, &mut w, lambda, 1e-12);
            let f = l12_objective(y.view(), x.view(), w.view(), lambda);
            assert!(f <= prev * (1.0 + 1e-7), "{f} > {prev}");
            prev = f;
        }
    }
}

#[test]
fn cenmf_fits_noiseless_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = library(3, 30).into_inner();
    let w = uniform(&mut rng, 3, 100, 0.0, 1.0);
    let y = SpectraMatrix::new(x.dot(&w)).unwrap();
    let x0 = x.mapv(|v| v * rng.random_range(0.95..1.05));
    let w0 = w.mapv(|v| v * 0.95 + 0.02);
    let cfg = SolverConfig {
        lambda: Lambda::Fixed(0.0),
        max_outer: 300,
        outer_tol: 1e-14,
        inner_tol: 1e-12,
        ..Default::default()
    };
    let r = solve_from(&y, x0, w0, &cfg).unwrap();
    let sigma2 = *r.sigma2_trace.last().unwrap();
    let g = correntropy_loss(y.view(), r.endmembers.view(), r.abundances.view(), sigma2).unwrap();
    assert!(g <= -30.0 + 1e-3, "{g}");
}

#[test]
fn cenmf_downweights_a_noisy_band() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = library(4, 40).into_inner();
    let w = {
        let mut w = uniform(&mut rng, 4, 400, 0.0, 1.0);
        for mut c in w.columns_mut() {
            let s = c.sum();
            c /= s;
        }
        w
    };
    let mut y = x.dot(&w) + uniform(&mut rng, 40, 400, 0.0, 0.005);
    let bad = 17;
    let scale = y.row(bad).mean().unwrap();
    y.row_mut(bad)
        .mapv_inplace(|v| v + rng.random_range(0.0..4.0 * scale));
    let r = Method::Cenmf
        .solve(&SpectraMatrix::new(y).unwrap(), 4, &SolverConfig::default())
        .unwrap();
    let u = r.band_weights.as_array();
    let mut clean: Vec<f64> = (0..40).filter(|&d| d != bad).map(|d| u[d]).collect();
    clean.sort_by(f64::total_cmp);
    assert!(
        u[bad] < clean[clean.len() / 10],
        "u_bad {} vs p10 {}",
        u[bad],
        clean[clean.len() / 10]
    );
}

#[test]
fn solvers_are_deterministic() {
    let spec = SceneSpec {
        z: 3,
        ..SceneSpec::new(library(3, 25), 25.0, 11)
    };
    let scene = generate_scene(&spec).unwrap();
    let cfg = SolverConfig {
        seed: 3,
        max_outer: 5,
        ..Default::default()
    };
    for method in Method::ALL {
        let a = method.solve(&scene.y_noisy, 3, &cfg).unwrap();
        let b = method.solve(&scene.y_noisy, 3, &cfg).unwrap();
        assert_eq!(a.endmembers, b.endmembers, "{method}");
        assert_eq!(a.abundances, b.abundances, "{method}");
        assert_eq!(a.objective_trace, b.objective_trace, "{method}");
    }
}

#[test]
fn termination_reason_is_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = uniform(&mut rng, 10, 2, 0.1, 1.0);
    let w = uniform(&mut rng, 2, 30, 0.0, 1.0);
    let y = noisy(&mut rng, &x, &w, 0.05);
    let short = Method::Cenmf
        .solve(
            &y,
            2,
            &SolverConfig {
                max_outer: 1,
                ..Default::default()
            },
        )
        .unwrap();
    assert_eq!(short.termination, Termination::MaxIterations);
    let long = Method::Nmf
        .solve(
            &y,
            2,
            &SolverConfig {
                max_outer: 10_000,
                outer_tol: 1e-3,
                ..Default::default()
            },
        )
        .unwrap();
    assert_eq!(long.termination, Termination::ToleranceReached);
}

#[test]
fn vca_finds_pure_pixels() {
    // Smoothed abundances before pure-pixel removal keep the block interiors pure.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (z, k) = (5, 4);
    let lib = library(k, 60);
    let mut w = loop {
        let w = block_abundances(z, k, &mut rng);
        if w.rows().into_iter().all(|r| r.sum() > 0.0) {
            break w;
        }
    };
    w = smooth_abundances(&w, z);
    // Guarantee one pure pixel per endmember.
    for e in 0..k {
        w.column_mut(e).fill(0.0);
        w[[e, e]] = 1.0;
    }
    let y = SpectraMatrix::new(lib.as_array().dot(&w)).unwrap();
    let x0 = init_endmembers(&y, k, 0).unwrap();
    let perm = match_endmembers(lib.view(), x0.view()).unwrap();
    for (i, &j) in perm.iter().enumerate() {
        let angle = sad(lib.as_array().column(i), x0.as_array().column(j)).unwrap();
        assert!(angle < 1e-6, "endmember {i}: {angle}");
    }
}

#[test]
fn realized_snr_tracks_target() {
    let spec = SceneSpec::new(library(6, 200), 25.0, 21);
    let scene = generate_scene(&spec).unwrap();
    let (y, yc) = (scene.y_noisy.as_array(), scene.y_clean.as_array());
    let mut err = 0.0;
    let mut counted = 0;
    for d in 0..200 {
        // Clipping at zero changes the drawn noise slightly; compare on the signal actually added.
        let noise = &y.row(d) - &yc.row(d);
        err += (realized_snr_db(yc.row(d), noise.view()) - scene.band_snr_db[d]).abs();
        counted += 1;
    }
    let mean_err = err / counted as f64;
    assert!(mean_err < 0.5, "mean |realised - target| = {mean_err} dB");
}

#[test]
fn generated_scene_shapes_and_reproducibility() {
    let spec = SceneSpec::new(library(6, 200), 30.0, 1);
    let a = generate_scene(&spec).unwrap();
    assert_eq!(a.y_clean.as_array().dim(), (200, 4096));
    assert_eq!(a.w_true.as_array().dim(), (6, 4096));
    let b = generate_scene(&spec).unwrap();
    assert_eq!(a.y_noisy, b.y_noisy);
    let (yc, w) = generate_clean(&spec).unwrap();
    assert_eq!(&yc, a.y_clean.as_array());
    assert_eq!(&w, a.w_true.as_array());
}
