use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectrafill::maskgen::{
    band_mask, default_grid_scale, equispaced_directions, scattering_mask, BandNorm, BandSpec,
};
use spectrafill::metrics::psnr;
use spectrafill::tv::{solve_tv, tv_prox, tv_value, TvConfig, TvDual};
use spectrafill::{dft2, project_known, Image};

fn random_image(n: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(n, |_, _| rng.random_range(0.0..10.0)).unwrap()
}

#[test]
fn tv_matches_naive_loop() {
    let u = random_image(16, 1);
    let mut naive = 0.0;
    for i in 0..16i64 {
        for j in 0..16i64 {
            let dx = u.get_wrapped(i + 1, j) - u.get_wrapped(i, j);
            let dy = u.get_wrapped(i, j + 1) - u.get_wrapped(i, j);
            naive += (dx * dx + dy * dy).sqrt();
        }
    }
    assert!((tv_value(&u) - naive).abs() <= 1e-12 * naive);
}

/// Chambolle's projection iteration for `min ½‖u - f‖² + λ TV(u)`, written
/// with the divergence instead of the adjoint gradient.
fn chambolle(f: &Image, lambda: f64, iters: usize) -> Image {
    let n = f.n() as i64;
    let idx = |i: i64, j: i64| (i.rem_euclid(n) * n + j.rem_euclid(n)) as usize;
    let size = (n * n) as usize;
    let (mut px, mut py) = (vec![0.0; size], vec![0.0; size]);
    let tau = 0.125;
    let div = |px: &[f64], py: &[f64]| {
        let mut d = vec![0.0; size];
        for i in 0..n {
            for j in 0..n {
                d[idx(i, j)] =
                    px[idx(i, j)] - px[idx(i - 1, j)] + py[idx(i, j)] - py[idx(i, j - 1)];
            }
        }
        d
    };
    for _ in 0..iters {
        let d = div(&px, &py);
        let w: Vec<f64> = d
            .iter()
            .zip(f.pixels())
            .map(|(a, b)| a - b / lambda)
            .collect();
        for i in 0..n {
            for j in 0..n {
                let k = idx(i, j);
                let gx = w[idx(i + 1, j)] - w[k];
                let gy = w[idx(i, j + 1)] - w[k];
                let s = 1.0 + tau * (gx * gx + gy * gy).sqrt();
                px[k] = (px[k] + tau * gx) / s;
                py[k] = (py[k] + tau * gy) / s;
            }
        }
    }
    let d = div(&px, &py);
    Image::new(
        f.n(),
        f.pixels()
            .iter()
            .zip(&d)
            .map(|(a, b)| a - lambda * b)
            .collect(),
    )
    .unwrap()
}

fn prox_objective(u: &Image, f: &Image, lambda: f64) -> f64 {
    0.5 * u.sub(f).unwrap().norm().powi(2) + lambda * tv_value(u)
}

#[test]
fn prox_matches_long_chambolle_run() {
    for seed in 0..3 {
        let f = random_image(8, 10 + seed);
        let lambda = 0.7;
        let oracle = chambolle(&f, lambda, 100_000);
        let mut dual = TvDual::zeros(8);
        let u = tv_prox(&f, lambda, 2000, &mut dual);
        let (a, b) = (
            prox_objective(&u, &f, lambda),
            prox_objective(&oracle, &f, lambda),
        );
        assert!((a - b).abs() <= 1e-4, "{a} vs {b}");
    }
}

#[test]
fn constraint_is_exact_and_tv_does_not_increase() {
    let n = 32;
    let g0 = random_image(n, 2);
    let mask = band_mask(
        n,
        &BandSpec::new(vec![(0.0, 4.0), (8.0, 12.0)], BandNorm::Max),
    )
    .unwrap();
    let g = project_known(&g0, &mask).unwrap();
    let res = solve_tv(
        &g,
        &mask,
        &TvConfig {
            outer_iters: 50,
            ..Default::default()
        },
    )
    .unwrap();
    let (a, b) = (dft2(&res.restored), dft2(&g));
    for (k1, k2) in mask.frequencies() {
        assert!((a.get(k1, k2) - b.get(k1, k2)).norm() <= 1e-9 * g.norm());
    }
    assert!(tv_value(&res.restored) <= tv_value(&g));
}

#[test]
fn piecewise_constant_disks_improve_under_scattering_mask() {
    let n = 64;
    let g0 = Image::from_fn(n, |i, j| {
        let d = |a: f64, b: f64| ((i as f64 - a).powi(2) + (j as f64 - b).powi(2)).sqrt();
        if d(22.0, 24.0) < 9.0 || d(42.0, 38.0) < 7.0 {
            1.0
        } else {
            0.0
        }
    })
    .unwrap();
    let k = 3.0 * std::f64::consts::PI;
    let dirs = equispaced_directions(32);
    let mask = scattering_mask(n, k, &dirs, &dirs, default_grid_scale(n, k)).unwrap();
    let g = project_known(&g0, &mask).unwrap();
    let res = solve_tv(
        &g,
        &mask,
        &TvConfig {
            dr_gamma: 0.05,
            ..Default::default()
        },
    )
    .unwrap();
    let before = psnr(&g, &g0).unwrap();
    let after = psnr(&res.restored, &g0).unwrap();
    assert!(after > before + 1.0, "{before:.2} -> {after:.2}");
}
