use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectrafill::maskgen::{band_mask, BandNorm, BandSpec};
use spectrafill::metrics::psnr;
use spectrafill::similarity::{
    build_graph, Edge, GraphParams, MetricInput, MetricKind, PatchGraph,
};
use spectrafill::solver::{
    apply_hessian, energy, gradient, restore_iterated, solve_l1, solve_quadratic, CgForm,
    SolverConfig, Window,
};
use spectrafill::{dft2, project_known, FreqMask, Image};

fn random_image(n: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(n, |_, _| rng.random_range(0.0..255.0)).unwrap()
}

fn random_graph(n: usize, rho: usize, edges: usize, seed: u64) -> PatchGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = (0..edges)
        .map(|_| Edge {
            k: (rng.random_range(0..n), rng.random_range(0..n)),
            l: (rng.random_range(0..n), rng.random_range(0..n)),
            delta: 0.0,
            weight: rng.random_range(0.1..1.0),
        })
        .collect();
    PatchGraph {
        n,
        metric: MetricKind::Ssd,
        params: GraphParams {
            eta: n / 2,
            rho,
            eps: 1,
            m0: 1,
            h: 1.0,
        },
        centers: vec![],
        edges,
    }
}

fn mid_mask(n: usize) -> FreqMask {
    band_mask(
        n,
        &BandSpec::new(vec![(0.0, 3.0), (6.0, (n / 2) as f64 - 1.0)], BandNorm::Max),
    )
    .unwrap()
}

fn assert_constraint(restored: &Image, g: &Image, mask: &FreqMask) {
    let (a, b) = (dft2(restored), dft2(g));
    let mut worst: f64 = 0.0;
    for (k1, k2) in mask.frequencies() {
        worst = worst.max((a.get(k1, k2) - b.get(k1, k2)).norm());
    }
    assert!(
        worst <= 1e-9 * g.norm(),
        "known coefficients moved by {worst:e}"
    );
}

#[test]
fn energy_matches_naive_loops() {
    let n = 32;
    let u = random_image(n, 1);
    let graph = random_graph(n, 5, 12, 2);
    for (alpha, window) in [
        (2, Window::Indicator),
        (1, Window::Indicator),
        (2, Window::Hann),
    ] {
        let cfg = SolverConfig {
            alpha,
            window,
            ..Default::default()
        };
        let mut naive = 0.0;
        for e in &graph.edges {
            for di in -2i64..=2 {
                for dj in -2i64..=2 {
                    let psi = match window {
                        Window::Indicator => 1.0,
                        Window::Hann => {
                            let h = |t: i64| {
                                0.5 * (1.0 + (std::f64::consts::PI * t as f64 / 3.0).cos())
                            };
                            h(di) * h(dj)
                        }
                    };
                    let a = u.get_wrapped(e.k.0 as i64 + di, e.k.1 as i64 + dj);
                    let b = u.get_wrapped(e.l.0 as i64 + di, e.l.1 as i64 + dj);
                    naive += e.weight * psi * psi * (a - b).abs().powi(alpha as i32);
                }
            }
        }
        let e = energy(&u, &graph, &cfg).unwrap();
        assert!((e - naive).abs() <= 1e-10 * naive, "{e} vs {naive}");
    }
}

#[test]
fn gradient_matches_central_differences() {
    let n = 16;
    let u = random_image(n, 3);
    let graph = random_graph(n, 3, 6, 4);
    let cfg = SolverConfig::default();
    let grad = gradient(&u, &graph, &cfg).unwrap();
    let h = 1e-5;
    let mut num = vec![0.0; n * n];
    for idx in 0..n * n {
        let mut plus = u.pixels().to_vec();
        let mut minus = u.pixels().to_vec();
        plus[idx] += h;
        minus[idx] -= h;
        let ep = energy(&Image::new(n, plus).unwrap(), &graph, &cfg).unwrap();
        let em = energy(&Image::new(n, minus).unwrap(), &graph, &cfg).unwrap();
        num[idx] = (ep - em) / (2.0 * h);
    }
    let diff: f64 = grad
        .pixels()
        .iter()
        .zip(&num)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let rel = diff / grad.norm();
    assert!(rel <= 1e-5, "relative error {rel:e}");
}

#[test]
fn hessian_is_symmetric() {
    let n = 16;
    let graph = random_graph(n, 5, 10, 5);
    let cfg = SolverConfig::default();
    for s in 0..4 {
        let u = random_image(n, 10 + s);
        let v = random_image(n, 20 + s);
        let hu = apply_hessian(&u, &graph, &cfg).unwrap();
        let hv = apply_hessian(&v, &graph, &cfg).unwrap();
        let (a, b) = (hu.dot(&v).unwrap(), u.dot(&hv).unwrap());
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }
}

#[test]
fn empty_graph_leaves_the_input() {
    let n = 16;
    let mask = mid_mask(n);
    let g = project_known(&random_image(n, 6), &mask).unwrap();
    let mut graph = random_graph(n, 3, 0, 0);
    graph.edges.clear();
    for res in [
        solve_quadratic(&g, &mask, &graph, &SolverConfig::default()).unwrap(),
        solve_l1(
            &g,
            &mask,
            &graph,
            &SolverConfig {
                alpha: 1,
                ..Default::default()
            },
        )
        .unwrap(),
    ] {
        assert!(res.v.pixels().iter().all(|&x| x == 0.0));
        assert_eq!(res.restored, g);
    }
}

#[test]
fn packed_and_projected_forms_agree() {
    let n = 32;
    let mask = mid_mask(n);
    let g0 = random_image(n, 7);
    let g = project_known(&g0, &mask).unwrap();
    let graph = build_graph(
        MetricInput::Oracle(&g0),
        &GraphParams {
            eta: 8,
            rho: 5,
            eps: 3,
            m0: 4,
            h: 100.0,
        },
    )
    .unwrap();
    let base = SolverConfig {
        cg_tol: 1e-12,
        cg_max_iter: 5000,
        ..Default::default()
    };
    let a = solve_quadratic(&g, &mask, &graph, &base).unwrap();
    let b = solve_quadratic(
        &g,
        &mask,
        &graph,
        &SolverConfig {
            form: CgForm::Projected,
            ..base.clone()
        },
    )
    .unwrap();
    assert!(a.converged && b.converged);
    let gap = a.restored.sub(&b.restored).unwrap().norm() / a.restored.norm();
    assert!(gap <= 1e-8, "forms differ by {gap:e}");
    assert_constraint(&a.restored, &g, &mask);
    assert_constraint(&b.restored, &g, &mask);
    for r in [&a, &b] {
        assert!(r
            .energy_trace
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        let exact = energy(&r.restored, &graph, &base).unwrap();
        assert!((exact - r.energy_trace.last().unwrap()).abs() <= 1e-6 * exact.max(1.0));
    }
}

#[test]
fn stationarity_at_requested_tolerance() {
    let n = 32;
    let mask = mid_mask(n);
    let g0 = random_image(n, 8);
    let g = project_known(&g0, &mask).unwrap();
    let graph = build_graph(
        MetricInput::Ssd(&g),
        &GraphParams {
            eta: 6,
            rho: 3,
            eps: 2,
            m0: 3,
            h: 100.0,
        },
    )
    .unwrap();
    let cfg = SolverConfig::default();
    let res = solve_quadratic(&g, &mask, &graph, &cfg).unwrap();
    let proj = |img: &Image| spectrafill::project_missing(img, &mask).unwrap().norm();
    let before = proj(&gradient(&g, &graph, &cfg).unwrap());
    let after = proj(&gradient(&res.restored, &graph, &cfg).unwrap());
    assert!(res.converged);
    assert!(
        after <= 1e-6 * before * (1.0 + 1e-6),
        "{after:e} vs {before:e}"
    );
}

#[test]
fn non_convergence_returns_flagged_iterate() {
    let n = 32;
    let mask = mid_mask(n);
    let g0 = random_image(n, 9);
    let g = project_known(&g0, &mask).unwrap();
    let graph = build_graph(
        MetricInput::Oracle(&g0),
        &GraphParams {
            eta: 8,
            rho: 5,
            eps: 3,
            m0: 4,
            h: 100.0,
        },
    )
    .unwrap();
    let res = solve_quadratic(
        &g,
        &mask,
        &graph,
        &SolverConfig {
            cg_max_iter: 2,
            cg_tol: 1e-14,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(!res.converged);
    assert_eq!(res.iterations, 2);
    assert_constraint(&res.restored, &g, &mask);
}

#[test]
fn l1_energy_decreases_and_matches_perfect_instance() {
    let n = 32;
    let mask = mid_mask(n);
    let g0 = random_image(n, 11);
    let g = project_known(&g0, &mask).unwrap();
    let graph = build_graph(
        MetricInput::Ssd(&g),
        &GraphParams {
            eta: 6,
            rho: 3,
            eps: 2,
            m0: 3,
            h: 100.0,
        },
    )
    .unwrap();
    let cfg = SolverConfig {
        alpha: 1,
        irls_rounds: 8,
        ..Default::default()
    };
    let res = solve_l1(&g, &mask, &graph, &cfg).unwrap();
    assert!(res.irls_eps.unwrap() > 0.0);
    assert!(
        res.energy_trace
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-9)),
        "{:?}",
        res.energy_trace
    );
    assert_constraint(&res.restored, &g, &mask);

    // a periodic image restored with its own exact matches: zero is reached
    // by both exponents
    let tile = random_image(8, 12);
    let g0 = Image::from_fn(n, |i, j| tile.get(i % 8, j % 8)).unwrap();
    let mask = band_mask(n, &BandSpec::new(vec![(0.0, 5.0)], BandNorm::Max)).unwrap();
    let g = project_known(&g0, &mask).unwrap();
    let mut graph = build_graph(
        MetricInput::Oracle(&g0),
        &GraphParams {
            eta: 8,
            rho: 3,
            eps: 2,
            m0: 2,
            h: 100.0,
        },
    )
    .unwrap();
    graph.edges.retain(|e| e.delta == 0.0);
    let q = solve_quadratic(
        &g,
        &mask,
        &graph,
        &SolverConfig {
            cg_tol: 1e-12,
            cg_max_iter: 5000,
            ..Default::default()
        },
    )
    .unwrap();
    let l = solve_l1(
        &g,
        &mask,
        &graph,
        &SolverConfig {
            alpha: 1,
            cg_tol: 1e-12,
            cg_max_iter: 5000,
            ..Default::default()
        },
    )
    .unwrap();
    let scale = g0.norm();
    assert!(q.restored.sub(&l.restored).unwrap().norm() <= 1e-6 * scale);
}

#[test]
fn oracle_weights_on_exact_repetitions_gain_3db() {
    // two stripe fields of period 8, one per half; only exact duplicate
    // patches are linked
    let n = 64;
    let g0 = Image::from_fn(n, |i, j| {
        let t = if j < n / 2 { i } else { j };
        128.0 + 100.0 * (2.0 * std::f64::consts::PI * t as f64 / 8.0).cos()
    })
    .unwrap();
    let mask = band_mask(
        n,
        &BandSpec::new(vec![(0.0, 12.0), (16.0, 32.0)], BandNorm::Max),
    )
    .unwrap();
    let g = project_known(&g0, &mask).unwrap();
    let mut graph = build_graph(
        MetricInput::Oracle(&g0),
        &GraphParams {
            eta: 16,
            rho: 5,
            eps: 4,
            m0: 6,
            h: 100.0,
        },
    )
    .unwrap();
    graph.edges.retain(|e| e.delta < 1e-9);
    let res = solve_quadratic(&g, &mask, &graph, &SolverConfig::default()).unwrap();
    let before = psnr(&g, &g0).unwrap();
    let after = psnr(&res.restored, &g0).unwrap();
    assert!(after >= before + 3.0, "{before:.2} -> {after:.2}");
}

#[test]
fn single_atom_round_equals_direct_solve() {
    use spectrafill::atoms::{compute_atoms, AtomParams};
    use spectrafill::similarity::filter_responses;
    let n = 32;
    let mask = mid_mask(n);
    let g0 = random_image(n, 14);
    let g = project_known(&g0, &mask).unwrap();
    let atoms = compute_atoms(
        &mask,
        &AtomParams {
            count: 6,
            ..Default::default()
        },
    )
    .unwrap();
    let params = GraphParams {
        eta: 8,
        rho: 5,
        eps: 3,
        m0: 4,
        h: 100.0,
    };
    let cfg = SolverConfig::default();
    let it = restore_iterated(
        &g,
        &mask,
        Some(&atoms),
        &params,
        &[MetricKind::Atom],
        &cfg,
        Some(&g0),
    )
    .unwrap();
    let stack = filter_responses(&g, &atoms).unwrap();
    let graph = build_graph(MetricInput::Atom(&stack), &params).unwrap();
    let direct = solve_quadratic(&g, &mask, &graph, &cfg).unwrap();
    assert_eq!(it.result.restored, direct.restored);
    assert_eq!(it.round_psnr.len(), 1);

    let two = restore_iterated(
        &g,
        &mask,
        Some(&atoms),
        &params,
        &[MetricKind::Atom, MetricKind::Ssd],
        &cfg,
        None,
    )
    .unwrap();
    assert_eq!(two.rounds.len(), 2);
    assert_constraint(&two.result.restored, &g, &mask);
}
