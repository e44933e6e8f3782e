use blowup::baselines::{solve_arclength, solve_rescaling_1d};
use blowup::catalog::{self, reaction_diffusion_dense_jacobian, CatalogOptions};
use blowup::harness::{self, csv_bytes, dyadic_grid, read_csv, run_study, Method, StudySpec};
use blowup::linalg::{self, JacobianAccess};
use blowup::problem::Problem;
use blowup::stepping::h_alt_nd;
use blowup::{solve_1d, solve_log_nd, solve_nd, SolverConfig, StepLaw};

fn entry(id: &str) -> catalog::CatalogEntry {
    catalog::get(id, CatalogOptions::default()).unwrap()
}

#[test]
fn euler_iterates_stay_below_the_flow_on_sq() {
    let e = entry("sq");
    let Problem::Scalar(p) = &e.problem else {
        unreachable!()
    };
    for law in [StepLaw::Adaptive1D, StepLaw::Uniform1D] {
        let run = solve_1d(p, 2f64.powi(-10), &SolverConfig::new(law).with_trace()).unwrap();
        for &(t, x) in run.trace.as_ref().unwrap() {
            let exact = if t < 2.0 {
                1.0 / (2.0 - t)
            } else {
                f64::INFINITY
            };
            assert!(x <= exact * (1.0 + 1e-12), "{law}: x({t}) = {x} > {exact}");
        }
    }
}

#[test]
fn vector_iterate_norms_increase() {
    for id in ["uncoupled", "coupled"] {
        let e = entry(id);
        let Problem::Vector(p) = &e.problem else {
            unreachable!()
        };
        for law in [StepLaw::AdaptiveND, StepLaw::AltND, StepLaw::LogUniformND] {
            let run = solve_nd(p, 2f64.powi(-8), &SolverConfig::new(law).with_trace()).unwrap();
            let trace = run.trace.unwrap();
            assert!(
                trace.windows(2).all(|w| w[1].1 > w[0].1 && w[1].0 > w[0].0),
                "{id} {law}"
            );
        }
    }
}

#[test]
fn exact_flow_dominates_uncoupled_iterates() {
    let e = entry("uncoupled");
    let Problem::Vector(p) = &e.problem else {
        unreachable!()
    };
    let run = solve_nd(
        p,
        2f64.powi(-9),
        &SolverConfig::new(StepLaw::AdaptiveND).with_trace(),
    )
    .unwrap();
    for &(t, norm) in run.trace.as_ref().unwrap() {
        if t >= 0.25 {
            continue;
        }
        let x1 = (0.5 - 2.0 * t).powf(-0.5);
        let x2 = (1.0 - 4.0 * t).powf(-0.25);
        assert!(norm <= x1.hypot(x2) * (1.0 + 1e-12), "t = {t}");
    }
}

#[test]
fn every_solver_is_bit_deterministic() {
    let sq = entry("sq");
    let Problem::Scalar(s) = &sq.problem else {
        unreachable!()
    };
    let coupled = entry("coupled");
    let Problem::Vector(c) = &coupled.problem else {
        unreachable!()
    };
    let slow = entry("slowlog_c");
    let Problem::Vector(l) = &slow.problem else {
        unreachable!()
    };
    let rd = catalog::get("rd", CatalogOptions { c: 0.5, m: 8 }).unwrap();
    let Problem::Vector(r) = &rd.problem else {
        unreachable!()
    };

    let runs: Vec<Box<dyn Fn() -> (f64, u64)>> = vec![
        Box::new(|| {
            let run = solve_1d(s, 2f64.powi(-10), &SolverConfig::new(StepLaw::Adaptive1D)).unwrap();
            (run.tau_hat, run.steps)
        }),
        Box::new(|| {
            let run = solve_1d(
                s,
                2f64.powi(-10),
                &SolverConfig::new(StepLaw::Taylor1D { m_bar: 2 }),
            )
            .unwrap();
            (run.tau_hat, run.steps)
        }),
        Box::new(|| {
            let run = solve_nd(c, 2f64.powi(-8), &SolverConfig::new(StepLaw::AltND)).unwrap();
            (run.tau_hat, run.steps)
        }),
        Box::new(|| {
            let run =
                solve_log_nd(l, 2f64.powi(-4), &SolverConfig::new(StepLaw::AdaptiveND)).unwrap();
            (run.tau_hat, run.steps)
        }),
        Box::new(|| {
            let run = solve_nd(r, 2f64.powi(-10), &SolverConfig::new(StepLaw::RDCapped)).unwrap();
            (run.tau_hat, run.steps)
        }),
        Box::new(|| {
            let run = solve_arclength(s, 2f64.powi(-8), 1e-10).unwrap();
            (run.tau_hat, run.steps)
        }),
        Box::new(|| {
            let run = solve_rescaling_1d(2.0, 0.5, 4.0, 2f64.powi(-8))
                .unwrap()
                .run;
            (run.tau_hat, run.steps)
        }),
    ];
    for (i, f) in runs.iter().enumerate() {
        let (a, b) = (f(), f());
        assert_eq!(a.0.to_bits(), b.0.to_bits(), "solver {i}");
        assert_eq!(a.1, b.1, "solver {i}");
    }
}

#[test]
fn study_is_independent_of_worker_count() {
    let mut spec = StudySpec::new(
        "coupled",
        vec![Method::Adaptive, Method::AltNd, Method::Uniform],
        dyadic_grid(4, 8),
    );
    spec.reference_eps = Some(2f64.powi(-10));
    spec.jobs = 1;
    let serial = run_study(&spec).unwrap();
    spec.jobs = 4;
    let parallel = run_study(&spec).unwrap();
    let strip = |t: &harness::StudyTable| -> Vec<_> {
        t.rows
            .iter()
            .map(|r| {
                (
                    r.method.clone(),
                    r.epsilon.to_bits(),
                    r.tau_hat.map(f64::to_bits),
                    r.steps,
                )
            })
            .collect()
    };
    assert_eq!(strip(&serial), strip(&parallel));
    assert_eq!(serial.fits, parallel.fits);
}

#[test]
fn pseudo_reference_has_zero_self_error() {
    let mut spec = StudySpec::new("coupled", vec![Method::Adaptive], dyadic_grid(6, 10));
    spec.reference_eps = Some(2f64.powi(-10));
    let table = run_study(&spec).unwrap();
    let last = table.rows.last().unwrap();
    assert_eq!(last.error, Some(0.0));
    assert_eq!(last.reference_kind, "pseudo");
    let fit = table.fits["adaptive"].error.unwrap();
    assert!(fit.slope.is_finite());
}

#[test]
fn adaptive_errors_decrease_within_noise_band() {
    for id in ["sq", "uncoupled"] {
        let table = run_study(&StudySpec::new(
            id,
            vec![Method::Adaptive],
            dyadic_grid(6, 14),
        ))
        .unwrap();
        let errors: Vec<f64> = table.rows.iter().map(|r| r.error.unwrap()).collect();
        for w in errors.windows(2) {
            assert!(w[1] <= 3.0 * w[0], "{id}: {errors:?}");
        }
    }
}

#[test]
fn csv_round_trip_and_bytes_are_stable() {
    let table = run_study(&StudySpec::new(
        "sq",
        vec![
            Method::Adaptive,
            Method::Taylor2,
            Method::Rescaling { threshold: 4.0 },
        ],
        dyadic_grid(4, 8),
    ))
    .unwrap();
    let dir = tempdir();
    let path = dir.join("table.csv");
    harness::emit_csv(&table, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), csv_bytes(&table).unwrap());
    assert_eq!(
        csv_bytes(&table).unwrap(),
        csv_bytes(&table.clone()).unwrap()
    );
    let back = read_csv(&path).unwrap();
    assert_eq!(back.len(), table.rows.len());
    for (a, b) in back.iter().zip(&table.rows) {
        assert_eq!(a.epsilon.to_bits(), b.epsilon.to_bits());
        assert_eq!(a.tau_hat.map(f64::to_bits), b.tau_hat.map(f64::to_bits));
        assert_eq!(a.error.map(f64::to_bits), b.error.map(f64::to_bits));
        assert_eq!(
            a.reference_value.map(f64::to_bits),
            b.reference_value.map(f64::to_bits)
        );
        assert_eq!(
            (a.steps, a.wall_ns, &a.method),
            (b.steps, b.wall_ns, &b.method)
        );
    }
    let svg_path = dir.join("empty.svg");
    assert!(harness::emit_svg(&Default::default(), &svg_path, harness::Axis::CostVsEps).is_err());
    assert!(!svg_path.exists());
    std::fs::remove_dir_all(dir).unwrap();
}

fn tempdir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("blowup-invariants-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn scalar_derivatives_match_finite_differences() {
    for id in ["sq", "expsq", "xlog_c"] {
        let e = entry(id);
        let Problem::Scalar(p) = &e.problem else {
            unreachable!()
        };
        for i in 0..20 {
            let x = p.x0 * (1.0 + 0.1 * f64::from(i));
            let h = 1e-6 * x;
            let fd = ((p.rhs)(x + h) - (p.rhs)(x - h)) / (2.0 * h);
            let d = (p.rhs_deriv)(x);
            assert!((fd - d).abs() <= 1e-6 * d.abs(), "{id} at {x}: {d} vs {fd}");
        }
    }
}

#[test]
fn vector_jacobians_match_finite_differences() {
    for id in ["uncoupled", "coupled", "slowlog_c"] {
        let e = entry(id);
        let Problem::Vector(p) = &e.problem else {
            unreachable!()
        };
        let x: Vec<f64> = p.x0.iter().map(|c| c * 1.3).collect();
        for j in 0..p.dim {
            let h = 1e-6 * x[j].abs().max(1.0);
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += h;
            xm[j] -= h;
            let (bp, bm) = (p.eval(&xp), p.eval(&xm));
            let mut unit = vec![0.0; p.dim];
            unit[j] = 1.0;
            let mut col = vec![0.0; p.dim];
            match &p.jacobian {
                JacobianAccess::Dense(f) => {
                    let mut m = linalg::Matrix::zeros(p.dim);
                    f(&x, &mut m);
                    m.mul_vec(&unit, &mut col);
                }
                JacobianAccess::MatrixFree { jvp, .. } => jvp(&x, &unit, &mut col),
            }
            for i in 0..p.dim {
                let fd = (bp[i] - bm[i]) / (2.0 * h);
                assert!(
                    (fd - col[i]).abs() <= 1e-6 * col[i].abs().max(1.0),
                    "{id} d{i}/dx{j}"
                );
            }
        }
    }
}

fn rd_jvp(m: usize) -> (catalog::CatalogEntry, blowup::linalg::JvpFn) {
    let e = catalog::get("rd", CatalogOptions { c: 0.5, m }).unwrap();
    let Problem::Vector(p) = &e.problem else {
        unreachable!()
    };
    let JacobianAccess::MatrixFree { jvp, .. } = &p.jacobian else {
        panic!("rd should be matrix-free")
    };
    let jvp = jvp.clone();
    (e, jvp)
}

#[test]
fn reaction_diffusion_jvp_matches_dense_assembly() {
    let mut rng = linalg::Lcg::new(7);
    for m in [4, 8, 16] {
        let (_, jvp) = rd_jvp(m);
        let dim = m - 1;
        for _ in 0..20 {
            let x: Vec<f64> = (0..dim).map(|_| 100.0 * rng.next_signed_unit()).collect();
            let v: Vec<f64> = (0..dim).map(|_| rng.next_signed_unit()).collect();
            let mut free = vec![0.0; dim];
            jvp(&x, &v, &mut free);
            let mut dense = vec![0.0; dim];
            reaction_diffusion_dense_jacobian(m, &x).mul_vec(&v, &mut dense);
            let scale = dense.iter().fold(1.0f64, |s, d| s.max(d.abs()));
            for (a, b) in free.iter().zip(&dense) {
                assert!((a - b).abs() <= 1e-12 * scale);
            }
        }
    }
}

#[test]
fn reaction_diffusion_jvp_on_constant_profile() {
    let m = 16;
    let (_, jvp) = rd_jvp(m);
    let c = 3.0;
    let x = vec![c; m - 1];
    let ones = vec![1.0; m - 1];
    let mut out = vec![0.0; m - 1];
    jvp(&x, &ones, &mut out);
    let m2 = (m * m) as f64;
    assert_eq!(out[0], -m2 + 2.0 * c);
    assert_eq!(out[m - 2], -m2 + 2.0 * c);
    assert!(out[1..m - 2].iter().all(|&o| o == 2.0 * c));
}

#[test]
fn alternative_step_at_reaction_diffusion_start_matches_dense() {
    for m in [8, 32] {
        let (e, _) = rd_jvp(m);
        let Problem::Vector(p) = &e.problem else {
            unreachable!()
        };
        let b = p.eval(&p.x0);
        let b_norm = linalg::l2(&b);
        let free = linalg::jvp_norm(&p.jacobian, &p.x0, &b).unwrap();
        let mut jb = vec![0.0; p.dim];
        reaction_diffusion_dense_jacobian(m, &p.x0).mul_vec(&b, &mut jb);
        let dense = linalg::l2(&jb);
        let eps = 2f64.powi(-20);
        let h_free = h_alt_nd(eps, b_norm, free).unwrap();
        let h_dense = eps * (b_norm / dense).sqrt();
        assert!((h_free - h_dense).abs() <= 1e-12 * h_dense);
    }
}

#[test]
fn sq_hitting_time_is_two_minus_eps() {
    let e = entry("sq");
    let Problem::Scalar(p) = &e.problem else {
        unreachable!()
    };
    for k in (6..=20).step_by(2) {
        let eps = 2f64.powi(-k);
        let run = solve_1d(p, eps, &SolverConfig::new(StepLaw::Adaptive1D)).unwrap();
        assert!((run.radius_used.value * eps - 1.0).abs() < 1e-12);
        // τ − τ_r = ∫_r^∞ dx/x² = 1/r = ε.
        let tau_r = 2.0 - 1.0 / run.radius_used.value;
        assert!((tau_r - (2.0 - eps)).abs() < 1e-12);
        assert!((run.tau_hat - tau_r).abs() <= 50.0 * eps);
    }
}
