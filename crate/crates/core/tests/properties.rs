use blowup::catalog::{self, CatalogOptions};
use blowup::expr;
use blowup::linalg::{self, JacobianAccess, Matrix};
use blowup::problem::Problem;
use blowup::stepping::h_alt_nd;
use proptest::prelude::*;

/// Expression source over `x` whose value and derivative stay finite on
/// `[0.5, 2]`.
fn expression() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x".to_string()),
        (1u32..40).prop_map(|n| format!("{}", f64::from(n) / 8.0)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} * {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} / (2 + ({b})^2))")),
            (inner.clone(), 2u32..4).prop_map(|(a, k)| format!("({a})^{k}")),
            inner.clone().prop_map(|a| format!("-({a})")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("cos({a})")),
            inner.clone().prop_map(|a| format!("exp(sin({a}))")),
            inner.clone().prop_map(|a| format!("log(1 + ({a})^2)")),
            inner.clone().prop_map(|a| format!("sqrt(1 + ({a})^2)")),
            inner.prop_map(|a| format!("x^(sin({a}))")),
        ]
    })
}

fn central_difference(f: &expr::Expr, x: f64) -> Option<f64> {
    let h = 1e-5 * x.abs().max(1.0);
    // Richardson extrapolation of two central differences: O(h⁴) truncation.
    let d = |h: f64| Some((f.eval(x + h).ok()? - f.eval(x - h).ok()?) / (2.0 * h));
    let (d1, d2) = (d(h)?, d(h / 2.0)?);
    Some((4.0 * d2 - d1) / 3.0)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn derivative_matches_finite_differences(src in expression()) {
        let e = expr::parse(&src).unwrap();
        let d = e.differentiate();
        for i in 0..20 {
            let x = 0.5 + 1.5 * f64::from(i) / 19.0;
            let (Ok(v), Ok(exact), Some(fd)) = (e.eval(x), d.eval(x), central_difference(&e, x)) else {
                continue;
            };
            // Keep the finite-difference rounding error below the tolerance.
            if v.abs() > 1e3 || !exact.is_finite() {
                continue;
            }
            prop_assert!(
                (exact - fd).abs() <= 1e-5 * exact.abs().max(1.0),
                "{src} at {x}: symbolic {exact}, finite difference {fd}"
            );
        }
    }

    #[test]
    fn pretty_print_parses_back(src in expression()) {
        let e = expr::parse(&src).unwrap();
        let printed = e.pretty("x");
        let again = expr::parse(&printed).unwrap();
        for i in 0..5 {
            let x = 0.5 + 0.37 * f64::from(i);
            match (e.eval(x), again.eval(x)) {
                (Ok(a), Ok(b)) => prop_assert!(a == b || (a.is_nan() && b.is_nan()), "{src} -> {printed}"),
                (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
            }
        }
    }

    #[test]
    fn jvp_is_linear(
        seed in any::<u64>(),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        which in 0usize..3,
    ) {
        let id = ["uncoupled", "coupled", "rd"][which];
        let entry = catalog::get(id, CatalogOptions { c: 0.5, m: 8 }).unwrap();
        let Problem::Vector(p) = &entry.problem else { unreachable!() };
        let mut rng = linalg::Lcg::new(seed);
        let mut random = || (0..p.dim).map(|_| 3.0 * rng.next_signed_unit()).collect::<Vec<f64>>();
        let (x, u, v) = (random(), random(), random());
        let apply = |w: &[f64]| {
            let mut out = vec![0.0; p.dim];
            match &p.jacobian {
                JacobianAccess::Dense(f) => {
                    let mut m = Matrix::zeros(p.dim);
                    f(&x, &mut m);
                    m.mul_vec(w, &mut out);
                }
                JacobianAccess::MatrixFree { jvp, .. } => jvp(&x, w, &mut out),
            }
            out
        };
        let combo: Vec<f64> = u.iter().zip(&v).map(|(ui, vi)| a * ui + b * vi).collect();
        let (ju, jv, jc) = (apply(&u), apply(&v), apply(&combo));
        let scale = ju.iter().chain(&jv).fold(1.0f64, |s, y| s.max(y.abs()));
        for i in 0..p.dim {
            prop_assert!((jc[i] - (a * ju[i] + b * jv[i])).abs() <= 1e-12 * scale * (a.abs() + b.abs() + 1.0));
        }
    }

    #[test]
    fn coupled_norm_is_three_times_squared_radius(x1 in -5.0f64..5.0, x2 in -5.0f64..5.0) {
        prop_assume!(x1.hypot(x2) > 1e-3);
        let entry = catalog::get("coupled", CatalogOptions::default()).unwrap();
        let Problem::Vector(p) = &entry.problem else { unreachable!() };
        let norm = linalg::spectral_norm(&p.jacobian, &[x1, x2], 2, 1).unwrap();
        let expected = 3.0 * (x1 * x1 + x2 * x2);
        prop_assert!((norm - expected).abs() <= 1e-10 * expected);
    }

    #[test]
    fn alternative_step_on_radial_field(x1 in -5.0f64..5.0, x2 in -5.0f64..5.0, k in 1u32..20) {
        // b = |x|²x is radial, so b′(x)b = 3|x|²b and h = ε/(√3|x|).
        prop_assume!(x1.hypot(x2) > 1e-2);
        let eps = 2f64.powi(-(k as i32));
        let entry = catalog::get("coupled", CatalogOptions::default()).unwrap();
        let Problem::Vector(p) = &entry.problem else { unreachable!() };
        let x = [x1, x2];
        let b = p.eval(&x);
        let b_norm = b[0].hypot(b[1]);
        let jvp = linalg::jvp_norm(&p.jacobian, &x, &b).unwrap();
        let h = h_alt_nd(eps, b_norm, jvp).unwrap();
        let expected = eps / (3f64.sqrt() * x1.hypot(x2));
        prop_assert!((h - expected).abs() <= 1e-12 * expected);
    }
}

/// Orthogonal matrix from two Householder reflections.
fn random_orthogonal(n: usize, rng: &mut linalg::Lcg) -> Matrix {
    let mut q = Matrix::zeros(n);
    for i in 0..n {
        q[(i, i)] = 1.0;
    }
    for _ in 0..2 {
        let w: Vec<f64> = (0..n).map(|_| rng.next_signed_unit()).collect();
        let w2: f64 = w.iter().map(|c| c * c).sum();
        let mut next = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for l in 0..n {
                    let h = f64::from(u8::from(l == j)) - 2.0 * w[l] * w[j] / w2;
                    s += q[(i, l)] * h;
                }
                next[(i, j)] = s;
            }
        }
        q = next;
    }
    q
}

#[test]
fn power_iteration_matches_constructed_spectrum() {
    let mut rng = linalg::Lcg::new(2024);
    for case in 0..100 {
        let n = 2 + case % 9;
        let q = random_orthogonal(n, &mut rng);
        let top = 1.0 + 10.0 * (rng.next_signed_unit() + 1.0);
        let sign = if case % 2 == 0 { 1.0 } else { -1.0 };
        let mut eig = vec![sign * top];
        for _ in 1..n {
            eig.push(0.6 * top * rng.next_signed_unit());
        }
        let mut a = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = (0..n).map(|l| q[(i, l)] * eig[l] * q[(j, l)]).sum();
            }
        }
        let via_power = linalg::spectral_norm_power(&a, case as u64 + 1);
        assert!(
            (via_power - top).abs() <= 1e-8 * top,
            "case {case}: power {via_power}, exact {top}"
        );
        if n <= 3 {
            let mut closed = linalg::symmetric_eigenvalues_small(&a).unwrap();
            closed.sort_by(f64::total_cmp);
            let mut expected = eig.clone();
            expected.sort_by(f64::total_cmp);
            for (c, e) in closed.iter().zip(&expected) {
                assert!((c - e).abs() <= 1e-8 * top);
            }
        }
    }
}
