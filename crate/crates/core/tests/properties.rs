use std::collections::BTreeMap;

use proptest::prelude::*;
use proptest::sample::select;

use skewwarp::ambient::AmbientModel;
use skewwarp::cli::ScenarioConfig;
use skewwarp::exprdsl::Expr;
use skewwarp::skewcr::{classify, classify_normal, tf_decompose};
use skewwarp::warped::{special_case_rhs, RhsCase};
use skewwarp::Tolerances;

const XY: [&str; 2] = ["x", "y"];

fn leaf() -> impl Strategy<Value = String> {
    prop_oneof![
        (1u32..40).prop_map(|n| format!("{}", f64::from(n) / 8.0)),
        Just("x".to_string()),
        Just("y".to_string()),
        Just("pi".to_string()),
        Just("k".to_string()),
    ]
}

/// Random expressions that stay finite on [-1, 1]^2.
fn expr() -> impl Strategy<Value = String> {
    leaf().prop_recursive(4, 32, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), select(vec!["+", "-", "*"]))
                .prop_map(|(a, b, op)| format!("({a}){op}({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a})/(2+({b})^2)")),
            (inner.clone(), 1u32..4).prop_map(|(a, k)| format!("({a})^{k}")),
            (inner.clone(), select(vec!["sin", "cos", "neg"]))
                .prop_map(|(a, f)| format!("{f}({a})")),
            (inner.clone(), select(vec!["exp", "sinh", "cosh", "tan"]))
                .prop_map(|(a, f)| format!("{f}(sin({a})/2)")),
            inner.clone().prop_map(|a| format!("log(1+({a})^2)")),
            inner.clone().prop_map(|a| format!("sqrt(2+cos({a}))")),
            inner.clone().prop_map(|a| format!("-({a})")),
            (leaf(), 2u32..4).prop_map(|(a, k)| format!("-{a}^{k}")),
            (leaf(), leaf()).prop_map(|(a, b)| format!("2^(1.5+cos({a}))^sin({b})")),
        ]
    })
}

fn constants() -> BTreeMap<String, f64> {
    BTreeMap::from([("k".to_string(), 1.5)])
}

fn close(a: f64, b: f64, scale: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + scale)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn printing_round_trips(src in expr()) {
        let e = Expr::parse(&src, &XY, &constants()).unwrap();
        let printed = e.to_string();
        let again = Expr::parse(&printed, &XY, &constants()).unwrap();
        prop_assert_eq!(&e, &again, "printed as {}", printed);
        prop_assert_eq!(printed, again.to_string());
    }

    #[test]
    fn evaluation_is_pure(src in expr(), x in -1.0..1.0f64, y in -1.0..1.0f64) {
        let e = Expr::parse(&src, &XY, &constants()).unwrap();
        let (Ok(a), Ok(b)) = (e.hessian(&[x, y]), e.hessian(&[x, y])) else { return Ok(()) };
        prop_assert_eq!(a, b);
        prop_assert_eq!(e.eval(&[x, y]).unwrap().to_bits(), e.eval(&[x, y]).unwrap().to_bits());
    }

    #[test]
    fn dual_gradient_matches_central_differences(src in expr(), x in -1.0..1.0f64, y in -1.0..1.0f64) {
        let e = Expr::parse(&src, &XY, &constants()).unwrap();
        let p = [x, y];
        let Ok((f, g)) = e.value_and_gradient(&p) else { return Ok(()) };
        prop_assume!(f.is_finite() && f.abs() < 1e6);
        let h = 1e-5;
        for i in 0..2 {
            let (mut a, mut b) = (p, p);
            a[i] += h;
            b[i] -= h;
            let (Ok(fa), Ok(fb)) = (e.eval(&a), e.eval(&b)) else { return Ok(()) };
            let fd = (fa - fb) / (2.0 * h);
            prop_assert!(close(g[i], fd, g[i].abs() + f.abs(), 1e-6), "{src}: d{i} dual {} fd {}", g[i], fd);
        }
    }

    #[test]
    fn dual_hessian_is_symmetric_and_matches_gradient_differences(
        src in expr(), x in -1.0..1.0f64, y in -1.0..1.0f64,
    ) {
        let e = Expr::parse(&src, &XY, &constants()).unwrap();
        let p = [x, y];
        let Ok(hess) = e.hessian(&p) else { return Ok(()) };
        let g0 = e.gradient(&p).unwrap();
        prop_assume!(g0.iter().all(|v| v.is_finite() && v.abs() < 1e6));
        prop_assert_eq!(hess[0][1].to_bits(), hess[1][0].to_bits());
        let h = 1e-5;
        for j in 0..2 {
            let (mut a, mut b) = (p, p);
            a[j] += h;
            b[j] -= h;
            let (Ok(ga), Ok(gb)) = (e.gradient(&a), e.gradient(&b)) else { return Ok(()) };
            for i in 0..2 {
                let fd = (ga[i] - gb[i]) / (2.0 * h);
                let scale = hess[i][j].abs() + g0[i].abs();
                prop_assert!(close(hess[i][j], fd, scale, 1e-6), "{src}: H{i}{j} dual {} fd {}", hess[i][j], fd);
            }
        }
    }

    #[test]
    fn rhs_is_monotone_in_both_gradients(
        m2 in 1usize..5,
        gt in 0.0..10.0f64, dgt in 0.0..10.0f64,
        gth in 0.0..10.0f64, dgth in 0.0..10.0f64,
        theta in 0.01..=std::f64::consts::FRAC_PI_2,
        case in select(vec![RhsCase::ContactCr, RhsCase::PseudoSlant, RhsCase::GeneralI, RhsCase::GeneralII, RhsCase::ProofVariantI]),
    ) {
        let lo = special_case_rhs(m2, gt, gth, theta, case).unwrap();
        let hi_t = special_case_rhs(m2, gt + dgt, gth, theta, case).unwrap();
        let hi_theta = special_case_rhs(m2, gt, gth + dgth, theta, case).unwrap();
        prop_assert!(lo >= 0.0);
        prop_assert!(hi_t >= lo);
        prop_assert!(hi_theta >= lo);
    }

    #[test]
    fn frame_order_does_not_change_sigma_norm_or_classification(
        perm in Just((0..7).collect::<Vec<usize>>()).prop_shuffle(),
        u in 0.5..1.5f64, v in 0.5..1.5f64, w in -1.0..1.0f64, r in -1.0..1.0f64,
        k in select(vec!["0.5", "1", "2"]),
    ) {
        let mut cfg = ScenarioConfig::builtin("ex62").unwrap();
        cfg.set_constant("k", k).unwrap();
        let s = cfg.build().unwrap();
        let tol = Tolerances::default();
        let p = [u, v, w, r, 0.3, -0.2, 0.1];
        let a = s.immersion.sample(&p, None, &tol).unwrap();
        let b = s.immersion.sample(&p, Some(&perm), &tol).unwrap();
        let (na, nb) = (a.sff_norm2().0, b.sff_norm2().0);
        prop_assert!((na - nb).abs() <= 1e-10 * (1.0 + na));
        let (ta, tb) = (tf_decompose(&a, &tol), tf_decompose(&b, &tol));
        let (sa, sb) = (classify(&ta, &tol).unwrap(), classify(&tb, &tol).unwrap());
        prop_assert_eq!(sa.invariant_dim(), sb.invariant_dim());
        prop_assert_eq!(sa.anti_invariant_dim(), sb.anti_invariant_dim());
        prop_assert_eq!(sa.slant_dims(), sb.slant_dims());
        prop_assert_eq!(sa.label, sb.label);
        for (x, y) in sa.slant_angles().iter().zip(sb.slant_angles()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        let (qa, qb) = (
            classify_normal(&a, &ta, &sa, &tol).unwrap().dims(),
            classify_normal(&b, &tb, &sb, &tol).unwrap().dims(),
        );
        prop_assert_eq!(qa, qb);
    }

    #[test]
    fn q_spectrum_lies_in_unit_interval(
        k in -3.0..3.0f64,
        p in proptest::collection::vec(-1.0..1.0f64, 6),
    ) {
        let mut cfg = ScenarioConfig::builtin("ex31").unwrap();
        cfg.constants.insert("k".into(), k);
        let s = cfg.build().unwrap();
        let tol = Tolerances::default();
        let sample = s.immersion.sample(&p, None, &tol).unwrap();
        let split = classify(&tf_decompose(&sample, &tol), &tol).unwrap();
        for mu in &split.eigenvalues {
            prop_assert!((-1.0 - 1e-9..=1e-9).contains(mu), "eigenvalue {mu}");
        }
        let want = (k.abs() / (2.0 * (1.0 + k * k)).sqrt()).acos();
        for a in split.slant_angles() {
            prop_assert!((a - want).abs() < 1e-8, "angle {a} vs {want}");
        }
    }

    #[test]
    fn sasakian_model_satisfies_its_identities_anywhere(
        p in proptest::collection::vec(-3.0..3.0f64, 5),
        seed in any::<u64>(),
    ) {
        let r = AmbientModel::sasakian(2).check_structure(&[p], seed, 4).unwrap();
        prop_assert!(r.is_sasakian(1e-7), "{r:?}");
        prop_assert!(r.contact_metric < 1e-7 && r.normality < 1e-7 && r.xi_derivative < 1e-7);
    }
}

#[test]
fn builtin_configs_survive_serialization() {
    for name in skewwarp::cli::builtin_names() {
        let cfg = ScenarioConfig::builtin(name).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ScenarioConfig::from_json_str(&text).unwrap(), cfg, "{name}");
    }
}
