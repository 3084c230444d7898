//! End-to-end acceptance criteria, one line of output per criterion.
//!
//! Golden values are recomputed here from closed forms rather than read back
//! from the scenario files.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::process::Command;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skewwarp::ambient::AmbientModel;
use skewwarp::cli::run::sample_points;
use skewwarp::cli::{run_scenario, Scenario, ScenarioConfig, Stage, VerificationReport};
use skewwarp::exprdsl::Expr;
use skewwarp::skewcr::{
    classify, classify_normal, tf_decompose, DistributionSplit, NormalSplit, TFPair,
};
use skewwarp::warped::{
    check_bishop, grad_ln_f, special_case_rhs, RhsCase, WarpGauge, WarpVerdict,
};
use skewwarp::Tolerances;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenario(name: &str, constants: &[(&str, &str)], samples: usize) -> Scenario {
    let mut cfg = ScenarioConfig::builtin(name).unwrap();
    for (k, v) in constants {
        cfg.set_constant(k, v).unwrap();
    }
    cfg.sampling.count = samples;
    cfg.build().unwrap()
}

fn run(s: &Scenario, stage: Stage) -> Result<VerificationReport, String> {
    let r = run_scenario(s, stage).map_err(|e| e.to_string())?;
    let fails: Vec<String> = r
        .failures()
        .map(|c| format!("{}={:e}", c.name, c.value))
        .collect();
    ensure(fails.is_empty(), || {
        format!("{}: asserted checks failed: {}", s.name, fails.join(", "))
    })?;
    Ok(r)
}

struct Classified {
    tf: TFPair,
    split: DistributionSplit,
    normal: NormalSplit,
}

fn classify_samples(s: &Scenario) -> Result<Vec<(Vec<f64>, Classified)>, String> {
    let tol = &s.tolerances;
    sample_points(s)
        .into_iter()
        .map(|p| {
            let g = s
                .immersion
                .sample(&p, None, tol)
                .map_err(|e| e.to_string())?;
            let tf = tf_decompose(&g, tol);
            let split = classify(&tf, tol).map_err(|e| e.to_string())?;
            let normal = classify_normal(&g, &tf, &split, tol).map_err(|e| e.to_string())?;
            Ok((p, Classified { tf, split, normal }))
        })
        .collect()
}

/// Checks dimensions `(D, D^⊥, D^θ)`, tangency of `ξ`, normal dimensions and
/// the slant angle on every sample; returns the largest angle error.
fn check_split(
    s: &Scenario,
    dims: [usize; 3],
    normal: (usize, usize, usize),
    angle: f64,
) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for (p, c) in classify_samples(s)? {
        let got = [
            c.split.invariant_dim(),
            c.split.anti_invariant_dim(),
            c.split.slant_dims().iter().sum(),
        ];
        ensure(got == dims, || format!("dims {got:?} at {p:?}"))?;
        ensure(c.tf.xi_tangent, || format!("xi not tangent at {p:?}"))?;
        ensure(c.normal.dims() == normal, || {
            format!("normal dims {:?} at {p:?}", c.normal.dims())
        })?;
        let angles = c.split.slant_angles();
        ensure(angles.len() == 1, || {
            format!("{} slant blocks at {p:?}", angles.len())
        })?;
        worst = worst.max((angles[0] - angle).abs());
    }
    ensure(worst < 1e-8, || format!("slant angle off by {worst:e}"))?;
    Ok(worst)
}

fn seeded_points(dim: usize, count: usize, seed: u64, half_width: f64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..dim)
                .map(|_| rng.gen_range(-half_width..half_width))
                .collect()
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let mut worst_flat: f64 = 0.0;
    let mut least_detection = f64::INFINITY;
    for m in [4, 5, 6] {
        let model = AmbientModel::flat(m);
        let r = model
            .check_structure(&seeded_points(model.dim(), 100, 42, 2.0), 42, 10)
            .map_err(|e| e.to_string())?;
        worst_flat = worst_flat.max(r.almost_contact).max(r.compatibility);
        least_detection = least_detection.min(r.sasakian);
    }
    ensure(worst_flat < 1e-12, || {
        format!("flat almost contact metric residual {worst_flat:e}")
    })?;
    ensure(least_detection >= 0.9, || {
        format!("flat Sasakian residual only {least_detection}")
    })?;
    let model = AmbientModel::sasakian(2);
    let r = model
        .check_structure(&seeded_points(model.dim(), 50, 42, 2.0), 42, 10)
        .map_err(|e| e.to_string())?;
    let worst = [
        r.almost_contact,
        r.compatibility,
        r.sasakian,
        r.contact_metric,
        r.normality,
        r.xi_derivative,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    ensure(worst < 1e-7, || format!("Sasakian model residuals {r:?}"))?;
    Ok(format!(
        "flat residual {worst_flat:.1e}, flat Sasakian defect >= {least_detection:.3}, Sasakian model residual {worst:.1e}"
    ))
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for (ks, k) in [("0.5", 0.5f64), ("1", 1.0), ("2", 2.0)] {
        let s = scenario("ex31", &[("k", ks)], 100);
        let want = (k / (2.0 * (1.0 + k * k)).sqrt()).acos();
        worst = worst.max(check_split(&s, [2, 1, 2], (1, 2, 2), want)?);
        run(&s, Stage::Classify)?;
    }
    Ok(format!(
        "k in {{0.5, 1, 2}}: dims (2,1,2)+xi, normal (1,2,2), angle error {worst:.1e}"
    ))
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    for deg in ["15", "30", "75"] {
        let s = scenario("ex32", &[("theta", &format!("{deg}*pi/180"))], 100);
        worst = worst.max(check_split(&s, [2, 1, 2], (1, 2, 0), FRAC_PI_4)?);
        run(&s, Stage::Classify)?;
    }
    Ok(format!(
        "theta in {{15, 30, 75}} deg: angle 45 deg within {worst:.1e}"
    ))
}

fn criterion_4() -> Outcome {
    let s = scenario("ex61", &[], 100);
    let angle_err = check_split(&s, [2, 1, 2], (1, 2, 0), FRAC_PI_4)?;
    let r = run(&s, Stage::Verify)?;
    let w = r.section("warped").ok_or("no warped section")?;
    let num = |k: &str| w[k].as_f64().ok_or_else(|| format!("missing warped.{k}"));
    let block = num("off_factor")?.max(num("base_fiber_dependence")?);
    let spread = num("f_spread")?;
    ensure(block < 1e-10, || format!("block residual {block:e}"))?;
    ensure(spread < 1e-10, || format!("f spread {spread:e}"))?;
    ensure(w["verdict"] == "Riemannian product", || {
        format!("verdict {}", w["verdict"])
    })?;
    Ok(format!("block residual {block:.1e}, f spread {spread:.1e}, Riemannian product, angle error {angle_err:.1e}"))
}

fn criterion_5() -> Outcome {
    let mut notes = Vec::new();
    for (ks, k) in [("0.5", 0.5f64), ("1", 1.0), ("2", 2.0)] {
        let s = scenario("ex62", &[("k", ks)], 50);
        let tol = Tolerances::default();
        let decl = s.product.as_ref().ok_or("no product declaration")?;
        let gauge = WarpGauge::new(&s.immersion, decl).map_err(|e| e.to_string())?;
        let (mut metric, mut recovery, mut bishop, mut xi): (f64, f64, f64, f64) =
            (0.0, 0.0, 0.0, 0.0);
        for p in sample_points(&s) {
            let (u, v) = (p[0], p[1]);
            let w2 = 2.0 * (u * u + v * v);
            let a = 2.0 * (1.0 + k * k);
            let want = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                a, a, w2, w2, 2.0, 2.0, 1.0,
            ]));
            let g = s
                .immersion
                .sample(&p, None, &tol)
                .map_err(|e| e.to_string())?;
            metric = metric.max((&g.induced_metric - want).amax());
            let f = gauge
                .at(&s.immersion, decl, &g, &tol)
                .map_err(|e| e.to_string())?
                .f;
            recovery = recovery.max((f - w2.sqrt()).abs() / w2.sqrt());
            let grad = grad_ln_f(decl, &g, &tol).map_err(|e| e.to_string())?;
            bishop = bishop.max(check_bishop(decl, &g, &grad).residual);
            xi = xi.max(grad.xi_ln_f.ok_or("xi not tangent")?.abs());
        }
        ensure(metric < 1e-8, || {
            format!("k={k}: induced metric error {metric:e}")
        })?;
        ensure(recovery < 1e-6, || {
            format!("k={k}: f recovery error {recovery:e}")
        })?;
        ensure(bishop < 1e-6, || {
            format!("k={k}: Bishop residual {bishop:e}")
        })?;
        ensure(xi < 1e-12, || format!("k={k}: xi(ln f) = {xi:e}"))?;
        check_split(&s, [2, 2, 2], (2, 2, 2), (k * k / (1.0 + k * k)).acos())?;

        let r = run(&s, Stage::Verify)?;
        ensure(
            r.section("warped").map(|w| w["verdict"].clone())
                == Some(WarpVerdict::Warped.as_str().into()),
            || format!("k={k}: not recognised as warped"),
        )?;
        let paths = r
            .check("sigma.norm_paths")
            .ok_or("no sigma.norm_paths check")?
            .value;
        ensure(paths <= 1e-8, || {
            format!("k={k}: norm paths differ by {paths:e}")
        })?;
        let t = r.section("theorem41").ok_or("no theorem41 section")?;
        ensure(t["hypothesis_flags"]["sasakian_ambient"] == false, || {
            "ambient flagged Sasakian".into()
        })?;
        let margin = r.check("theorem.margin").ok_or("no margin check")?;
        ensure(!margin.asserted, || {
            "margin asserted on a non-Sasakian ambient".into()
        })?;
        let lhs_gap = (t["lhs"].as_f64().unwrap_or(f64::NAN)
            - t["lhs_components"].as_f64().unwrap_or(f64::NAN))
        .abs();
        ensure(lhs_gap <= 1e-8, || {
            format!("k={k}: report lhs paths differ by {lhs_gap:e}")
        })?;
        if k == 1.0 {
            let rhs = t["rhs_statement_i"].as_f64().ok_or("no rhs_statement_i")?;
            ensure((rhs - (4.0 + 1.0 / 12.0)).abs() < 1e-9, || {
                format!("rhs_statement_i = {rhs}")
            })?;
            notes.push(format!("rhs_i(k=1) = {rhs}"));
        }
        notes.push(format!(
            "k={k}: metric {metric:.0e}, f {recovery:.0e}, Bishop {bishop:.0e}"
        ));
    }
    Ok(notes.join("; "))
}

fn criterion_6() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut slant_blocks = 0;
    for name in skewwarp::cli::builtin_names() {
        let s = scenario(name, &[], 100);
        let r = run(&s, Stage::Classify)?;
        for c in ["slant.t_squared", "slant.tt", "slant.ff"] {
            let v = r.check(c).ok_or_else(|| format!("{name}: no {c}"))?.value;
            ensure(v < 1e-8, || format!("{name}: {c} = {v:e}"))?;
            worst = worst.max(v);
        }
        slant_blocks += classify_samples(&s)?
            .iter()
            .map(|(_, c)| c.split.slant_dims().len())
            .sum::<usize>();
    }
    ensure(slant_blocks > 0, || "no slant blocks exercised".into())?;
    Ok(format!(
        "{slant_blocks} slant blocks over 9 scenarios, worst residual {worst:.1e}"
    ))
}

fn criterion_7() -> Outcome {
    let (mut frame, mut sym, mut tan): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for name in skewwarp::cli::builtin_names() {
        let r = run(&scenario(name, &[], 100), Stage::Classify)?;
        let v = |c: &str| {
            r.check(c)
                .map(|c| c.value)
                .ok_or_else(|| format!("{name}: no {c}"))
        };
        frame = frame.max(v("frame.orthonormality")?);
        sym = sym.max(v("sigma.symmetry")?);
        tan = tan.max(v("sigma.tangential_part")?);
    }
    ensure(frame <= 1e-10, || format!("frame defect {frame:e}"))?;
    ensure(sym <= 1e-9 && tan <= 1e-9, || {
        format!("sigma asymmetry {sym:e}, tangential part {tan:e}")
    })?;

    let tol = Tolerances::default();
    let circle = scenario("unit-circle", &[], 100);
    let (mut s_err, mut h_err): (f64, f64) = (0.0, 0.0);
    for p in sample_points(&circle) {
        let g = circle
            .immersion
            .sample(&p, None, &tol)
            .map_err(|e| e.to_string())?;
        s_err = s_err.max((g.sff_norm2().0 - 1.0).abs());
        h_err = h_err.max((g.norm(&g.mean_curvature()) - 1.0).abs());
    }
    ensure(s_err <= 1e-10 && h_err <= 1e-10, || {
        format!("circle: |sigma|^2 off by {s_err:e}, |H| off by {h_err:e}")
    })?;
    let plane = scenario("tg-plane", &[], 100);
    let mut flat: f64 = 0.0;
    for p in sample_points(&plane) {
        flat = flat.max(
            plane
                .immersion
                .sample(&p, None, &tol)
                .map_err(|e| e.to_string())?
                .sff_norm2()
                .0,
        );
    }
    ensure(flat < 1e-12, || format!("plane: |sigma|^2 = {flat:e}"))?;
    Ok(format!(
        "frame {frame:.1e}, sigma {:.1e}, circle {:.1e}, plane {flat:.1e}",
        sym.max(tan),
        s_err.max(h_err)
    ))
}

fn criterion_8() -> Outcome {
    let r = run(
        &scenario("sasakian5-invariant-submanifold", &[], 100),
        Stage::Verify,
    )?;
    let c = r
        .check("sigma.xi_plus_normal_phi")
        .ok_or("no sigma_xi check")?;
    ensure(c.asserted, || {
        "sigma_xi not asserted on a Sasakian ambient".into()
    })?;
    ensure(c.value < 1e-7, || format!("residual {:e}", c.value))?;
    Ok(format!(
        "max |sigma(X, xi) + normal part of phi X| = {:.1e}",
        c.value
    ))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    for _ in 0..200 {
        let m2 = rng.gen_range(1..6);
        let gt2 = rng.gen_range(0.0..5.0);
        let gth2 = rng.gen_range(0.0..5.0);
        let theta = rng.gen_range(0.05..FRAC_PI_2);
        let rhs = |a, b, case| special_case_rhs(m2, a, b, theta, case).map_err(|e| e.to_string());
        let contact = rhs(gt2, 0.0, RhsCase::ContactCr)?;
        for case in [RhsCase::GeneralI, RhsCase::ProofVariantI] {
            let general = rhs(gt2, 0.0, case)?;
            ensure(
                (general - contact).abs() <= 1e-15 * contact.abs().max(1.0),
                || format!("{case:?} at gtheta2 = 0: {general} vs contact CR {contact}"),
            )?;
        }
        let pseudo = rhs(0.0, gth2, RhsCase::PseudoSlant)?;
        let general = rhs(0.0, gth2, RhsCase::GeneralII)?;
        ensure(
            (general - pseudo).abs() <= 1e-15 * pseudo.abs().max(1.0),
            || format!("statement (ii) at gT2 = 0: {general} vs pseudo-slant {pseudo}"),
        )?;
        checked += 1;
    }
    ensure(
        special_case_rhs(1, 0.0, 1.0, 0.0, RhsCase::PseudoSlant).is_err(),
        || "theta = 0 accepted in the pseudo-slant case".into(),
    )?;
    Ok(format!("{checked} random inputs reduce within 1e-15"))
}

fn finite_difference_error(e: &Expr, points: &[Vec<f64>]) -> Result<(usize, f64), String> {
    let (hg, hh) = (1e-5, 1e-4);
    let mut worst: f64 = 0.0;
    let mut evaluated = 0;
    let f = |x: &[f64]| e.eval(x).map_err(|err| format!("{e}: {err}"));
    for p in points {
        let grad = e.gradient(p).map_err(|err| format!("{e}: {err}"))?;
        let hess = e.hessian(p).map_err(|err| format!("{e}: {err}"))?;
        let n = p.len();
        let shifted = |steps: &[(usize, f64)]| {
            let mut q = p.clone();
            for &(i, d) in steps {
                q[i] += d;
            }
            f(&q)
        };
        for i in 0..n {
            let fd = (shifted(&[(i, hg)])? - shifted(&[(i, -hg)])?) / (2.0 * hg);
            worst = worst.max((grad[i] - fd).abs() / (1.0 + grad[i].abs()));
            for j in 0..n {
                let fd = if i == j {
                    (shifted(&[(i, hh)])? - 2.0 * f(p)? + shifted(&[(i, -hh)])?) / (hh * hh)
                } else {
                    (shifted(&[(i, hh), (j, hh)])?
                        - shifted(&[(i, hh), (j, -hh)])?
                        - shifted(&[(i, -hh), (j, hh)])?
                        + shifted(&[(i, -hh), (j, -hh)])?)
                        / (4.0 * hh * hh)
                };
                worst = worst.max((hess[i][j] - fd).abs() / (1.0 + hess[i][j].abs()));
            }
        }
        evaluated += 1;
    }
    Ok((evaluated, worst))
}

fn criterion_10() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut expressions = 0;
    for name in skewwarp::cli::builtin_names() {
        let cfg = ScenarioConfig::builtin(name).unwrap();
        let s = {
            let mut c = cfg.clone();
            c.sampling.count = 100;
            c.build().map_err(|e| e.to_string())?
        };
        let points = sample_points(&s);
        let params = &cfg.immersion.params;
        let mut sources: Vec<String> = cfg.immersion.components.clone();
        sources.extend(cfg.product.iter().filter_map(|p| p.warping.clone()));
        sources.extend(cfg.expect.induced_metric_diagonal.iter().flatten().cloned());
        sources.extend(cfg.expect.sff_norm2.iter().cloned());
        sources.extend(cfg.expect.mean_curvature_norm.iter().cloned());
        for src in &sources {
            let e = Expr::parse(src, params, &s.constants).map_err(|e| format!("{name}: {e}"))?;
            let (_, err) = finite_difference_error(&e, &points)?;
            worst = worst.max(err);
            expressions += 1;
        }
        let inline = s.ambient.to_inline();
        let amb_points = seeded_points(inline.coords.len(), 100, 10, 2.0);
        let ambient_sources = inline
            .metric
            .iter()
            .flatten()
            .chain(inline.phi.iter().flatten())
            .chain(&inline.xi)
            .chain(&inline.eta);
        for src in ambient_sources {
            let e = Expr::parse(src, &inline.coords, &s.constants)
                .map_err(|e| format!("{name} ambient: {e}"))?;
            let (_, err) = finite_difference_error(&e, &amb_points)?;
            worst = worst.max(err);
            expressions += 1;
        }
    }
    ensure(worst < 1e-6, || format!("worst relative error {worst:e}"))?;
    Ok(format!(
        "{expressions} expressions x 100 points, worst relative error {worst:.1e}"
    ))
}

fn binary(args: &[&str]) -> Result<std::process::Output, String> {
    Command::new(env!("CARGO_BIN_EXE_skewwarp"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())
}

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    for (i, threads) in [None, None, Some("1"), Some("3")].into_iter().enumerate() {
        let path = dir.path().join(format!("r{i}.json"));
        let path_s = path.to_string_lossy().to_string();
        let mut args = vec![
            "verify",
            "ex62",
            "--seed",
            "42",
            "--report",
            path_s.as_str(),
        ];
        if let Some(t) = threads {
            args.extend(["--threads", t]);
        }
        let out = binary(&args)?;
        ensure(out.status.success(), || {
            format!(
                "exit {:?}: {}",
                out.status.code(),
                String::from_utf8_lossy(&out.stderr)
            )
        })?;
        reports.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    ensure(reports.windows(2).all(|w| w[0] == w[1]), || {
        "reports differ between runs".into()
    })?;

    let out = binary(&["verify", "sheared-nonproduct"])?;
    ensure(out.status.success(), || {
        format!("sheared-nonproduct exit {:?}", out.status.code())
    })?;
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    ensure(doc["warped"]["verdict"] == "not a warped product", || {
        format!("verdict {}", doc["warped"]["verdict"])
    })?;
    let off = doc["warped"]["off_factor"].as_f64().unwrap_or(0.0);
    ensure(off > 0.1, || {
        format!("sheared off-factor residual only {off}")
    })?;
    Ok(format!(
        "4 runs byte-identical ({} bytes); negative control not warped (off-factor {off:.3})",
        reports[0].len()
    ))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("ambient axioms", criterion_1),
        ("ex31 classification", criterion_2),
        ("ex32 slant angle", criterion_3),
        ("ex61 Riemannian product", criterion_4),
        ("ex62 warped product and inequality", criterion_5),
        ("slant identities", criterion_6),
        ("frame and second fundamental form", criterion_7),
        ("Sasakian submanifold sigma(X, xi)", criterion_8),
        ("special-case reductions", criterion_9),
        ("derivative engine", criterion_10),
        ("determinism and negative control", criterion_11),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = std::time::Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match &outcome {
            Ok(msg) => println!("criterion {:>2} PASS  {name} [{secs:.2}s]: {msg}", i + 1),
            Err(msg) => {
                println!("criterion {:>2} FAIL  {name} [{secs:.2}s]: {msg}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
