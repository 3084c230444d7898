//! Pipeline orchestration: ambient checks, per-sample geometry and
//! classification, warped-product analysis and the inequality harness.
//!
//! Per-sample work runs on the rayon pool; everything is collected in sample
//! order before aggregation, so reports do not depend on the thread count.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::ambient::StructureResiduals;
use crate::error::{Error, Result};
use crate::immersion::GeometrySample;
use crate::skewcr::{
    classify, classify_normal, summarize, tf_decompose, verify_slant_identities, BlockKind,
    DistributionSplit, Label, NormalSplit, SlantResiduals, TFPair,
};
use crate::tolerances::Tolerances;
use crate::warped::{
    block_residual, check_bishop, declaration_alignment, extract_warping, grad_ln_f,
    inequality_report, lemma_residuals, mixed_tg, BishopResidual, BlockResidual, InequalityReport,
    LemmaResiduals, LnFGradient, ProductDeclaration, WarpGauge, WarpSample, WarpVerdict,
    XiLocation,
};

use super::config::Scenario;

/// Random tangent pairs per point for the ambient identities.
pub const AMBIENT_RANDOM_PAIRS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    CheckAmbient,
    Classify,
    Verify,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::CheckAmbient => "check-ambient",
            Stage::Classify => "classify",
            Stage::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Info,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Info => "info",
        }
    }
}

/// One named residual compared against a threshold. Non-finite values never
/// hold.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub asserted: bool,
    pub detail: Option<String>,
}

impl Check {
    pub fn holds(&self) -> bool {
        match self.relation {
            Relation::AtMost => self.value <= self.tolerance,
            Relation::AtLeast => self.value >= self.tolerance,
        }
    }

    pub fn verdict(&self) -> Verdict {
        match (self.asserted, self.holds()) {
            (false, _) => Verdict::Info,
            (true, true) => Verdict::Pass,
            (true, false) => Verdict::Fail,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub scenario: String,
    pub description: String,
    pub stage: Stage,
    pub seed: u64,
    pub samples: usize,
    pub tolerances: Tolerances,
    pub constants: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    /// Stage summaries keyed by section name.
    pub sections: BTreeMap<String, Value>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict() != Verdict::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.verdict() == Verdict::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn section(&self, name: &str) -> Option<&Value> {
        self.sections.get(name)
    }
}

#[derive(Default)]
struct Checks(Vec<Check>);

impl Checks {
    fn push(
        &mut self,
        name: impl Into<String>,
        value: f64,
        relation: Relation,
        tolerance: f64,
        asserted: bool,
    ) -> &mut Check {
        self.0.push(Check {
            name: name.into(),
            value,
            relation,
            tolerance,
            asserted,
            detail: None,
        });
        self.0.last_mut().expect("just pushed")
    }

    fn at_most(
        &mut self,
        name: impl Into<String>,
        value: f64,
        tolerance: f64,
        asserted: bool,
    ) -> &mut Check {
        self.push(name, value, Relation::AtMost, tolerance, asserted)
    }

    /// Categorical agreement encoded as a count of mismatches.
    fn matches(&mut self, name: impl Into<String>, mismatches: usize, detail: String) {
        self.at_most(name, mismatches as f64, 0.0, true).detail = Some(detail);
    }
}

fn max_of(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, |acc, x| {
        if x.is_nan() || acc.is_nan() {
            f64::NAN
        } else {
            acc.max(x)
        }
    })
}

fn range_of(it: impl IntoIterator<Item = f64>) -> Value {
    let (lo, hi) = it
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x), hi.max(x))
        });
    if lo > hi {
        Value::Null
    } else {
        json!({ "min": lo, "max": hi })
    }
}

fn mismatch_detail(want: &[usize; 3], first_bad: Option<&[usize; 3]>) -> String {
    match first_bad {
        Some(b) => format!("expected {want:?}, got {b:?}"),
        None => format!("expected {want:?}"),
    }
}

fn sample_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Uniform points in the domain box, drawn sequentially from one stream.
pub fn sample_points(scenario: &Scenario) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let domain = scenario.immersion.domain();
    (0..scenario.samples)
        .map(|_| {
            domain
                .iter()
                .map(|&(lo, hi)| if lo < hi { rng.gen_range(lo..hi) } else { lo })
                .collect()
        })
        .collect()
}

struct Classified {
    geometry: GeometrySample,
    tf: TFPair,
    split: DistributionSplit,
    normal: NormalSplit,
}

fn classify_at(scenario: &Scenario, point: &[f64]) -> Result<Classified> {
    let tol = &scenario.tolerances;
    let geometry = scenario.immersion.sample(point, None, tol)?;
    let tf = tf_decompose(&geometry, tol);
    let split = classify(&tf, tol)?;
    let normal = classify_normal(&geometry, &tf, &split, tol)?;
    Ok(Classified {
        geometry,
        tf,
        split,
        normal,
    })
}

struct Warp {
    block: BlockResidual,
    warp: WarpSample,
    grad: LnFGradient,
    bishop: BishopResidual,
    lemmas: LemmaResiduals,
    alignment: f64,
    mixed_dperp_dtheta: f64,
    inequality: InequalityReport,
}

fn warp_at(
    scenario: &Scenario,
    decl: &ProductDeclaration,
    gauge: &WarpGauge,
    c: &Classified,
) -> Result<Warp> {
    let tol = &scenario.tolerances;
    let s = &c.geometry;
    let grad = grad_ln_f(decl, s, tol)?;
    Ok(Warp {
        block: block_residual(s, decl),
        warp: gauge.at(&scenario.immersion, decl, s, tol)?,
        bishop: check_bishop(decl, s, &grad),
        lemmas: lemma_residuals(s, &c.tf, &c.split, &grad),
        alignment: declaration_alignment(s, decl, &c.split, &c.tf),
        mixed_dperp_dtheta: mixed_tg(
            s,
            &c.split.basis_of(BlockKind::AntiInvariant),
            &c.split.basis_of(BlockKind::Slant),
        ),
        inequality: inequality_report(s, &c.split, &c.normal, decl, &grad)?,
        grad,
    })
}

struct SampleData {
    c: Classified,
    frame: f64,
    sigma_asymmetry: f64,
    sigma_tangency: f64,
    gauss: f64,
    sff: (f64, f64),
    mean_curvature: f64,
    umbilicity: f64,
    tf_reconstruction: f64,
    tf_antisymmetry: f64,
    tf_xi: f64,
    orthogonality: f64,
    odd_slant: usize,
    anti_t: f64,
    wirtinger: f64,
    slant: SlantResiduals,
    sigma_xi: Option<f64>,
    metric_diagonal: Option<f64>,
    sff_expect: Option<f64>,
    h_expect: Option<f64>,
    warp: Option<Warp>,
}

enum Outcome {
    Ok(Box<SampleData>),
    Degenerate { point: Vec<f64>, singular: f64 },
    Failed(String),
}

fn analyse(
    scenario: &Scenario,
    index: usize,
    point: &[f64],
    warp_ctx: Option<(&ProductDeclaration, &WarpGauge)>,
) -> Outcome {
    let run = || -> Result<SampleData> {
        let c = classify_at(scenario, point)?;
        let s = &c.geometry;
        let e = &scenario.expect;
        let metric_diagonal = e
            .induced_metric_diagonal
            .as_ref()
            .map(|exprs| -> Result<f64> {
                let mut worst: f64 = 0.0;
                for (i, ex) in exprs.iter().enumerate() {
                    let want = ex.eval(point)?;
                    worst =
                        worst.max((s.induced_metric[(i, i)] - want).abs() / want.abs().max(1.0));
                }
                Ok(worst)
            })
            .transpose()?;
        let sff = s.sff_norm2();
        let mean_curvature = s.norm(&s.mean_curvature());
        let sff_expect = e
            .sff_norm2
            .as_ref()
            .map(|ex| ex.eval(point).map(|w| (sff.0 - w).abs()))
            .transpose()?;
        let h_expect = e
            .mean_curvature_norm
            .as_ref()
            .map(|ex| ex.eval(point).map(|w| (mean_curvature - w).abs()))
            .transpose()?;
        let (_, slant) =
            verify_slant_identities(s, &c.tf, &c.split, sample_seed(scenario.seed, index));
        let warp = warp_ctx
            .map(|(decl, gauge)| warp_at(scenario, decl, gauge, &c))
            .transpose()?;
        Ok(SampleData {
            frame: s.frame_defect(),
            sigma_asymmetry: s.sigma_asymmetry(),
            sigma_tangency: s.sigma_tangency(),
            gauss: s.gauss_defect(),
            sff,
            mean_curvature,
            umbilicity: s.umbilicity_defect(),
            tf_reconstruction: c.tf.reconstruction_defect(s),
            tf_antisymmetry: c.tf.antisymmetry_defect(),
            tf_xi: c.tf.xi_defect(),
            orthogonality: c.split.orthogonality_defect(),
            odd_slant: c.split.odd_slant_blocks(),
            anti_t: c.split.anti_invariant_t_defect(&c.tf),
            wirtinger: c.split.wirtinger_defect(s, &c.tf),
            slant,
            sigma_xi: crate::warped::sigma_xi_residual(s, &c.tf),
            metric_diagonal,
            sff_expect,
            h_expect,
            warp,
            c,
        })
    };
    match run() {
        Ok(d) => Outcome::Ok(Box::new(d)),
        Err(Error::Degenerate { point, singular }) => Outcome::Degenerate { point, singular },
        Err(e) => Outcome::Failed(e.to_string()),
    }
}

fn ambient_section(
    scenario: &Scenario,
    checks: &mut Checks,
    points: &[Vec<f64>],
) -> Result<(Value, bool)> {
    let tol = &scenario.tolerances;
    let positions = points
        .iter()
        .map(|p| {
            scenario
                .immersion
                .position(p)
                .map(|x| x.iter().copied().collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let r: StructureResiduals =
        scenario
            .ambient
            .check_structure(&positions, scenario.seed, AMBIENT_RANDOM_PAIRS)?;
    let sasakian = r.is_sasakian(tol.structure);
    let expect = scenario.expect_sasakian;
    checks.at_most(
        "ambient.almost_contact",
        r.almost_contact,
        tol.structure,
        true,
    );
    checks.at_most(
        "ambient.compatibility",
        r.compatibility,
        tol.structure,
        true,
    );
    let assert_sasakian = expect == Some(true);
    for (name, value) in [
        ("ambient.contact_metric", r.contact_metric),
        ("ambient.normality", r.normality),
        ("ambient.sasakian", r.sasakian),
        ("ambient.xi_derivative", r.xi_derivative),
    ] {
        checks.at_most(name, value, tol.structure, assert_sasakian);
    }
    if expect == Some(false) {
        checks
            .push(
                "ambient.non_sasakian_detected",
                r.sasakian,
                Relation::AtLeast,
                tol.structure,
                true,
            )
            .detail = Some("Sasakian identity expected to fail".into());
    }
    let section = json!({
        "model": scenario.ambient.name(),
        "dim": scenario.ambient.dim(),
        "points": positions.len(),
        "random_pairs": AMBIENT_RANDOM_PAIRS,
        "residuals": r,
        "almost_contact_metric": r.is_almost_contact_metric(tol.structure),
        "sasakian": sasakian,
        "expect_sasakian": expect,
    });
    Ok((section, sasakian))
}

pub fn run_scenario(scenario: &Scenario, stage: Stage) -> Result<VerificationReport> {
    let tol = &scenario.tolerances;
    let mut checks = Checks::default();
    let mut sections = BTreeMap::new();
    let points = sample_points(scenario);

    let (ambient, sasakian_ambient) = ambient_section(scenario, &mut checks, &points)?;
    sections.insert("ambient".to_string(), ambient);

    if stage != Stage::CheckAmbient {
        let warp_ctx = match (&scenario.product, stage) {
            (Some(decl), Stage::Verify) => Some((decl, WarpGauge::new(&scenario.immersion, decl)?)),
            _ => None,
        };
        let outcomes: Vec<Outcome> = points
            .par_iter()
            .enumerate()
            .map(|(i, p)| analyse(scenario, i, p, warp_ctx.as_ref().map(|(d, g)| (*d, g))))
            .collect();

        let mut degenerate = Vec::new();
        let mut errors = Vec::new();
        let mut data = Vec::new();
        for (i, o) in outcomes.into_iter().enumerate() {
            match o {
                Outcome::Ok(d) => data.push(*d),
                Outcome::Degenerate { point, singular } => degenerate.push(
                    json!({ "index": i, "point": point, "smallest_singular_value": singular }),
                ),
                Outcome::Failed(msg) => {
                    errors.push(json!({ "index": i, "point": points[i], "error": msg }))
                }
            }
        }
        let total = points.len();
        checks
            .at_most(
                "sampling.degenerate_fraction",
                degenerate.len() as f64 / total as f64,
                tol.degenerate_fraction,
                true,
            )
            .detail = Some(format!(
            "{} of {total} samples degenerate",
            degenerate.len()
        ));
        checks.at_most("sampling.errors", errors.len() as f64, 0.0, true);
        sections.insert("degenerate".into(), Value::Array(degenerate));
        sections.insert("sample_errors".into(), Value::Array(errors));

        let order1 = classification_checks(
            scenario,
            &mut checks,
            &mut sections,
            &data,
            sasakian_ambient,
        );

        if let Some((decl, gauge)) = warp_ctx {
            warped_checks(
                scenario,
                &mut checks,
                &mut sections,
                &data,
                decl,
                gauge,
                sasakian_ambient,
                order1,
            )?;
        }
    }

    Ok(VerificationReport {
        scenario: scenario.name.clone(),
        description: scenario.description.clone(),
        stage,
        seed: scenario.seed,
        samples: scenario.samples,
        tolerances: tol.clone(),
        constants: scenario.constants.clone(),
        checks: checks.0,
        sections,
    })
}

/// Returns whether every sample is a skew CR submanifold of order 1.
fn classification_checks(
    scenario: &Scenario,
    checks: &mut Checks,
    sections: &mut BTreeMap<String, Value>,
    data: &[SampleData],
    sasakian_ambient: bool,
) -> bool {
    let tol = &scenario.tolerances;
    let e = &scenario.expect;
    let m = |f: &dyn Fn(&SampleData) -> f64| max_of(data.iter().map(f));

    checks.at_most("frame.orthonormality", m(&|d| d.frame), tol.frame, true);
    checks.at_most("sigma.symmetry", m(&|d| d.sigma_asymmetry), tol.sigma, true);
    checks.at_most(
        "sigma.tangential_part",
        m(&|d| d.sigma_tangency),
        tol.sigma,
        true,
    );
    checks.at_most("sigma.gauss_split", m(&|d| d.gauss), tol.gauss, true);
    checks.at_most(
        "sigma.norm_paths",
        m(&|d| (d.sff.0 - d.sff.1).abs()),
        tol.sff_paths,
        true,
    );
    checks.at_most(
        "tf.reconstruction",
        m(&|d| d.tf_reconstruction),
        tol.tf,
        true,
    );
    checks.at_most("tf.antisymmetry", m(&|d| d.tf_antisymmetry), tol.tf, true);
    checks.at_most("tf.xi", m(&|d| d.tf_xi), tol.tf, true);
    checks.at_most(
        "split.orthogonality",
        m(&|d| d.orthogonality),
        tol.block_orthogonality,
        true,
    );
    checks.at_most(
        "split.odd_slant_blocks",
        m(&|d| d.odd_slant as f64),
        0.0,
        true,
    );
    checks.at_most(
        "split.anti_invariant_t",
        m(&|d| d.anti_t),
        tol.cluster.sqrt(),
        true,
    );
    checks.at_most(
        "split.angle_consistency",
        m(&|d| d.wirtinger),
        tol.slant,
        true,
    );
    checks.at_most(
        "slant.t_squared",
        m(&|d| d.slant.t_squared),
        tol.slant,
        true,
    );
    checks.at_most("slant.tt", m(&|d| d.slant.tt), tol.slant, true);
    checks.at_most("slant.ff", m(&|d| d.slant.ff), tol.slant, true);
    checks.at_most(
        "normal.phi_invariance",
        m(&|d| d.c.normal.phi_invariance),
        tol.normal_split,
        true,
    );
    checks.at_most(
        "normal.cross_orthogonality",
        m(&|d| d.c.normal.cross_orthogonality),
        tol.normal_split,
        true,
    );
    let dims_gap = m(&|d| {
        let s = &d.c.split;
        let covered =
            s.invariant_dim() + s.anti_invariant_dim() + s.slant_dims().iter().sum::<usize>();
        (s.n() as f64 - covered as f64 - if d.c.tf.xi_tangent { 1.0 } else { 0.0 }).abs()
    });
    checks.at_most("split.dimension_count", dims_gap, 0.0, true);

    let splits: Vec<DistributionSplit> = data.iter().map(|d| d.c.split.clone()).collect();
    let summary = summarize(&splits, tol.slant);
    let label = summary.as_ref().map(|s| s.label);
    if let Some(s) = &summary {
        let generic_expected = e.label == Some(Label::Generic);
        checks
            .at_most(
                "split.slant_angle_spread",
                if s.consistent_dims {
                    s.angle_spread
                } else {
                    f64::INFINITY
                },
                tol.slant,
                e.label.is_some() && !generic_expected,
            )
            .detail = Some(format!("dimensions consistent: {}", s.consistent_dims));
    }

    if let Some(sx) = data
        .iter()
        .map(|d| d.sigma_xi)
        .collect::<Option<Vec<f64>>>()
        .filter(|v| !v.is_empty())
    {
        checks.at_most(
            "sigma.xi_plus_normal_phi",
            max_of(sx),
            tol.lemma,
            sasakian_ambient,
        );
    }

    if let Some(want) = e.dims {
        let got = |d: &SampleData| {
            let s = &d.c.split;
            [
                s.invariant_dim(),
                s.anti_invariant_dim(),
                s.slant_dims().iter().sum(),
            ]
        };
        let bad: Vec<[usize; 3]> = data.iter().map(got).filter(|g| *g != want).collect();
        checks.matches(
            "expect.dims",
            bad.len(),
            mismatch_detail(&want, bad.first()),
        );
    }
    if let Some(want) = e.normal_dims {
        let got = |d: &SampleData| {
            let (a, b, c) = d.c.normal.dims();
            [a, b, c]
        };
        let bad: Vec<[usize; 3]> = data.iter().map(got).filter(|g| *g != want).collect();
        checks.matches(
            "expect.normal_dims",
            bad.len(),
            mismatch_detail(&want, bad.first()),
        );
    }
    if let Some(want) = e.xi_tangent {
        let bad = data.iter().filter(|d| d.c.tf.xi_tangent != want).count();
        checks.matches("expect.xi_tangent", bad, format!("expected {want}"));
    }
    if let Some(want) = e.label {
        let got = label.map_or("none", Label::as_str);
        checks.matches(
            "expect.label",
            usize::from(label != Some(want)),
            format!("expected '{}', got '{got}'", want.as_str()),
        );
    }
    if let Some(want) = e.slant_angle {
        let dev = max_of(data.iter().map(|d| {
            let angles = d.c.split.slant_angles();
            if angles.is_empty() {
                f64::INFINITY
            } else {
                max_of(angles.iter().map(|a| (a - want).abs()))
            }
        }));
        checks
            .at_most("expect.slant_angle", dev, tol.expect, true)
            .detail = Some(format!("expected {want} rad ({} deg)", want.to_degrees()));
    }
    for (name, vals) in [
        (
            "expect.induced_metric_diagonal",
            data.iter().map(|d| d.metric_diagonal).collect::<Vec<_>>(),
        ),
        (
            "expect.sff_norm2",
            data.iter().map(|d| d.sff_expect).collect(),
        ),
        (
            "expect.mean_curvature_norm",
            data.iter().map(|d| d.h_expect).collect(),
        ),
    ] {
        if vals.first().is_some_and(Option::is_some) {
            checks.at_most(name, max_of(vals.into_iter().flatten()), tol.expect, true);
        }
    }

    let first = data.first();
    let summary_json = summary.as_ref().map(|s| {
        json!({
            "label": s.label,
            "invariant_dim": s.invariant_dim,
            "anti_invariant_dim": s.anti_invariant_dim,
            "slant_dims": s.slant_dims,
            "slant_angles": s.angles,
            "slant_angles_deg": s.angles.iter().map(|a| a.to_degrees()).collect::<Vec<_>>(),
            "angle_spread": s.angle_spread,
            "consistent_dims": s.consistent_dims,
        })
    });
    sections.insert(
        "classification".into(),
        json!({
            "samples_classified": data.len(),
            "summary": summary_json,
            "xi_tangent": first.map(|d| d.c.tf.xi_tangent),
            "normal_dims": first.map(|d| {
                let (a, b, c) = d.c.normal.dims();
                [a, b, c]
            }),
            "q_eigenvalues": first.map(|d| d.c.split.eigenvalues.clone()),
            "sff_norm2": range_of(data.iter().map(|d| d.sff.0)),
            "mean_curvature_norm": range_of(data.iter().map(|d| d.mean_curvature)),
            "umbilicity_defect": max_of(data.iter().map(|d| d.umbilicity)),
        }),
    );
    label == Some(Label::SkewCrOrder1)
}

#[allow(clippy::too_many_arguments)]
fn warped_checks(
    scenario: &Scenario,
    checks: &mut Checks,
    sections: &mut BTreeMap<String, Value>,
    data: &[SampleData],
    decl: &ProductDeclaration,
    gauge: WarpGauge,
    sasakian_ambient: bool,
    order1: bool,
) -> Result<()> {
    let tol = &scenario.tolerances;
    let warps: Vec<&Warp> = data.iter().filter_map(|d| d.warp.as_ref()).collect();
    let blocks: Vec<BlockResidual> = warps.iter().map(|w| w.block).collect();
    let wsamples: Vec<WarpSample> = warps.iter().map(|w| w.warp).collect();
    let ws = extract_warping(&blocks, &wsamples, gauge, tol);
    let warped = ws.verdict != WarpVerdict::NotWarped;
    let m = |f: &dyn Fn(&Warp) -> f64| max_of(warps.iter().map(|w| f(w)));

    checks.at_most("warp.off_factor", ws.off_factor, tol.block, false);
    checks.at_most(
        "warp.base_fiber_dependence",
        ws.base_fiber_dependence,
        tol.block,
        false,
    );
    checks.at_most(
        "warp.consistency",
        ws.warp_consistency,
        tol.warp_consistency,
        false,
    );
    checks.at_most(
        "warp.fiber_dependence",
        ws.fiber_dependence,
        tol.warp_consistency,
        false,
    );
    if let Some(want) = scenario.expect.warp_verdict {
        checks.matches(
            "expect.warp_verdict",
            usize::from(ws.verdict != want),
            format!(
                "expected '{}', got '{}'",
                want.as_str(),
                ws.verdict.as_str()
            ),
        );
    }
    if let Some(rec) = ws.f_recovery {
        checks.at_most("warp.f_recovery", rec, tol.f_recovery, warped);
    }
    let bishop = m(&|w| w.bishop.residual);
    let torsion = m(&|w| w.bishop.torsion);
    checks.at_most("warp.bishop", bishop, tol.bishop, warped);
    checks.at_most("warp.connection_symmetry", torsion, tol.sigma, warped);
    checks.at_most(
        "warp.declaration_alignment",
        m(&|w| w.alignment),
        tol.declaration,
        warped,
    );

    let xi_in_base = matches!(decl.xi_location(), XiLocation::MT | XiLocation::MTheta);
    let xi_tangent = data.iter().all(|d| d.c.tf.xi_tangent);
    let xi_ln_f = warps.iter().filter_map(|w| w.grad.xi_ln_f).map(f64::abs);
    let xi_ln_f = if xi_tangent {
        Some(max_of(xi_ln_f))
    } else {
        None
    };
    if let Some(v) = xi_ln_f {
        checks.at_most(
            "warp.xi_ln_f",
            v,
            tol.xi_ln_f,
            xi_in_base && decl.warping().is_some(),
        );
    }

    let lemmas = LemmaResiduals::max_over(warps.iter().map(|w| &w.lemmas));
    let lemma_entries = lemmas.entries();
    for (name, value) in &lemma_entries {
        checks.at_most(format!("lemma.{name}"), *value, tol.lemma, sasakian_ambient);
    }
    let mut lemma_map = serde_json::Map::new();
    for (name, value) in &lemma_entries {
        lemma_map.insert((*name).to_string(), json!(value));
    }
    sections.insert(
        "lemmas".into(),
        json!({ "asserted": sasakian_ambient, "residuals": lemma_map }),
    );

    let mixed = m(&|w| w.mixed_dperp_dtheta);
    let mixed_ok = mixed <= tol.mixed_tg;
    checks
        .at_most(
            "hypothesis.mixed_tg_dperp_dtheta",
            mixed,
            tol.mixed_tg,
            sasakian_ambient,
        )
        .detail = Some("sigma(D_perp, D_theta) must vanish for the inequality".into());

    let f_constant = decl.xi_location() == XiLocation::MPerp;
    if f_constant {
        checks
            .at_most(
                "theorem.f_constant",
                ws.f_spread,
                tol.f_constant,
                sasakian_ambient,
            )
            .detail = Some("xi in the fiber forces a Riemannian product".into());
    }

    let names = |idx: &[usize]| -> Vec<String> {
        idx.iter()
            .map(|&i| scenario.immersion.params()[i].clone())
            .collect()
    };
    sections.insert(
        "warped".into(),
        json!({
            "declaration": {
                "base_t": names(decl.base_t()),
                "base_theta": names(decl.base_theta()),
                "fiber": names(decl.fiber()),
                "xi_location": decl.xi_location().as_str(),
                "warping": decl.warping().map(|w| w.to_string()),
            },
            "verdict": ws.verdict,
            "off_factor": ws.off_factor,
            "base_fiber_dependence": ws.base_fiber_dependence,
            "warp_consistency": ws.warp_consistency,
            "fiber_dependence": ws.fiber_dependence,
            "f": range_of(ws.f_values.iter().copied()),
            "f_spread": ws.f_spread,
            "f_recovery": ws.f_recovery,
            "gauge": { "reference": ws.gauge.reference, "f_ref": ws.gauge.f_ref },
            "bishop": bishop,
            "connection_symmetry": torsion,
            "xi_ln_f": xi_ln_f,
            "grad_t_norm2": range_of(warps.iter().map(|w| w.grad.grad_t_norm2)),
            "grad_theta_norm2": range_of(warps.iter().map(|w| w.grad.grad_theta_norm2)),
            "fiber_leak": max_of(warps.iter().map(|w| w.grad.fiber_leak)),
        }),
    );

    // Inequality at the box centre, plus the smallest margin over samples.
    let centre = scenario.immersion.center();
    let at_centre = classify_at(scenario, &centre).and_then(|c| {
        let grad = grad_ln_f(decl, &c.geometry, tol)?;
        inequality_report(&c.geometry, &c.split, &c.normal, decl, &grad)
    });
    let min_margin = warps
        .iter()
        .filter_map(|w| w.inequality.margin)
        .fold(None, |acc: Option<f64>, x| {
            Some(acc.map_or(x, |a| a.min(x)))
        });
    let hypotheses = sasakian_ambient && mixed_ok && order1 && warped && !f_constant;
    let flags = json!({
        "sasakian_ambient": sasakian_ambient,
        "mixed_tg_dperp_dtheta": mixed_ok,
        "mixed_tg_dperp_dtheta_value": mixed,
        "xi_location": decl.xi_location().as_str(),
        "order1_skewcr": order1,
        "warped": warped,
    });
    let theorem = match at_centre {
        Ok(r) => {
            if let Some(want) = scenario.expect.rhs_statement_i {
                checks.at_most(
                    "expect.rhs_statement_i",
                    (r.rhs_statement_i - want).abs(),
                    tol.rhs,
                    true,
                );
            }
            if let Some(mm) = min_margin {
                checks
                    .push("theorem.margin", mm, Relation::AtLeast, 0.0, hypotheses)
                    .detail = Some("smallest lhs - rhs over samples".into());
            }
            let mut eq = serde_json::Map::new();
            for (k, v) in r.equality.entries() {
                eq.insert(k.to_string(), json!(v));
            }
            json!({
                "reference_point": centre,
                "lhs": r.lhs,
                "lhs_components": r.lhs_components,
                "m2": r.m2,
                "theta": r.theta,
                "theta_deg": r.theta.to_degrees(),
                "grad_t_norm2": r.grad_t_norm2,
                "grad_theta_norm2": r.grad_theta_norm2,
                "rhs_statement_i": r.rhs_statement_i,
                "rhs_statement_ii": r.rhs_statement_ii,
                "rhs_proof_variant_i": r.rhs_proof_variant_i,
                "applicable_statement": match decl.xi_location() {
                    XiLocation::MT => Some("i"),
                    XiLocation::MTheta => Some("ii"),
                    XiLocation::MPerp => None,
                },
                "margin": r.margin,
                "min_margin": min_margin,
                "hypothesis_flags": flags,
                "hypotheses_hold": hypotheses,
                "margin_asserted": hypotheses,
                "equality_diagnostics": eq,
                "f_constant_required": f_constant,
            })
        }
        Err(err) => {
            checks.matches("theorem.reference_point", 1, err.to_string());
            json!({ "reference_point": centre, "error": err.to_string(), "hypothesis_flags": flags })
        }
    };
    sections.insert("theorem41".into(), theorem);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::ScenarioConfig;

    fn run(name: &str, samples: usize, stage: Stage) -> VerificationReport {
        let mut cfg = ScenarioConfig::builtin(name).unwrap();
        cfg.sampling.count = samples;
        run_scenario(&cfg.build().unwrap(), stage).unwrap()
    }

    fn failures(r: &VerificationReport) -> String {
        r.failures()
            .map(|c| {
                format!(
                    "{} = {:e} (tol {:e}) {:?}\n",
                    c.name, c.value, c.tolerance, c.detail
                )
            })
            .collect()
    }

    #[test]
    fn ex31_classifies() {
        let r = run("ex31", 10, Stage::Classify);
        assert!(r.passed(), "{}", failures(&r));
        let angle = r.section("classification").unwrap()["summary"]["slant_angles"][0]
            .as_f64()
            .unwrap();
        assert!((angle - std::f64::consts::FRAC_PI_3).abs() < 1e-8);
    }

    #[test]
    fn ex62_reference_rhs() {
        let r = run("ex62", 10, Stage::Verify);
        assert!(r.passed(), "{}", failures(&r));
        let t = r.section("theorem41").unwrap();
        assert!((t["rhs_statement_i"].as_f64().unwrap() - (4.0 + 1.0 / 12.0)).abs() < 1e-9);
        assert_eq!(t["hypothesis_flags"]["sasakian_ambient"], json!(false));
        assert!(!r.check("theorem.margin").unwrap().asserted);
    }

    #[test]
    fn ambient_stage_only_touches_the_ambient() {
        let r = run("sasakian5-ambient", 5, Stage::CheckAmbient);
        assert!(r.passed(), "{}", failures(&r));
        assert_eq!(r.sections.keys().collect::<Vec<_>>(), ["ambient"]);
    }

    #[test]
    fn points_are_reproducible() {
        let s = ScenarioConfig::builtin("ex62").unwrap().build().unwrap();
        assert_eq!(sample_points(&s), sample_points(&s));
        for p in sample_points(&s) {
            for (x, (lo, hi)) in p.iter().zip(s.immersion.domain()) {
                assert!(lo <= x && x <= hi);
            }
        }
    }
}
