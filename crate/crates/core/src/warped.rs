//! Warped-product structure `B ×_f M_⊥` with `B = M_T × M_θ`.
//!
//! A [`ProductDeclaration`] assigns every immersion parameter to one of the
//! three factors. The induced metric is then tested for block form, the
//! warping function is recovered up to a gauge fixed at the domain centre,
//! and the connection/second-fundamental-form identities of a skew CR
//! warped product are evaluated as residuals.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exprdsl::Expr;
use crate::immersion::{GeometrySample, Immersion};
use crate::linalg::gram_schmidt;
use crate::skewcr::{BlockKind, DistributionSplit, NormalSplit, TFPair};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum XiLocation {
    #[serde(rename = "M_T")]
    MT,
    #[serde(rename = "M_theta")]
    MTheta,
    #[serde(rename = "M_perp")]
    MPerp,
}

impl XiLocation {
    pub fn as_str(self) -> &'static str {
        match self {
            XiLocation::MT => "M_T",
            XiLocation::MTheta => "M_theta",
            XiLocation::MPerp => "M_perp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    T,
    Theta,
    Fiber,
}

#[derive(Debug, Clone)]
pub struct ProductDeclaration {
    base_t: Vec<usize>,
    base_theta: Vec<usize>,
    fiber: Vec<usize>,
    xi_location: XiLocation,
    warping: Option<Expr>,
}

impl ProductDeclaration {
    /// Names must partition `params`; the fiber must be nonempty and the
    /// warping expression, if any, must not reference fiber parameters.
    pub fn new<S: AsRef<str>>(
        params: &[String],
        base_t: &[S],
        base_theta: &[S],
        fiber: &[S],
        xi_location: XiLocation,
        warping: Option<Expr>,
    ) -> Result<Self> {
        let mut owner: Vec<Option<Factor>> = vec![None; params.len()];
        let mut resolve = |names: &[S], factor: Factor| -> Result<Vec<usize>> {
            names
                .iter()
                .map(|name| {
                    let name = name.as_ref();
                    let i = params
                        .iter()
                        .position(|p| p == name)
                        .ok_or_else(|| Error::Declaration(format!("unknown parameter '{name}'")))?;
                    if owner[i].replace(factor).is_some() {
                        return Err(Error::Declaration(format!(
                            "parameter '{name}' assigned twice"
                        )));
                    }
                    Ok(i)
                })
                .collect()
        };
        let base_t = resolve(base_t, Factor::T)?;
        let base_theta = resolve(base_theta, Factor::Theta)?;
        let fiber = resolve(fiber, Factor::Fiber)?;
        if let Some(i) = owner.iter().position(Option::is_none) {
            return Err(Error::Declaration(format!(
                "parameter '{}' belongs to no factor",
                params[i]
            )));
        }
        if fiber.is_empty() {
            return Err(Error::Declaration("fiber has no parameters".into()));
        }
        if let Some(w) = &warping {
            if w.params() != params {
                return Err(Error::Declaration(
                    "warping expression must be declared over the immersion parameters".into(),
                ));
            }
            let used = w.referenced_params();
            if let Some(&c) = fiber.iter().find(|&&c| used[c]) {
                return Err(Error::Declaration(format!(
                    "warping expression depends on fiber parameter '{}'",
                    params[c]
                )));
            }
        }
        Ok(ProductDeclaration {
            base_t,
            base_theta,
            fiber,
            xi_location,
            warping,
        })
    }

    pub fn base_t(&self) -> &[usize] {
        &self.base_t
    }

    pub fn base_theta(&self) -> &[usize] {
        &self.base_theta
    }

    pub fn fiber(&self) -> &[usize] {
        &self.fiber
    }

    /// Base indices in ascending order.
    pub fn base(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self
            .base_t
            .iter()
            .chain(&self.base_theta)
            .copied()
            .collect();
        b.sort_unstable();
        b
    }

    pub fn xi_location(&self) -> XiLocation {
        self.xi_location
    }

    pub fn warping(&self) -> Option<&Expr> {
        self.warping.as_ref()
    }

    /// `(m₁, m₂, m₃)` = dimensions of `M_T`, `M_⊥`, `M_θ`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.base_t.len(), self.fiber.len(), self.base_theta.len())
    }

    pub fn factor_of(&self, i: usize) -> Factor {
        if self.base_t.contains(&i) {
            Factor::T
        } else if self.base_theta.contains(&i) {
            Factor::Theta
        } else {
            Factor::Fiber
        }
    }

    fn factor_params(&self, f: Factor) -> &[usize] {
        match f {
            Factor::T => &self.base_t,
            Factor::Theta => &self.base_theta,
            Factor::Fiber => &self.fiber,
        }
    }

    /// `p` with its base coordinates replaced by those of `from`.
    fn with_base_of(&self, p: &[f64], from: &[f64]) -> Vec<f64> {
        let mut out = p.to_vec();
        for i in self.base() {
            out[i] = from[i];
        }
        out
    }
}

fn sub_block(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// `∂_c g_ab = g̃(∇̃_c ∂_a, ∂_b) + g̃(∂_a, ∇̃_c ∂_b)`.
pub fn metric_derivative(sample: &GeometrySample, c: usize, a: usize, b: usize) -> f64 {
    let n = sample.n();
    let ja = sample.jacobian.column(a).into_owned();
    let jb = sample.jacobian.column(b).into_owned();
    sample.g(&sample.nabla[c * n + a], &jb) + sample.g(&ja, &sample.nabla[c * n + b])
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BlockResidual {
    /// Largest induced-metric entry between different factors.
    pub off_factor: f64,
    /// Largest `|∂_c g_ab|` with `a, b` in the base and `c` in the fiber.
    pub base_fiber_dependence: f64,
}

pub fn block_residual(sample: &GeometrySample, decl: &ProductDeclaration) -> BlockResidual {
    let n = sample.n();
    let g = &sample.induced_metric;
    let mut off: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            if decl.factor_of(a) != decl.factor_of(b) {
                off = off.max(g[(a, b)].abs());
            }
        }
    }
    let base = decl.base();
    let mut dep: f64 = 0.0;
    for &c in &decl.fiber {
        for &a in &base {
            for &b in &base {
                if b >= a {
                    dep = dep.max(metric_derivative(sample, c, a, b).abs());
                }
            }
        }
    }
    BlockResidual {
        off_factor: off,
        base_fiber_dependence: dep,
    }
}

/// Reference point (domain centre) and the value of `f` there.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpGauge {
    pub reference: Vec<f64>,
    pub f_ref: f64,
}

/// Warping data recovered at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpSample {
    pub f: f64,
    pub f_expr: Option<f64>,
    /// Relative deviation of the fiber block from `f²/f_ref²` times the
    /// reference-base block at the same fiber point (pivot entry excluded).
    pub proportionality: f64,
    /// Relative change of `f²/f_ref²` between the sample's fiber point and
    /// the reference fiber point.
    pub fiber_dependence: f64,
}

fn largest_diagonal(m: &DMatrix<f64>) -> usize {
    (0..m.nrows())
        .max_by(|&a, &b| m[(a, a)].total_cmp(&m[(b, b)]))
        .unwrap_or(0)
}

fn eval_warping(expr: &Expr, p: &[f64]) -> Result<f64> {
    let f = expr.eval(p)?;
    if f > 0.0 {
        Ok(f)
    } else {
        Err(Error::NonPositiveWarping(f))
    }
}

impl WarpGauge {
    pub fn new(imm: &Immersion, decl: &ProductDeclaration) -> Result<Self> {
        let reference = imm.center();
        let f_ref = match decl.warping() {
            Some(w) => eval_warping(w, &reference)?,
            None => 1.0,
        };
        Ok(WarpGauge { reference, f_ref })
    }

    /// `f(p)² = f_ref² · G(b, q)_{pp} / G(b_ref, q)_{pp}` for the fiber block
    /// `G` and its largest reference diagonal entry `p`.
    pub fn at(
        &self,
        imm: &Immersion,
        decl: &ProductDeclaration,
        sample: &GeometrySample,
        tol: &Tolerances,
    ) -> Result<WarpSample> {
        let p = &sample.point;
        let fiber = &decl.fiber;
        let block = sub_block(&sample.induced_metric, fiber);
        let ref_base = decl.with_base_of(p, &self.reference);
        let block_ref = sub_block(&imm.induced_metric(&ref_base, tol.rank)?, fiber);
        let pivot = largest_diagonal(&block_ref);
        let ratio = block[(pivot, pivot)] / block_ref[(pivot, pivot)];

        let scale = block.amax();
        let mut proportionality: f64 = 0.0;
        for i in 0..fiber.len() {
            for j in 0..fiber.len() {
                if (i, j) != (pivot, pivot) {
                    let d = (block[(i, j)] - ratio * block_ref[(i, j)]).abs() / scale;
                    proportionality = proportionality.max(d);
                }
            }
        }

        let at_q0 = decl.with_base_of(&self.reference, p);
        let block_q0 = sub_block(&imm.induced_metric(&at_q0, tol.rank)?, fiber);
        let block_q0_ref = sub_block(&imm.induced_metric(&self.reference, tol.rank)?, fiber);
        let pivot0 = largest_diagonal(&block_q0_ref);
        let ratio0 = block_q0[(pivot0, pivot0)] / block_q0_ref[(pivot0, pivot0)];

        let f_expr = decl.warping().map(|w| eval_warping(w, p)).transpose()?;
        Ok(WarpSample {
            f: self.f_ref * ratio.sqrt(),
            f_expr,
            proportionality,
            fiber_dependence: (ratio - ratio0).abs() / ratio0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WarpVerdict {
    #[serde(rename = "not a warped product")]
    NotWarped,
    #[serde(rename = "Riemannian product")]
    RiemannianProduct,
    #[serde(rename = "warped product")]
    Warped,
}

impl WarpVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            WarpVerdict::NotWarped => "not a warped product",
            WarpVerdict::RiemannianProduct => "Riemannian product",
            WarpVerdict::Warped => "warped product",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarpedStructure {
    pub off_factor: f64,
    pub base_fiber_dependence: f64,
    pub warp_consistency: f64,
    pub fiber_dependence: f64,
    pub gauge: WarpGauge,
    pub f_values: Vec<f64>,
    /// `max f − min f` over samples.
    pub f_spread: f64,
    /// `max |f − f_expr| / f_expr` when an expression is declared.
    pub f_recovery: Option<f64>,
    pub verdict: WarpVerdict,
}

/// Aggregates per-sample data (in sample order) into a verdict.
pub fn extract_warping(
    blocks: &[BlockResidual],
    samples: &[WarpSample],
    gauge: WarpGauge,
    tol: &Tolerances,
) -> WarpedStructure {
    let fold = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, f64::max);
    let off_factor = fold(&mut blocks.iter().map(|b| b.off_factor));
    let base_fiber_dependence = fold(&mut blocks.iter().map(|b| b.base_fiber_dependence));
    let warp_consistency = fold(&mut samples.iter().map(|s| s.proportionality));
    let fiber_dependence = fold(&mut samples.iter().map(|s| s.fiber_dependence));
    let f_values: Vec<f64> = samples.iter().map(|s| s.f).collect();
    let (lo, hi) = f_values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &f| {
            (lo.min(f), hi.max(f))
        });
    let f_spread = if f_values.is_empty() { 0.0 } else { hi - lo };
    let f_recovery = samples
        .iter()
        .map(|s| s.f_expr.map(|e| (s.f - e).abs() / e))
        .collect::<Option<Vec<f64>>>()
        .filter(|v| !v.is_empty())
        .map(|v| v.into_iter().fold(0.0, f64::max));

    let warped = off_factor <= tol.block
        && base_fiber_dependence <= tol.block
        && warp_consistency <= tol.warp_consistency
        && fiber_dependence <= tol.warp_consistency;
    let verdict = if !warped {
        WarpVerdict::NotWarped
    } else if f_spread <= tol.f_constant {
        WarpVerdict::RiemannianProduct
    } else {
        WarpVerdict::Warped
    };
    WarpedStructure {
        off_factor,
        base_fiber_dependence,
        warp_consistency,
        fiber_dependence,
        gauge,
        f_values,
        f_spread,
        f_recovery,
        verdict,
    }
}

/// `d(ln f)` and its gradient in parameter coordinates at one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LnFGradient {
    /// `∂_a ln f` for every parameter.
    pub differential: DVector<f64>,
    /// Gradient over the base, raised with the induced base metric; zero on
    /// fiber slots.
    pub gradient: DVector<f64>,
    pub grad_t_norm2: f64,
    pub grad_theta_norm2: f64,
    /// `ξ(ln f)` when `ξ` is tangent.
    pub xi_ln_f: Option<f64>,
    /// Largest `|∂_c ln f|` over fiber parameters.
    pub fiber_leak: f64,
}

impl LnFGradient {
    /// `X(ln f)` for a tangent vector in frame coefficients.
    pub fn apply(&self, sample: &GeometrySample, frame_coeffs: &DVector<f64>) -> f64 {
        self.differential.dot(&sample.param_coords(frame_coeffs))
    }
}

/// From the declared expression when present, otherwise from the fiber
/// block: `∂_a ln f = ½ ∂_a G_pp / G_pp`.
pub fn grad_ln_f(
    decl: &ProductDeclaration,
    sample: &GeometrySample,
    tol: &Tolerances,
) -> Result<LnFGradient> {
    let n = sample.n();
    let differential = match decl.warping() {
        Some(w) => {
            let (f, grad) = w.value_and_gradient(&sample.point)?;
            if !(f > 0.0) {
                return Err(Error::NonPositiveWarping(f));
            }
            DVector::from_iterator(n, grad.into_iter().map(|d| d / f))
        }
        None => {
            let block = sub_block(&sample.induced_metric, &decl.fiber);
            let p = decl.fiber[largest_diagonal(&block)];
            let gpp = sample.induced_metric[(p, p)];
            DVector::from_fn(n, |a, _| 0.5 * metric_derivative(sample, a, p, p) / gpp)
        }
    };

    let base = decl.base();
    let g_base = sub_block(&sample.induced_metric, &base);
    let d_base = DVector::from_fn(base.len(), |i, _| differential[base[i]]);
    let raised = g_base
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Degenerate {
            point: sample.point.clone(),
            singular: 0.0,
        })?
        .solve(&d_base);
    let part = |f: Factor| {
        DVector::from_fn(base.len(), |i, _| {
            if decl.factor_of(base[i]) == f {
                raised[i]
            } else {
                0.0
            }
        })
    };
    let norm2 = |v: &DVector<f64>| v.dot(&(&g_base * v)).max(0.0);
    let mut gradient = DVector::zeros(n);
    for (i, &a) in base.iter().enumerate() {
        gradient[a] = raised[i];
    }

    let xi = &sample.structure.xi;
    let xi_ln_f = (sample.norm(&sample.normal_part(xi)) < tol.rank * sample.norm(xi).max(1.0))
        .then(|| differential.dot(&sample.param_coords(&sample.frame_coords(xi))));
    let fiber_leak = decl
        .fiber
        .iter()
        .map(|&c| differential[c].abs())
        .fold(0.0, f64::max);

    Ok(LnFGradient {
        grad_t_norm2: norm2(&part(Factor::T)),
        grad_theta_norm2: norm2(&part(Factor::Theta)),
        differential,
        gradient,
        xi_ln_f,
        fiber_leak,
    })
}

/// `‖tan(∇̃_{∂a}∂c) − (∂_a ln f) ∂_c‖` for base `a`, fiber `c`.
pub fn bishop_pair(sample: &GeometrySample, grad: &LnFGradient, a: usize, c: usize) -> f64 {
    let n = sample.n();
    let jc = sample.jacobian.column(c).into_owned();
    let tangential = sample.tangential_part(&sample.nabla[a * n + c]);
    sample.norm(&(tangential - jc * grad.differential[a]))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BishopResidual {
    pub residual: f64,
    /// `max ‖∇̃_{∂a}∂c − ∇̃_{∂c}∂a‖`.
    pub torsion: f64,
}

pub fn check_bishop(
    decl: &ProductDeclaration,
    sample: &GeometrySample,
    grad: &LnFGradient,
) -> BishopResidual {
    let n = sample.n();
    let mut out = BishopResidual::default();
    for a in decl.base() {
        for &c in &decl.fiber {
            out.residual = out.residual.max(bishop_pair(sample, grad, a, c));
            let swap = &sample.nabla[a * n + c] - &sample.nabla[c * n + a];
            out.torsion = out.torsion.max(sample.norm(&swap));
        }
    }
    out
}

/// `max ‖σ(x, y)‖` over basis columns of two frame-coefficient blocks.
pub fn mixed_tg(sample: &GeometrySample, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for x in a.column_iter() {
        for y in b.column_iter() {
            let s = sample.sigma_of(&x.into_owned(), &y.into_owned());
            worst = worst.max(sample.norm(&s));
        }
    }
    worst
}

/// `max_X ‖σ(X, ξ) + FX‖` over the tangent frame, when `ξ` is tangent.
pub fn sigma_xi_residual(sample: &GeometrySample, tf: &TFPair) -> Option<f64> {
    if !tf.xi_tangent {
        return None;
    }
    let n = sample.n();
    let mut worst: f64 = 0.0;
    for a in 0..n {
        let mut x = DVector::zeros(n);
        x[a] = 1.0;
        let fx = &sample.normal * (&tf.f * &x);
        worst = worst.max(sample.norm(&(sample.sigma_of(&x, &tf.xi_coeffs) + fx)));
    }
    Some(worst)
}

/// Identity residuals of a skew CR warped product on the classified blocks.
/// `X, Y ∈ D`, `U, V ∈ D^θ`, `Z, W ∈ D^⊥`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LemmaResiduals {
    /// `|ξ(ln f)|`.
    pub xi_ln_f: Option<f64>,
    /// `‖σ(X, ξ) + FX‖`.
    pub sigma_xi: Option<f64>,
    /// `g(σ(X, Y), φZ)`.
    pub sigma_dd_phi_dperp: f64,
    /// `g(σ(X, V), φZ)`.
    pub sigma_d_dtheta_phi_dperp: f64,
    /// `g(σ(X, Z), FV)`.
    pub sigma_d_dperp_f_dtheta: f64,
    /// `g(σ(U, V), φZ) − g(σ(U, Z), FV)`.
    pub slant_exchange: f64,
    /// `g(σ(φX, Z), φW) − X(ln f) g(Z, W)`.
    pub invariant_warping: f64,
    /// `g(σ(Z, W), FV) − g(σ(Z, V), φW) − (TV(ln f) + η(V)) g(Z, W)`.
    pub slant_warping: f64,
    /// `g(σ(Z, W), FTV) − g(σ(Z, TV), φW) + cos²θ V(ln f) g(Z, W)`.
    pub slant_warping_cos2: f64,
}

impl LemmaResiduals {
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        let mut out = Vec::new();
        if let Some(v) = self.xi_ln_f {
            out.push(("xi_ln_f", v));
        }
        if let Some(v) = self.sigma_xi {
            out.push(("sigma_xi_plus_fx", v));
        }
        out.extend([
            ("sigma_dd_phi_dperp", self.sigma_dd_phi_dperp),
            ("sigma_d_dtheta_phi_dperp", self.sigma_d_dtheta_phi_dperp),
            ("sigma_d_dperp_f_dtheta", self.sigma_d_dperp_f_dtheta),
            ("slant_exchange", self.slant_exchange),
            ("invariant_warping", self.invariant_warping),
            ("slant_warping", self.slant_warping),
            ("slant_warping_cos2", self.slant_warping_cos2),
        ]);
        out
    }

    fn merge(self, o: LemmaResiduals) -> LemmaResiduals {
        let opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(x), Some(y)) => Some(x.max(y)),
            (x, y) => x.or(y),
        };
        LemmaResiduals {
            xi_ln_f: opt(self.xi_ln_f, o.xi_ln_f),
            sigma_xi: opt(self.sigma_xi, o.sigma_xi),
            sigma_dd_phi_dperp: self.sigma_dd_phi_dperp.max(o.sigma_dd_phi_dperp),
            sigma_d_dtheta_phi_dperp: self
                .sigma_d_dtheta_phi_dperp
                .max(o.sigma_d_dtheta_phi_dperp),
            sigma_d_dperp_f_dtheta: self.sigma_d_dperp_f_dtheta.max(o.sigma_d_dperp_f_dtheta),
            slant_exchange: self.slant_exchange.max(o.slant_exchange),
            invariant_warping: self.invariant_warping.max(o.invariant_warping),
            slant_warping: self.slant_warping.max(o.slant_warping),
            slant_warping_cos2: self.slant_warping_cos2.max(o.slant_warping_cos2),
        }
    }

    /// Entrywise maximum over samples.
    pub fn max_over<'a>(items: impl IntoIterator<Item = &'a LemmaResiduals>) -> LemmaResiduals {
        items
            .into_iter()
            .fold(LemmaResiduals::default(), |acc, r| acc.merge(*r))
    }
}

fn columns(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    m.column_iter().map(|c| c.into_owned()).collect()
}

pub fn lemma_residuals(
    sample: &GeometrySample,
    tf: &TFPair,
    split: &DistributionSplit,
    grad: &LnFGradient,
) -> LemmaResiduals {
    let d = columns(&split.basis_of(BlockKind::Invariant));
    let dperp = columns(&split.basis_of(BlockKind::AntiInvariant));
    let dtheta = columns(&split.basis_of(BlockKind::Slant));
    let cos2 = split.slant_blocks().next().map_or(0.0, |b| b.cos2());

    let sigma = |x: &DVector<f64>, y: &DVector<f64>| sample.sigma_of(x, y);
    let phi = |x: &DVector<f64>| sample.structure.phi_of(&sample.from_frame(x));
    let f_of = |x: &DVector<f64>| &sample.normal * (&tf.f * x);
    let t_of = |x: &DVector<f64>| &tf.t * x;
    let eta = |x: &DVector<f64>| sample.structure.eta_of(&sample.from_frame(x));
    let lnf = |x: &DVector<f64>| grad.apply(sample, x);
    let g = |a: &DVector<f64>, b: &DVector<f64>| sample.g(a, b);

    let mut r = LemmaResiduals {
        xi_ln_f: grad.xi_ln_f.map(f64::abs),
        sigma_xi: sigma_xi_residual(sample, tf),
        ..Default::default()
    };
    for z in &dperp {
        let phi_z = phi(z);
        for x in &d {
            for y in &d {
                r.sigma_dd_phi_dperp = r.sigma_dd_phi_dperp.max(g(&sigma(x, y), &phi_z).abs());
            }
            for v in &dtheta {
                r.sigma_d_dtheta_phi_dperp = r
                    .sigma_d_dtheta_phi_dperp
                    .max(g(&sigma(x, v), &phi_z).abs());
                r.sigma_d_dperp_f_dtheta = r
                    .sigma_d_dperp_f_dtheta
                    .max(g(&sigma(x, z), &f_of(v)).abs());
            }
        }
        for u in &dtheta {
            for v in &dtheta {
                let d = g(&sigma(u, v), &phi_z) - g(&sigma(u, z), &f_of(v));
                r.slant_exchange = r.slant_exchange.max(d.abs());
            }
        }
        for w in &dperp {
            let phi_w = phi(w);
            let gzw = z.dot(w);
            for x in &d {
                let tx = t_of(x);
                let d = g(&sigma(&tx, z), &phi_w) - lnf(x) * gzw;
                r.invariant_warping = r.invariant_warping.max(d.abs());
            }
            for v in &dtheta {
                let tv = t_of(v);
                let d =
                    g(&sigma(z, w), &f_of(v)) - g(&sigma(z, v), &phi_w) - (lnf(&tv) + eta(v)) * gzw;
                r.slant_warping = r.slant_warping.max(d.abs());
                let d =
                    g(&sigma(z, w), &f_of(&tv)) - g(&sigma(z, &tv), &phi_w) + cos2 * lnf(v) * gzw;
                r.slant_warping_cos2 = r.slant_warping_cos2.max(d.abs());
            }
        }
    }
    r
}

/// Largest distance of a classified block from the span of its declared
/// factor's coordinate fields (and of `ξ` from its declared factor).
pub fn declaration_alignment(
    sample: &GeometrySample,
    decl: &ProductDeclaration,
    split: &DistributionSplit,
    tf: &TFPair,
) -> f64 {
    let g = &sample.structure.metric;
    let distance = |factor: Factor, frame_vectors: Vec<DVector<f64>>| -> f64 {
        if frame_vectors.is_empty() {
            return 0.0;
        }
        let idx = decl.factor_params(factor);
        if idx.is_empty() {
            return f64::INFINITY;
        }
        let cols = sample.jacobian.select_columns(idx.iter());
        let Ok(span) = gram_schmidt(&cols, g, 0.0) else {
            return f64::INFINITY;
        };
        frame_vectors
            .iter()
            .map(|v| {
                let amb = sample.from_frame(v);
                let proj = &span.frame * (span.frame.transpose() * (g * &amb));
                sample.norm(&(amb - proj))
            })
            .fold(0.0, f64::max)
    };
    let xi_factor = match decl.xi_location() {
        XiLocation::MT => Factor::T,
        XiLocation::MTheta => Factor::Theta,
        XiLocation::MPerp => Factor::Fiber,
    };
    let xi: Vec<DVector<f64>> = if tf.xi_tangent {
        vec![tf.xi_coeffs.clone()]
    } else {
        vec![]
    };
    [
        distance(Factor::T, columns(&split.basis_of(BlockKind::Invariant))),
        distance(Factor::Theta, columns(&split.basis_of(BlockKind::Slant))),
        distance(
            Factor::Fiber,
            columns(&split.basis_of(BlockKind::AntiInvariant)),
        ),
        distance(xi_factor, xi),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsCase {
    /// `2m₂(‖∇^T ln f‖² + 1)`.
    ContactCr,
    /// `m₂ cot²θ ‖∇^θ ln f‖²`.
    PseudoSlant,
    /// `2m₂(‖∇^T ln f‖² + 1) + m₂ cot²θ ‖∇^θ ln f‖²`.
    GeneralI,
    /// `2m₂‖∇^T ln f‖² + m₂ cot²θ ‖∇^θ ln f‖²`.
    GeneralII,
    /// `GeneralI` with `csc²θ` in place of `cot²θ`.
    ProofVariantI,
}

fn slant_term(m2: f64, gtheta2: f64, theta: f64, csc: bool) -> Result<f64> {
    if gtheta2 == 0.0 {
        return Ok(0.0);
    }
    if !(theta > 0.0 && theta <= std::f64::consts::FRAC_PI_2) {
        return Err(Error::Domain(format!(
            "slant angle {theta} outside (0, π/2]"
        )));
    }
    let (s, c) = theta.sin_cos();
    let factor = if csc {
        1.0 / (s * s)
    } else {
        (c * c) / (s * s)
    };
    Ok(m2 * factor * gtheta2)
}

/// Lower bound for `‖σ‖²`. A zero `gtheta2` contributes exactly zero
/// whatever `theta` is.
pub fn special_case_rhs(
    m2: usize,
    gt2: f64,
    gtheta2: f64,
    theta: f64,
    case: RhsCase,
) -> Result<f64> {
    if m2 == 0 {
        return Err(Error::Domain("fiber dimension must be at least 1".into()));
    }
    if !(gt2 >= 0.0 && gtheta2 >= 0.0) {
        return Err(Error::Domain(
            "squared gradient norms must be nonnegative".into(),
        ));
    }
    let m2 = m2 as f64;
    Ok(match case {
        RhsCase::ContactCr => 2.0 * m2 * (gt2 + 1.0),
        RhsCase::PseudoSlant => {
            if theta == 0.0 {
                return Err(Error::Domain("cot θ undefined at θ = 0".into()));
            }
            slant_term(m2, gtheta2, theta, false)?
        }
        RhsCase::GeneralI => 2.0 * m2 * (gt2 + 1.0) + slant_term(m2, gtheta2, theta, false)?,
        RhsCase::GeneralII => 2.0 * m2 * gt2 + slant_term(m2, gtheta2, theta, false)?,
        RhsCase::ProofVariantI => 2.0 * m2 * (gt2 + 1.0) + slant_term(m2, gtheta2, theta, true)?,
    })
}

/// Norms that vanish when the inequality is an equality.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EqualityDiagnostics {
    pub sigma_d_d: f64,
    pub sigma_dperp_dtheta: f64,
    pub sigma_dtheta_dtheta: f64,
    pub sigma_d_dtheta: f64,
    /// Distance of `σ(D, D^⊥)` values from `φD^⊥`.
    pub containment_d_dperp: f64,
    /// Distance of `σ(D^⊥, D^⊥)` values from `FD^θ`.
    pub containment_dperp_dperp: f64,
}

impl EqualityDiagnostics {
    pub fn entries(&self) -> [(&'static str, f64); 6] {
        [
            ("sigma_d_d", self.sigma_d_d),
            ("sigma_dperp_dtheta", self.sigma_dperp_dtheta),
            ("sigma_dtheta_dtheta", self.sigma_dtheta_dtheta),
            ("sigma_d_dtheta", self.sigma_d_dtheta),
            ("containment_d_dperp", self.containment_d_dperp),
            ("containment_dperp_dperp", self.containment_dperp_dperp),
        ]
    }
}

pub fn equality_diagnostics(
    sample: &GeometrySample,
    split: &DistributionSplit,
    normal: &NormalSplit,
) -> EqualityDiagnostics {
    let d = split.basis_of(BlockKind::Invariant);
    let dperp = split.basis_of(BlockKind::AntiInvariant);
    let dtheta = split.basis_of(BlockKind::Slant);
    let outside = |x: &DMatrix<f64>, y: &DMatrix<f64>, span: &DMatrix<f64>| -> f64 {
        let mut worst: f64 = 0.0;
        for a in x.column_iter() {
            for b in y.column_iter() {
                let c = sample.normal_coords(&sample.sigma_of(&a.into_owned(), &b.into_owned()));
                let inside = span * (span.transpose() * &c);
                worst = worst.max((c - inside).norm());
            }
        }
        worst
    };
    EqualityDiagnostics {
        sigma_d_d: mixed_tg(sample, &d, &d),
        sigma_dperp_dtheta: mixed_tg(sample, &dperp, &dtheta),
        sigma_dtheta_dtheta: mixed_tg(sample, &dtheta, &dtheta),
        sigma_d_dtheta: mixed_tg(sample, &d, &dtheta),
        containment_d_dperp: outside(&d, &dperp, &normal.phi_d_perp),
        containment_dperp_dperp: outside(&dperp, &dperp, &normal.f_d_theta),
    }
}

/// Both sides of the `‖σ‖²` inequality at one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityReport {
    /// `‖σ‖²` by frame contraction.
    pub lhs: f64,
    /// `‖σ‖²` by normal-component sums.
    pub lhs_components: f64,
    pub m2: usize,
    /// Slant angle used; π/2 when there is no slant block.
    pub theta: f64,
    pub grad_t_norm2: f64,
    pub grad_theta_norm2: f64,
    pub rhs_statement_i: f64,
    pub rhs_statement_ii: f64,
    pub rhs_proof_variant_i: f64,
    /// `lhs − rhs` for the branch matching the declared location of `ξ`;
    /// `None` when `ξ` lies in the fiber.
    pub margin: Option<f64>,
    pub equality: EqualityDiagnostics,
}

pub fn inequality_report(
    sample: &GeometrySample,
    split: &DistributionSplit,
    normal: &NormalSplit,
    decl: &ProductDeclaration,
    grad: &LnFGradient,
) -> Result<InequalityReport> {
    let (lhs, lhs_components) = sample.sff_norm2();
    let m2 = decl.fiber().len();
    let theta = split
        .slant_blocks()
        .next()
        .map_or(std::f64::consts::FRAC_PI_2, |b| b.angle);
    let (gt2, gth2) = (grad.grad_t_norm2, grad.grad_theta_norm2);
    let rhs_statement_i = special_case_rhs(m2, gt2, gth2, theta, RhsCase::GeneralI)?;
    let rhs_statement_ii = special_case_rhs(m2, gt2, gth2, theta, RhsCase::GeneralII)?;
    let rhs_proof_variant_i = special_case_rhs(m2, gt2, gth2, theta, RhsCase::ProofVariantI)?;
    let margin = match decl.xi_location() {
        XiLocation::MT => Some(lhs - rhs_statement_i),
        XiLocation::MTheta => Some(lhs - rhs_statement_ii),
        XiLocation::MPerp => None,
    };
    Ok(InequalityReport {
        lhs,
        lhs_components,
        m2,
        theta,
        grad_t_norm2: gt2,
        grad_theta_norm2: gth2,
        rhs_statement_i,
        rhs_statement_ii,
        rhs_proof_variant_i,
        margin,
        equality: equality_diagnostics(sample, split, normal),
    })
}
