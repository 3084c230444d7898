//! Extrinsic geometry of an immersion `ψ: U → M̃`.
//!
//! [`Immersion::sample`] evaluates everything at one parameter point and
//! returns a [`GeometrySample`]; the remaining operations read from that
//! sample. Frame vectors are stored as ambient coordinate columns.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::ambient::{AmbientModel, StructureAt};
use crate::error::{Error, Result};
use crate::exprdsl::Expr;
use crate::linalg::{complete_basis, gram_schmidt, identity_defect};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone)]
pub struct Immersion {
    params: Vec<String>,
    domain: Vec<(f64, f64)>,
    components: Vec<Expr>,
    ambient: Arc<AmbientModel>,
}

impl Immersion {
    pub fn new(
        params: Vec<String>,
        domain: Vec<(f64, f64)>,
        components: Vec<Expr>,
        ambient: Arc<AmbientModel>,
    ) -> Result<Self> {
        let n = params.len();
        if n == 0 || n > ambient.dim() {
            return Err(Error::Domain(format!(
                "immersion dimension {n} not in 1..={}",
                ambient.dim()
            )));
        }
        if domain.len() != n {
            return Err(Error::Domain(
                "domain box must have one interval per parameter".into(),
            ));
        }
        if let Some((i, _)) = domain.iter().enumerate().find(|(_, (lo, hi))| !(lo <= hi)) {
            return Err(Error::Domain(format!(
                "empty interval for parameter '{}'",
                params[i]
            )));
        }
        if components.len() != ambient.dim() {
            return Err(Error::Domain(format!(
                "expected {} components, got {}",
                ambient.dim(),
                components.len()
            )));
        }
        if components.iter().any(|c| c.params() != params.as_slice()) {
            return Err(Error::Domain(
                "components must be declared over the immersion parameters".into(),
            ));
        }
        Ok(Immersion {
            params,
            domain,
            components,
            ambient,
        })
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn ambient(&self) -> &AmbientModel {
        &self.ambient
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn center(&self) -> Vec<f64> {
        self.domain.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    pub fn position(&self, p: &[f64]) -> Result<DVector<f64>> {
        let vals = self
            .components
            .iter()
            .map(|c| c.eval(p))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(DVector::from_vec(vals))
    }

    /// Pushforward matrix, column `a` = `∂ψ/∂u_a`. Fails at points where the
    /// smallest singular value drops below `rank_tol · max(1, largest)`.
    pub fn jacobian(&self, p: &[f64], rank_tol: f64) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let big = self.ambient.dim();
        let mut jac = DMatrix::zeros(big, n);
        for (c, comp) in self.components.iter().enumerate() {
            for (a, d) in comp.gradient(p)?.into_iter().enumerate() {
                jac[(c, a)] = d;
            }
        }
        let sv = jac.clone().svd(false, false).singular_values;
        let largest = sv.max();
        let smallest = sv.min();
        if !(smallest >= rank_tol * largest.max(1.0)) {
            return Err(Error::Degenerate {
                point: p.to_vec(),
                singular: smallest,
            });
        }
        Ok(jac)
    }

    /// `g_ab = g̃(∂_a ψ, ∂_b ψ)`.
    pub fn induced_metric(&self, p: &[f64], rank_tol: f64) -> Result<DMatrix<f64>> {
        let jac = self.jacobian(p, rank_tol)?;
        let x = self.position(p)?;
        let s = self.ambient.structure_at(x.as_slice())?;
        Ok(jac.transpose() * &s.metric * &jac)
    }

    /// Full geometry at `p`. `ordering` permutes the Jacobian columns before
    /// orthonormalisation (default: declaration order).
    pub fn sample(
        &self,
        p: &[f64],
        ordering: Option<&[usize]>,
        tol: &Tolerances,
    ) -> Result<GeometrySample> {
        let n = self.dim();
        if p.len() != n {
            return Err(Error::Domain(format!(
                "point has {} values, expected {n}",
                p.len()
            )));
        }
        let ordering: Vec<usize> = match ordering {
            Some(o) => {
                let mut sorted = o.to_vec();
                sorted.sort_unstable();
                if sorted != (0..n).collect::<Vec<_>>() {
                    return Err(Error::Domain("ordering is not a permutation".into()));
                }
                o.to_vec()
            }
            None => (0..n).collect(),
        };
        let position = self.position(p)?;
        let structure = self.ambient.structure_at(position.as_slice())?;
        let jacobian = self.jacobian(p, tol.rank)?;
        let induced_metric = jacobian.transpose() * &structure.metric * &jacobian;

        let permuted = jacobian.select_columns(ordering.iter());
        let gs = gram_schmidt(&permuted, &structure.metric, tol.rank).map_err(|_| {
            Error::Degenerate {
                point: p.to_vec(),
                singular: 0.0,
            }
        })?;
        let mut param_coeffs = DMatrix::zeros(n, n);
        for (row, &param) in ordering.iter().enumerate() {
            param_coeffs.set_row(param, &gs.coeffs.row(row));
        }
        let tangent = gs.frame;
        let normal = complete_basis(&tangent, &structure.metric);

        // ∇̃_{∂i}∂j = ∂i∂jψ + Γ(∂iψ, ∂jψ)
        let big = structure.dim();
        let hessians = self
            .components
            .iter()
            .map(|c| c.hessian(p))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let cols: Vec<DVector<f64>> = jacobian.column_iter().map(|c| c.into_owned()).collect();
        let mut nabla = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let second = DVector::from_fn(big, |c, _| hessians[c][i][j]);
                nabla.push(second + structure.christoffel.contract(&cols[i], &cols[j]));
            }
        }

        let mut sample = GeometrySample {
            point: p.to_vec(),
            position,
            structure,
            jacobian,
            induced_metric,
            ordering,
            tangent,
            param_coeffs,
            normal,
            nabla,
            nabla_frame: Vec::new(),
            sigma: Vec::new(),
        };
        sample.fill_sigma();
        Ok(sample)
    }
}

/// Everything known about the immersion at one parameter point.
#[derive(Debug, Clone)]
pub struct GeometrySample {
    pub point: Vec<f64>,
    pub position: DVector<f64>,
    pub structure: StructureAt,
    pub jacobian: DMatrix<f64>,
    pub induced_metric: DMatrix<f64>,
    pub ordering: Vec<usize>,
    /// Orthonormal tangent frame `e_a` as ambient columns.
    pub tangent: DMatrix<f64>,
    /// `tangent = jacobian * param_coeffs`.
    pub param_coeffs: DMatrix<f64>,
    /// Orthonormal normal frame `N_r` as ambient columns.
    pub normal: DMatrix<f64>,
    /// `∇̃_{∂i}∂j`, row-major in `(i, j)`.
    pub nabla: Vec<DVector<f64>>,
    /// `∇̃_{e_a}e_b` with frame coefficients frozen (tensorial part only).
    pub nabla_frame: Vec<DVector<f64>>,
    /// `σ(e_a, e_b)`, row-major in `(a, b)`.
    pub sigma: Vec<DVector<f64>>,
}

impl GeometrySample {
    fn fill_sigma(&mut self) {
        let n = self.n();
        let p = &self.param_coeffs;
        let mut nabla_frame = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                let mut v = DVector::zeros(self.ambient_dim());
                for i in 0..n {
                    for j in 0..n {
                        let w = p[(i, a)] * p[(j, b)];
                        if w != 0.0 {
                            v += &self.nabla[i * n + j] * w;
                        }
                    }
                }
                nabla_frame.push(v);
            }
        }
        self.sigma = nabla_frame
            .iter()
            .map(|v| v - self.tangential_part(v))
            .collect();
        self.nabla_frame = nabla_frame;
    }

    pub fn n(&self) -> usize {
        self.tangent.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.tangent.nrows()
    }

    pub fn codim(&self) -> usize {
        self.normal.ncols()
    }

    pub fn g(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.structure.g(a, b)
    }

    pub fn norm(&self, a: &DVector<f64>) -> f64 {
        self.structure.norm(a)
    }

    pub fn frame_vector(&self, a: usize) -> DVector<f64> {
        self.tangent.column(a).into_owned()
    }

    pub fn normal_vector(&self, r: usize) -> DVector<f64> {
        self.normal.column(r).into_owned()
    }

    /// Ambient vector with tangent-frame coefficients `coeffs`.
    pub fn from_frame(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.tangent * coeffs
    }

    /// Tangent-frame coefficients `⟨v, e_a⟩`.
    pub fn frame_coords(&self, v: &DVector<f64>) -> DVector<f64> {
        self.tangent.transpose() * (&self.structure.metric * v)
    }

    /// Normal-frame coefficients `⟨v, N_r⟩`.
    pub fn normal_coords(&self, v: &DVector<f64>) -> DVector<f64> {
        self.normal.transpose() * (&self.structure.metric * v)
    }

    /// Parameter-basis coefficients of a tangent vector given in frame coords.
    pub fn param_coords(&self, frame_coeffs: &DVector<f64>) -> DVector<f64> {
        &self.param_coeffs * frame_coeffs
    }

    pub fn tangential_part(&self, v: &DVector<f64>) -> DVector<f64> {
        self.from_frame(&self.frame_coords(v))
    }

    pub fn normal_part(&self, v: &DVector<f64>) -> DVector<f64> {
        v - self.tangential_part(v)
    }

    pub fn sigma(&self, a: usize, b: usize) -> &DVector<f64> {
        &self.sigma[a * self.n() + b]
    }

    /// `σ(X, Y)` for tangent vectors given by frame coefficients.
    pub fn sigma_of(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        let mut out = DVector::zeros(self.ambient_dim());
        for a in 0..n {
            if x[a] == 0.0 {
                continue;
            }
            for b in 0..n {
                let w = x[a] * y[b];
                if w != 0.0 {
                    out += self.sigma(a, b) * w;
                }
            }
        }
        out
    }

    /// Largest entry of `[e | N]ᵀ g̃ [e | N] − I`.
    pub fn frame_defect(&self) -> f64 {
        let mut cols: Vec<DVector<f64>> =
            self.tangent.column_iter().map(|c| c.into_owned()).collect();
        cols.extend(self.normal.column_iter().map(|c| c.into_owned()));
        let all = DMatrix::from_columns(&cols);
        identity_defect(&(all.transpose() * &self.structure.metric * &all))
    }

    pub fn sigma_asymmetry(&self) -> f64 {
        let n = self.n();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                worst = worst.max(self.norm(&(self.sigma(a, b) - self.sigma(b, a))));
            }
        }
        worst
    }

    /// Largest `|g̃(σ(e_a, e_b), e_c)|`.
    pub fn sigma_tangency(&self) -> f64 {
        self.sigma
            .iter()
            .map(|s| self.frame_coords(s).amax())
            .fold(0.0, f64::max)
    }

    /// Tangential part plus the normal-frame reconstruction of σ against the
    /// full `∇̃_{∂a}∂b`, relative to `max(1, ‖∇̃‖)`.
    pub fn gauss_defect(&self) -> f64 {
        self.nabla
            .iter()
            .map(|v| {
                let recon = self.tangential_part(v) + &self.normal * self.normal_coords(v);
                self.norm(&(v - recon)) / self.norm(v).max(1.0)
            })
            .fold(0.0, f64::max)
    }

    /// `σ^r_ab = g̃(σ(e_a, e_b), N_r)` with `σ` read off `∇̃_{e_a}e_b` directly.
    pub fn sigma_components(&self, r: usize) -> DMatrix<f64> {
        let n = self.n();
        let nr = self.normal_vector(r);
        DMatrix::from_fn(n, n, |a, b| self.g(&self.nabla_frame[a * n + b], &nr))
    }

    /// `‖σ‖²` by frame contraction and by normal-component sums.
    pub fn sff_norm2(&self) -> (f64, f64) {
        let contraction: f64 = self.sigma.iter().map(|s| self.g(s, s)).sum();
        let components: f64 = (0..self.codim())
            .map(|r| self.sigma_components(r).iter().map(|x| x * x).sum::<f64>())
            .sum();
        (contraction, components)
    }

    pub fn mean_curvature(&self) -> DVector<f64> {
        let n = self.n();
        let mut h = DVector::zeros(self.ambient_dim());
        for a in 0..n {
            h += self.sigma(a, a);
        }
        h / n as f64
    }

    /// `max ‖σ(e_a, e_b) − δ_ab H‖`.
    pub fn umbilicity_defect(&self) -> f64 {
        let n = self.n();
        let h = self.mean_curvature();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                let mut d = self.sigma(a, b).clone();
                if a == b {
                    d -= &h;
                }
                worst = worst.max(self.norm(&d));
            }
        }
        worst
    }

    /// `(A_N)_ab = g̃(σ(e_a, e_b), N)`. `nvec` must be normal to within `tol`.
    pub fn shape_operator(&self, nvec: &DVector<f64>, tol: f64) -> Result<DMatrix<f64>> {
        let tangential = self.norm(&self.tangential_part(nvec));
        if tangential > tol * self.norm(nvec).max(1.0) {
            return Err(Error::NotNormal(tangential));
        }
        let n = self.n();
        Ok(DMatrix::from_fn(n, n, |a, b| {
            self.g(self.sigma(a, b), nvec)
        }))
    }
}
