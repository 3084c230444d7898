//! Ambient almost contact metric manifolds on a single global chart.
//!
//! A model stores the metric `g`, the (1,1)-tensor `φ`, the Reeb field `ξ`
//! and the 1-form `η` as expressions in the chart coordinates. Everything
//! downstream asks for a [`StructureAt`] snapshot (values plus first
//! coordinate derivatives) and works from that.
//!
//! Index conventions: `phi[(A, B)] = φ^A_B`, so `φX = phi * X`;
//! `dmetric[D][(A, B)] = ∂_D g_AB`; `christoffel.gamma[C][(A, B)] = Γ^C_AB`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exprdsl::Expr;
use crate::linalg::{inner, max_abs, norm};

/// Vector field given by component expressions in the chart coordinates.
pub type VectorField = Vec<Expr>;

#[derive(Debug, Clone)]
pub struct AmbientModel {
    name: String,
    m: usize,
    coords: Vec<String>,
    metric: Vec<Expr>,
    phi: Vec<Expr>,
    xi: Vec<Expr>,
    eta: Vec<Expr>,
}

/// Expression-string form of a model, as it appears in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineAmbient {
    pub coords: Vec<String>,
    pub metric: Vec<Vec<String>>,
    pub phi: Vec<Vec<String>>,
    pub xi: Vec<String>,
    pub eta: Vec<String>,
}

/// Levi-Civita connection coefficients at a point.
#[derive(Debug, Clone)]
pub struct Christoffel {
    pub gamma: Vec<DMatrix<f64>>,
}

impl Christoffel {
    /// `Γ^C_AB u^A v^B`.
    pub fn contract(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.gamma.len(),
            self.gamma.iter().map(|gc| u.dot(&(gc * v))),
        )
    }

    pub fn max_asymmetry(&self) -> f64 {
        self.gamma
            .iter()
            .map(|gc| max_abs(&(gc - gc.transpose())))
            .fold(0.0, f64::max)
    }
}

/// Structure tensors and their first derivatives at one chart point.
#[derive(Debug, Clone)]
pub struct StructureAt {
    pub x: DVector<f64>,
    pub metric: DMatrix<f64>,
    pub metric_inv: DMatrix<f64>,
    pub dmetric: Vec<DMatrix<f64>>,
    pub phi: DMatrix<f64>,
    pub dphi: Vec<DMatrix<f64>>,
    pub xi: DVector<f64>,
    /// `dxi[(C, D)] = ∂_D ξ^C`
    pub dxi: DMatrix<f64>,
    pub eta: DVector<f64>,
    /// `deta[(A, D)] = ∂_D η_A`
    pub deta: DMatrix<f64>,
    pub christoffel: Christoffel,
}

impl StructureAt {
    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn g(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        inner(&self.metric, a, b)
    }

    pub fn norm(&self, a: &DVector<f64>) -> f64 {
        norm(&self.metric, a)
    }

    pub fn phi_of(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.phi * v
    }

    pub fn eta_of(&self, v: &DVector<f64>) -> f64 {
        self.eta.dot(v)
    }

    /// `U^A ∂_A(φ V)` for a coordinate-constant field `V`.
    fn phi_directional(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for (a, dp) in self.dphi.iter().enumerate() {
            if u[a] != 0.0 {
                out += dp * v * u[a];
            }
        }
        out
    }

    /// `dη(X, Y) = ½ X^A Y^B (∂_A η_B − ∂_B η_A)`.
    pub fn d_eta(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += x[a] * y[b] * (self.deta[(b, a)] - self.deta[(a, b)]);
            }
        }
        0.5 * s
    }

    /// `(∇̃_X φ) Y` for coordinate-constant `X`, `Y`.
    pub fn nabla_phi(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let phi_y = self.phi_of(y);
        let nabla_phi_y = self.phi_directional(x, y) + self.christoffel.contract(x, &phi_y);
        let nabla_y = self.christoffel.contract(x, y);
        nabla_phi_y - self.phi_of(&nabla_y)
    }

    /// `∇̃_X ξ` for coordinate-constant `X`.
    pub fn nabla_xi(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.dxi * x + self.christoffel.contract(x, &self.xi)
    }

    /// `N_φ(X, Y) = [φ,φ](X, Y) + 2 dη(X, Y) ξ` for coordinate-constant fields.
    pub fn normality_tensor(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let phi_x = self.phi_of(x);
        let phi_y = self.phi_of(y);
        // [φX, φY] − φ[φX, Y] − φ[X, φY]; φ²[X, Y] vanishes.
        let bracket = self.phi_directional(&phi_x, y) - self.phi_directional(&phi_y, x);
        let t1 = self.phi_of(&self.phi_directional(y, x));
        let t2 = self.phi_of(&self.phi_directional(x, y));
        bracket + t1 - t2 + &self.xi * (2.0 * self.d_eta(x, y))
    }
}

/// Maximum defects of the structure identities over a sample set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureResiduals {
    pub almost_contact: f64,
    pub compatibility: f64,
    pub contact_metric: f64,
    pub normality: f64,
    pub sasakian: f64,
    pub xi_derivative: f64,
}

impl StructureResiduals {
    fn zero() -> Self {
        StructureResiduals {
            almost_contact: 0.0,
            compatibility: 0.0,
            contact_metric: 0.0,
            normality: 0.0,
            sasakian: 0.0,
            xi_derivative: 0.0,
        }
    }

    fn merge(&mut self, o: &StructureResiduals) {
        self.almost_contact = self.almost_contact.max(o.almost_contact);
        self.compatibility = self.compatibility.max(o.compatibility);
        self.contact_metric = self.contact_metric.max(o.contact_metric);
        self.normality = self.normality.max(o.normality);
        self.sasakian = self.sasakian.max(o.sasakian);
        self.xi_derivative = self.xi_derivative.max(o.xi_derivative);
    }

    /// Almost contact metric structure (φ, ξ, η, g) holds.
    pub fn is_almost_contact_metric(&self, tol: f64) -> bool {
        self.almost_contact < tol && self.compatibility < tol
    }

    /// Sasakian as characterised by `(∇̃_X φ) Y = g(X, Y) ξ − η(Y) X`.
    pub fn is_sasakian(&self, tol: f64) -> bool {
        self.is_almost_contact_metric(tol) && self.sasakian < tol
    }
}

fn coord_names(m: usize, last: &str) -> Vec<String> {
    (1..=m)
        .map(|i| format!("x{i}"))
        .chain((1..=m).map(|i| format!("y{i}")))
        .chain(std::iter::once(last.to_string()))
        .collect()
}

impl AmbientModel {
    pub fn new(
        name: impl Into<String>,
        coords: Vec<String>,
        metric: Vec<Expr>,
        phi: Vec<Expr>,
        xi: Vec<Expr>,
        eta: Vec<Expr>,
    ) -> Result<Self> {
        let n = coords.len();
        if n < 3 || n.is_multiple_of(2) {
            return Err(Error::Ambient(format!(
                "dimension must be odd and at least 3, got {n}"
            )));
        }
        if metric.len() != n * n || phi.len() != n * n || xi.len() != n || eta.len() != n {
            return Err(Error::Ambient(
                "tensor shapes do not match the coordinates".into(),
            ));
        }
        for e in metric.iter().chain(&phi).chain(&xi).chain(&eta) {
            if e.params() != coords.as_slice() {
                return Err(Error::Ambient(
                    "tensor expressions must be declared over the chart coordinates".into(),
                ));
            }
        }
        Ok(AmbientModel {
            name: name.into(),
            m: (n - 1) / 2,
            coords,
            metric,
            phi,
            xi,
            eta,
        })
    }

    /// Builds a model from expression strings.
    pub fn from_inline(
        name: impl Into<String>,
        spec: &InlineAmbient,
        constants: &BTreeMap<String, f64>,
    ) -> Result<Self> {
        let n = spec.coords.len();
        let parse = |s: &String| Expr::parse(s, &spec.coords, constants).map_err(Error::from);
        let square = |rows: &Vec<Vec<String>>, what: &str| -> Result<Vec<Expr>> {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Error::Ambient(format!("{what} must be {n}x{n}")));
            }
            rows.iter().flatten().map(parse).collect()
        };
        let metric = square(&spec.metric, "metric")?;
        let phi = square(&spec.phi, "phi")?;
        let xi = spec.xi.iter().map(parse).collect::<Result<Vec<_>>>()?;
        let eta = spec.eta.iter().map(parse).collect::<Result<Vec<_>>>()?;
        AmbientModel::new(name, spec.coords.clone(), metric, phi, xi, eta)
    }

    pub fn to_inline(&self) -> InlineAmbient {
        let n = self.dim();
        let rows = |v: &Vec<Expr>| -> Vec<Vec<String>> {
            (0..n)
                .map(|i| (0..n).map(|j| v[i * n + j].to_string()).collect())
                .collect()
        };
        InlineAmbient {
            coords: self.coords.clone(),
            metric: rows(&self.metric),
            phi: rows(&self.phi),
            xi: self.xi.iter().map(|e| e.to_string()).collect(),
            eta: self.eta.iter().map(|e| e.to_string()).collect(),
        }
    }

    fn from_strings(
        name: String,
        coords: Vec<String>,
        metric: Vec<Vec<String>>,
        phi: Vec<Vec<String>>,
        xi: Vec<String>,
        eta: Vec<String>,
    ) -> Self {
        let spec = InlineAmbient {
            coords,
            metric,
            phi,
            xi,
            eta,
        };
        AmbientModel::from_inline(name, &spec, &BTreeMap::new()).expect("built-in model is valid")
    }

    /// Euclidean `ℝ^{2m+1}` with coordinates `(x_1..x_m, y_1..y_m, t)`,
    /// `φ∂x_i = −∂y_i`, `φ∂y_i = ∂x_i`, `ξ = ∂t`, `η = dt`.
    pub fn flat(m: usize) -> Self {
        assert!(m >= 1, "flat model needs m >= 1");
        let n = 2 * m + 1;
        let coords = coord_names(m, "t");
        let mut metric = vec![vec!["0".to_string(); n]; n];
        let mut phi = vec![vec!["0".to_string(); n]; n];
        for (a, row) in metric.iter_mut().enumerate() {
            row[a] = "1".into();
        }
        for i in 0..m {
            phi[m + i][i] = "-1".into();
            phi[i][m + i] = "1".into();
        }
        let mut xi = vec!["0".to_string(); n];
        xi[n - 1] = "1".into();
        let eta = xi.clone();
        Self::from_strings(format!("flat({m})"), coords, metric, phi, xi, eta)
    }

    /// Standard Sasakian `ℝ^{2m+1}` with coordinates `(x_i, y_i, z)`:
    /// `η = ½(dz − Σ y_i dx_i)`, `ξ = 2∂z`, `g = η⊗η + ¼Σ(dx_i² + dy_i²)`,
    /// `φ∂x_i = −∂y_i`, `φ∂y_i = ∂x_i + y_i ∂z`, `φ∂z = 0`.
    pub fn sasakian(m: usize) -> Self {
        assert!(m >= 1, "Sasakian model needs m >= 1");
        let n = 2 * m + 1;
        let z = n - 1;
        let coords = coord_names(m, "z");
        let eta_src = |a: usize| -> Option<String> {
            if a < m {
                Some(format!("(-y{}/2)", a + 1))
            } else if a == z {
                Some("(1/2)".into())
            } else {
                None
            }
        };
        let mut metric = vec![vec!["0".to_string(); n]; n];
        for (a, row) in metric.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                let mut terms = Vec::new();
                if let (Some(ea), Some(eb)) = (eta_src(a), eta_src(b)) {
                    terms.push(format!("{ea}*{eb}"));
                }
                if a == b && a != z {
                    terms.push("1/4".into());
                }
                if !terms.is_empty() {
                    *cell = terms.join(" + ");
                }
            }
        }
        let mut phi = vec![vec!["0".to_string(); n]; n];
        for i in 0..m {
            phi[m + i][i] = "-1".into();
            phi[i][m + i] = "1".into();
            phi[z][m + i] = format!("y{}", i + 1);
        }
        let mut xi = vec!["0".to_string(); n];
        xi[z] = "2".into();
        let eta = (0..n)
            .map(|a| eta_src(a).unwrap_or_else(|| "0".into()))
            .collect();
        Self::from_strings(format!("sasakian({m})"), coords, metric, phi, xi, eta)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn xi_field(&self) -> &VectorField {
        &self.xi
    }

    fn eval_square(&self, exprs: &[Expr], x: &[f64]) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let n = self.dim();
        let mut val = DMatrix::zeros(n, n);
        let mut der = vec![DMatrix::zeros(n, n); n];
        for a in 0..n {
            for b in 0..n {
                let e = &exprs[a * n + b];
                let (v, g) = e.value_and_gradient(x)?;
                val[(a, b)] = v;
                if !e.is_constant() {
                    for (d, gd) in g.iter().enumerate() {
                        der[d][(a, b)] = *gd;
                    }
                }
            }
        }
        Ok((val, der))
    }

    fn eval_vector(&self, exprs: &[Expr], x: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = self.dim();
        let mut val = DVector::zeros(n);
        let mut der = DMatrix::zeros(n, n);
        for (a, e) in exprs.iter().enumerate() {
            let (v, g) = e.value_and_gradient(x)?;
            val[a] = v;
            for (d, gd) in g.iter().enumerate() {
                der[(a, d)] = *gd;
            }
        }
        Ok((val, der))
    }

    fn metric_with_inverse(
        &self,
        x: &[f64],
    ) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let (metric, dmetric) = self.eval_square(&self.metric, x)?;
        let sym = (&metric + metric.transpose()) * 0.5;
        let chol = sym
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SingularMetric(x.to_vec()))?;
        Ok((sym, chol.inverse(), dmetric))
    }

    fn christoffel_from(inv: &DMatrix<f64>, dmetric: &[DMatrix<f64>]) -> Christoffel {
        let n = inv.nrows();
        // lowered[D][(A, B)] = ½(∂_A g_BD + ∂_B g_AD − ∂_D g_AB)
        let mut lowered = vec![DMatrix::zeros(n, n); n];
        for (d, low) in lowered.iter_mut().enumerate() {
            for a in 0..n {
                for b in 0..n {
                    low[(a, b)] =
                        0.5 * (dmetric[a][(b, d)] + dmetric[b][(a, d)] - dmetric[d][(a, b)]);
                }
            }
        }
        let gamma = (0..n)
            .map(|c| {
                let mut gc = DMatrix::zeros(n, n);
                for (d, low) in lowered.iter().enumerate() {
                    let w = inv[(c, d)];
                    if w != 0.0 {
                        gc += low * w;
                    }
                }
                gc
            })
            .collect();
        Christoffel { gamma }
    }

    /// Levi-Civita coefficients `Γ^C_AB` at chart point `x`.
    pub fn christoffel(&self, x: &[f64]) -> Result<Christoffel> {
        let (_, inv, dmetric) = self.metric_with_inverse(x)?;
        Ok(Self::christoffel_from(&inv, &dmetric))
    }

    pub fn structure_at(&self, x: &[f64]) -> Result<StructureAt> {
        if x.len() != self.dim() {
            return Err(Error::Ambient(format!(
                "point has {} coordinates, model has {}",
                x.len(),
                self.dim()
            )));
        }
        let (metric, metric_inv, dmetric) = self.metric_with_inverse(x)?;
        let christoffel = Self::christoffel_from(&metric_inv, &dmetric);
        let (phi, dphi) = self.eval_square(&self.phi, x)?;
        let (xi, dxi) = self.eval_vector(&self.xi, x)?;
        let (eta, deta) = self.eval_vector(&self.eta, x)?;
        Ok(StructureAt {
            x: DVector::from_column_slice(x),
            metric,
            metric_inv,
            dmetric,
            phi,
            dphi,
            xi,
            dxi,
            eta,
            deta,
            christoffel,
        })
    }

    /// `(∇̃_X Y)^C = X^A ∂_A Y^C + Γ^C_AB X^A Y^B` at `x`.
    pub fn covariant_derivative(
        &self,
        xf: &VectorField,
        yf: &VectorField,
        x: &[f64],
    ) -> Result<DVector<f64>> {
        let n = self.dim();
        if xf.len() != n || yf.len() != n {
            return Err(Error::Ambient("vector field has wrong arity".into()));
        }
        let gamma = self.christoffel(x)?;
        let xv = DVector::from_iterator(
            n,
            xf.iter()
                .map(|e| e.eval(x))
                .collect::<std::result::Result<Vec<_>, _>>()?,
        );
        let mut yv = DVector::zeros(n);
        let mut dy = DMatrix::zeros(n, n);
        for (c, e) in yf.iter().enumerate() {
            let (v, g) = e.value_and_gradient(x)?;
            yv[c] = v;
            for (a, ga) in g.iter().enumerate() {
                dy[(c, a)] = *ga;
            }
        }
        Ok(dy * &xv + gamma.contract(&xv, &yv))
    }

    /// Residuals of every structure identity at the given chart points.
    ///
    /// Test directions are all coordinate pairs `(∂_A, ∂_A)` plus
    /// `random_pairs` seeded random pairs per point, each normalised in `g`.
    pub fn check_structure(
        &self,
        points: &[Vec<f64>],
        seed: u64,
        random_pairs: usize,
    ) -> Result<StructureResiduals> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = StructureResiduals::zero();
        let n = self.dim();
        for x in points {
            let s = self.structure_at(x)?;
            let mut pairs = Vec::with_capacity(n + random_pairs);
            for a in 0..n {
                let mut e = DVector::zeros(n);
                e[a] = 1.0;
                pairs.push((e.clone(), e));
            }
            for _ in 0..random_pairs {
                let u = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
                let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
                pairs.push((u, v));
            }
            total.merge(&point_residuals(&s, &pairs));
        }
        Ok(total)
    }
}

fn point_residuals(s: &StructureAt, pairs: &[(DVector<f64>, DVector<f64>)]) -> StructureResiduals {
    let n = s.dim();
    let id = DMatrix::<f64>::identity(n, n);
    let phi2 = &s.phi * &s.phi + &id - &s.xi * s.eta.transpose();
    let almost_contact = max_abs(&phi2)
        .max((s.eta.dot(&s.xi) - 1.0).abs())
        .max((&s.phi * &s.xi).amax())
        .max((s.eta.transpose() * &s.phi).amax());
    let mut r = StructureResiduals {
        almost_contact,
        ..StructureResiduals::zero()
    };
    for (u, v) in pairs {
        let x = u / s.norm(u);
        let y = v / s.norm(v);
        let phx = s.phi_of(&x);
        let phy = s.phi_of(&y);
        let compat = s.g(&phx, &phy) - s.g(&x, &y) + s.eta_of(&x) * s.eta_of(&y);
        r.compatibility = r.compatibility.max(compat.abs());
        let fundamental = s.g(&x, &phy);
        r.contact_metric = r.contact_metric.max((fundamental - s.d_eta(&x, &y)).abs());
        r.normality = r.normality.max(s.norm(&s.normality_tensor(&x, &y)));
        let sas = s.nabla_phi(&x, &y) - &s.xi * s.g(&x, &y) + &x * s.eta_of(&y);
        r.sasakian = r.sasakian.max(s.norm(&sas));
        r.xi_derivative = r.xi_derivative.max(s.norm(&(s.nabla_xi(&x) + phx)));
    }
    r
}
