//! Scenario documents: JSON schema, built-in registry, overrides and
//! validation into ready-to-run objects.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ambient::{AmbientModel, InlineAmbient};
use crate::error::{Error, Result};
use crate::exprdsl::Expr;
use crate::immersion::Immersion;
use crate::skewcr::Label;
use crate::tolerances::Tolerances;
use crate::warped::{ProductDeclaration, WarpVerdict, XiLocation};

pub const DEFAULT_SAMPLES: usize = 100;
pub const DEFAULT_SEED: u64 = 42;

const BUILTINS: [(&str, &str); 9] = [
    ("ex31", include_str!("../../scenarios/ex31.json")),
    ("ex32", include_str!("../../scenarios/ex32.json")),
    ("ex61", include_str!("../../scenarios/ex61.json")),
    ("ex62", include_str!("../../scenarios/ex62.json")),
    (
        "sasakian5-ambient",
        include_str!("../../scenarios/sasakian5-ambient.json"),
    ),
    (
        "sasakian5-invariant-submanifold",
        include_str!("../../scenarios/sasakian5-invariant-submanifold.json"),
    ),
    (
        "unit-circle",
        include_str!("../../scenarios/unit-circle.json"),
    ),
    ("tg-plane", include_str!("../../scenarios/tg-plane.json")),
    (
        "sheared-nonproduct",
        include_str!("../../scenarios/sheared-nonproduct.json"),
    ),
];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTINS.iter().map(|(n, _)| *n).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub ambient: AmbientConfig,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    pub immersion: ImmersionConfig,
    #[serde(default)]
    pub product: Option<ProductConfig>,
    #[serde(default)]
    pub expect: ExpectConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// Exactly one of `builtin` (with `m`) or `inline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbientConfig {
    #[serde(default)]
    pub builtin: Option<String>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub inline: Option<InlineAmbient>,
    /// Whether the Sasakian identities are asserted (`true`) or expected to
    /// fail (`false`). Built-ins default to their own nature; inline
    /// ambients default to informational.
    #[serde(default)]
    pub expect_sasakian: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImmersionConfig {
    pub params: Vec<String>,
    pub components: Vec<String>,
    pub domain: BTreeMap<String, [f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductConfig {
    #[serde(default)]
    pub base_t: Vec<String>,
    #[serde(default)]
    pub base_theta: Vec<String>,
    pub fiber: Vec<String>,
    pub xi_location: XiLocation,
    #[serde(default)]
    pub warping: Option<String>,
}

/// Golden values. Expressions may use the scenario constants; the ones
/// evaluated per sample may also use the immersion parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectConfig {
    /// `(dim D, dim D^⊥, total dim D^θ)`.
    #[serde(default)]
    pub dims: Option<[usize; 3]>,
    #[serde(default)]
    pub xi_tangent: Option<bool>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub cos_slant_angle: Option<String>,
    /// `(dim φD^⊥, dim FD^θ, dim μ)`.
    #[serde(default)]
    pub normal_dims: Option<[usize; 3]>,
    #[serde(default)]
    pub warp_verdict: Option<String>,
    /// Per sample, one expression per parameter.
    #[serde(default)]
    pub induced_metric_diagonal: Option<Vec<String>>,
    /// Per sample.
    #[serde(default)]
    pub sff_norm2: Option<String>,
    /// Per sample.
    #[serde(default)]
    pub mean_curvature_norm: Option<String>,
    /// At the domain centre.
    #[serde(default)]
    pub rhs_statement_i: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default = "default_samples")]
    pub count: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            count: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
        }
    }
}

fn config_err(path: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        msg: msg.into(),
    }
}

impl ScenarioConfig {
    pub fn from_json_str(src: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(src);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(
                if path == "." { String::new() } else { path },
                e.into_inner().to_string(),
            )
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&src)
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let (_, src) = BUILTINS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::UnknownScenario(name.to_string()))?;
        Self::from_json_str(src)
    }

    /// A built-in name, or else a path to a JSON document.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if BUILTINS.iter().any(|(n, _)| *n == name_or_path) {
            return Self::builtin(name_or_path);
        }
        let path = Path::new(name_or_path);
        if path.is_file() {
            Self::from_path(path)
        } else {
            Err(Error::UnknownScenario(name_or_path.to_string()))
        }
    }

    /// Overrides an existing constant with a constant expression.
    pub fn set_constant(&mut self, name: &str, expr: &str) -> Result<()> {
        if !self.constants.contains_key(name) {
            return Err(config_err(
                format!("constants.{name}"),
                format!("scenario '{}' declares no constant '{name}'", self.name),
            ));
        }
        let no_params: [&str; 0] = [];
        let value = Expr::parse(expr, &no_params, &self.constants)?.eval(&[])?;
        self.constants.insert(name.to_string(), value);
        Ok(())
    }

    pub fn build(&self) -> Result<Scenario> {
        let ambient = Arc::new(self.build_ambient()?);
        let expect_sasakian = match (&self.ambient.expect_sasakian, &self.ambient.builtin) {
            (Some(b), _) => Some(*b),
            (None, Some(kind)) => Some(kind == "sasakian"),
            (None, None) => None,
        };

        let im = &self.immersion;
        let params = &im.params;
        if params.is_empty() {
            return Err(config_err(
                "immersion.params",
                "at least one parameter is required",
            ));
        }
        for (i, p) in params.iter().enumerate() {
            if params[..i].contains(p) {
                return Err(config_err(
                    format!("immersion.params[{i}]"),
                    format!("duplicate '{p}'"),
                ));
            }
            if self.constants.contains_key(p) {
                return Err(config_err(
                    format!("immersion.params[{i}]"),
                    format!("'{p}' is also a constant"),
                ));
            }
        }
        if im.components.len() != ambient.dim() {
            return Err(config_err(
                "immersion.components",
                format!(
                    "expected {} components, got {}",
                    ambient.dim(),
                    im.components.len()
                ),
            ));
        }
        let components = im
            .components
            .iter()
            .enumerate()
            .map(|(i, s)| self.parse(s, params, format!("immersion.components[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        if let Some(extra) = im.domain.keys().find(|k| !params.contains(k)) {
            return Err(config_err(
                format!("immersion.domain.{extra}"),
                "not a parameter",
            ));
        }
        let mut domain = Vec::with_capacity(params.len());
        for p in params {
            let [lo, hi] = *im
                .domain
                .get(p)
                .ok_or_else(|| config_err(format!("immersion.domain.{p}"), "missing interval"))?;
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(config_err(
                    format!("immersion.domain.{p}"),
                    format!("invalid interval [{lo}, {hi}]"),
                ));
            }
            domain.push((lo, hi));
        }
        let immersion = Immersion::new(params.clone(), domain, components, ambient.clone())?;

        let product = self
            .product
            .as_ref()
            .map(|pc| -> Result<ProductDeclaration> {
                let warping = pc
                    .warping
                    .as_ref()
                    .map(|s| self.parse(s, params, "product.warping".into()))
                    .transpose()?;
                ProductDeclaration::new(
                    params,
                    &pc.base_t,
                    &pc.base_theta,
                    &pc.fiber,
                    pc.xi_location,
                    warping,
                )
                .map_err(|e| config_err("product", e.to_string()))
            })
            .transpose()?;

        let expect = self.build_expect(params)?;
        if product.is_none() {
            for (key, present) in [
                ("expect.warp_verdict", expect.warp_verdict.is_some()),
                ("expect.rhs_statement_i", expect.rhs_statement_i.is_some()),
            ] {
                if present {
                    return Err(config_err(key, "requires a 'product' declaration"));
                }
            }
        }
        if self.sampling.count == 0 {
            return Err(config_err("sampling.count", "must be at least 1"));
        }

        Ok(Scenario {
            name: self.name.clone(),
            description: self.description.clone(),
            ambient,
            expect_sasakian,
            constants: self.constants.clone(),
            immersion,
            product,
            expect,
            samples: self.sampling.count,
            seed: self.sampling.seed,
            tolerances: self.tolerances.clone(),
        })
    }

    fn parse(&self, src: &str, params: &[String], path: String) -> Result<Expr> {
        Expr::parse(src, params, &self.constants).map_err(|e| config_err(path, e.to_string()))
    }

    fn build_ambient(&self) -> Result<AmbientModel> {
        let a = &self.ambient;
        match (&a.builtin, &a.inline) {
            (Some(kind), None) => {
                let m =
                    a.m.ok_or_else(|| config_err("ambient.m", "required with 'builtin'"))?;
                if m == 0 {
                    return Err(config_err("ambient.m", "must be at least 1"));
                }
                match kind.as_str() {
                    "flat" => Ok(AmbientModel::flat(m)),
                    "sasakian" => Ok(AmbientModel::sasakian(m)),
                    other => Err(config_err(
                        "ambient.builtin",
                        format!("unknown model '{other}' (expected 'flat' or 'sasakian')"),
                    )),
                }
            }
            (None, Some(inline)) => {
                if a.m.is_some() {
                    return Err(config_err("ambient.m", "only allowed with 'builtin'"));
                }
                AmbientModel::from_inline(format!("{}-ambient", self.name), inline, &self.constants)
                    .map_err(|e| config_err("ambient.inline", e.to_string()))
            }
            _ => Err(config_err(
                "ambient",
                "exactly one of 'builtin' or 'inline' is required",
            )),
        }
    }

    fn build_expect(&self, params: &[String]) -> Result<Expectations> {
        let e = &self.expect;
        let no_params: [String; 0] = [];
        let constant = |s: &Option<String>, key: &str| -> Result<Option<f64>> {
            s.as_ref()
                .map(|src| {
                    let path = format!("expect.{key}");
                    self.parse(src, &no_params, path.clone())?
                        .eval(&[])
                        .map_err(|err| config_err(path, err.to_string()))
                })
                .transpose()
        };
        let per_sample = |s: &Option<String>, key: &str| -> Result<Option<Expr>> {
            s.as_ref()
                .map(|src| self.parse(src, params, format!("expect.{key}")))
                .transpose()
        };
        let label = e
            .label
            .as_ref()
            .map(|l| {
                Label::parse(l)
                    .ok_or_else(|| config_err("expect.label", format!("unknown label '{l}'")))
            })
            .transpose()?;
        let warp_verdict = e
            .warp_verdict
            .as_ref()
            .map(|v| {
                [
                    WarpVerdict::NotWarped,
                    WarpVerdict::RiemannianProduct,
                    WarpVerdict::Warped,
                ]
                .into_iter()
                .find(|w| w.as_str() == v)
                .ok_or_else(|| config_err("expect.warp_verdict", format!("unknown verdict '{v}'")))
            })
            .transpose()?;
        let induced_metric_diagonal = e
            .induced_metric_diagonal
            .as_ref()
            .map(|list| {
                if list.len() != params.len() {
                    return Err(config_err(
                        "expect.induced_metric_diagonal",
                        format!("expected {} entries, got {}", params.len(), list.len()),
                    ));
                }
                list.iter()
                    .enumerate()
                    .map(|(i, s)| {
                        self.parse(s, params, format!("expect.induced_metric_diagonal[{i}]"))
                    })
                    .collect()
            })
            .transpose()?;
        let cos_slant_angle = constant(&e.cos_slant_angle, "cos_slant_angle")?;
        if let Some(c) = cos_slant_angle {
            if !(0.0..=1.0).contains(&c) {
                return Err(config_err(
                    "expect.cos_slant_angle",
                    format!("{c} is not in [0, 1]"),
                ));
            }
        }
        Ok(Expectations {
            dims: e.dims,
            xi_tangent: e.xi_tangent,
            label,
            slant_angle: cos_slant_angle.map(f64::acos),
            normal_dims: e.normal_dims,
            warp_verdict,
            induced_metric_diagonal,
            sff_norm2: per_sample(&e.sff_norm2, "sff_norm2")?,
            mean_curvature_norm: per_sample(&e.mean_curvature_norm, "mean_curvature_norm")?,
            rhs_statement_i: constant(&e.rhs_statement_i, "rhs_statement_i")?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Expectations {
    pub dims: Option<[usize; 3]>,
    pub xi_tangent: Option<bool>,
    pub label: Option<Label>,
    /// Radians.
    pub slant_angle: Option<f64>,
    pub normal_dims: Option<[usize; 3]>,
    pub warp_verdict: Option<WarpVerdict>,
    pub induced_metric_diagonal: Option<Vec<Expr>>,
    pub sff_norm2: Option<Expr>,
    pub mean_curvature_norm: Option<Expr>,
    pub rhs_statement_i: Option<f64>,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub ambient: Arc<AmbientModel>,
    pub expect_sasakian: Option<bool>,
    pub constants: BTreeMap<String, f64>,
    pub immersion: Immersion,
    pub product: Option<ProductDeclaration>,
    pub expect: Expectations,
    pub samples: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
}
