//! Every numeric threshold used by the checks, in one record.
//!
//! Keys are the field names; `set` accepts the same names so the CLI can
//! override any of them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Gram matrix of the adapted frame against the identity.
    pub frame: f64,
    /// Symmetry and normality of σ.
    pub sigma: f64,
    /// Smallest singular value of the Jacobian, relative to max(1, largest).
    pub rank: f64,
    /// Eigenvalue clustering threshold for Q.
    pub cluster: f64,
    /// φ = T + F reconstruction and antisymmetry of T.
    pub tf: f64,
    /// Slack allowed on the [-1, 0] range of Q's spectrum.
    pub eigen_range: f64,
    /// Slant identities, slant-angle agreement and constancy.
    pub slant: f64,
    /// Ambient structure identities.
    pub structure: f64,
    /// Gauss split reconstruction.
    pub gauss: f64,
    /// Agreement of the two ‖σ‖² paths.
    pub sff_paths: f64,
    /// Rank threshold and φ-invariance of the normal split.
    pub normal_split: f64,
    /// Induced metric entries between different product factors.
    pub block: f64,
    /// Fiber block proportionality.
    pub warp_consistency: f64,
    /// Relative error of the recovered warping function.
    pub f_recovery: f64,
    /// Spread of f below which the product is declared trivial.
    pub f_constant: f64,
    /// |ξ(ln f)|.
    pub xi_ln_f: f64,
    /// Warped-product connection identity.
    pub bishop: f64,
    /// Lemma residuals (asserted only on Sasakian ambients).
    pub lemma: f64,
    /// Mixed totally geodesic threshold.
    pub mixed_tg: f64,
    /// Declared-factor alignment with the classified distributions.
    pub declaration: f64,
    /// Scenario golden expectations.
    pub expect: f64,
    /// Golden value of the inequality right-hand side.
    pub rhs: f64,
    /// Mutual orthogonality of classified blocks.
    pub block_orthogonality: f64,
    /// Largest admissible fraction of degenerate samples.
    pub degenerate_fraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            frame: 1e-10,
            sigma: 1e-9,
            rank: 1e-8,
            cluster: 1e-6,
            tf: 1e-10,
            eigen_range: 1e-9,
            slant: 1e-8,
            structure: 1e-7,
            gauss: 1e-9,
            sff_paths: 1e-8,
            normal_split: 1e-8,
            block: 1e-10,
            warp_consistency: 1e-10,
            f_recovery: 1e-6,
            f_constant: 1e-10,
            xi_ln_f: 1e-12,
            bishop: 1e-6,
            lemma: 1e-6,
            mixed_tg: 1e-8,
            declaration: 1e-8,
            expect: 1e-8,
            rhs: 1e-9,
            block_orthogonality: 1e-9,
            degenerate_fraction: 0.1,
        }
    }
}

impl Tolerances {
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let slot = match key.replace('-', "_").as_str() {
            "frame" => &mut self.frame,
            "sigma" => &mut self.sigma,
            "rank" => &mut self.rank,
            "cluster" => &mut self.cluster,
            "tf" => &mut self.tf,
            "eigen_range" => &mut self.eigen_range,
            "slant" => &mut self.slant,
            "structure" => &mut self.structure,
            "gauss" => &mut self.gauss,
            "sff_paths" => &mut self.sff_paths,
            "normal_split" => &mut self.normal_split,
            "block" => &mut self.block,
            "warp_consistency" => &mut self.warp_consistency,
            "f_recovery" => &mut self.f_recovery,
            "f_constant" => &mut self.f_constant,
            "xi_ln_f" => &mut self.xi_ln_f,
            "bishop" => &mut self.bishop,
            "lemma" => &mut self.lemma,
            "mixed_tg" => &mut self.mixed_tg,
            "declaration" => &mut self.declaration,
            "expect" => &mut self.expect,
            "rhs" => &mut self.rhs,
            "block_orthogonality" => &mut self.block_orthogonality,
            "degenerate_fraction" => &mut self.degenerate_fraction,
            _ => return Err(Error::UnknownTolerance(key.to_string())),
        };
        *slot = value;
        Ok(())
    }
}
