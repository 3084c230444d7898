//! Splitting `φ|TM = T + F` and the eigen-classification of `Q = T²`.
//!
//! All tangent vectors here are coefficient vectors in the sample's
//! orthonormal tangent frame; normal vectors are coefficients in its normal
//! frame. Both frames are orthonormal, so Euclidean dot products on
//! coefficients equal `g̃`.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::immersion::GeometrySample;
use crate::linalg::{complete_basis, gram_schmidt, identity_defect};
use crate::tolerances::Tolerances;

/// Tangential and normal parts of `φ` on the tangent frame.
#[derive(Debug, Clone)]
pub struct TFPair {
    /// `T[(a, b)] = g̃(φe_b, e_a)`.
    pub t: DMatrix<f64>,
    /// `F[(r, b)] = g̃(φe_b, N_r)`.
    pub f: DMatrix<f64>,
    /// Tangent-frame coefficients of the tangential part of `ξ`.
    pub xi_coeffs: DVector<f64>,
    /// Length of the normal part of `ξ`.
    pub xi_normal: f64,
    pub xi_tangent: bool,
}

pub fn tf_decompose(sample: &GeometrySample, tol: &Tolerances) -> TFPair {
    let phi_frame = &sample.structure.phi * &sample.tangent;
    let g_phi = &sample.structure.metric * &phi_frame;
    let t = sample.tangent.transpose() * &g_phi;
    let f = sample.normal.transpose() * &g_phi;
    let xi = &sample.structure.xi;
    let xi_coeffs = sample.frame_coords(xi);
    let xi_normal = sample.norm(&sample.normal_part(xi));
    TFPair {
        t,
        f,
        xi_coeffs,
        xi_normal,
        xi_tangent: xi_normal < tol.rank * sample.norm(xi).max(1.0),
    }
}

impl TFPair {
    pub fn n(&self) -> usize {
        self.t.ncols()
    }

    /// `max_b ‖φe_b − Te_b − Fe_b‖`.
    pub fn reconstruction_defect(&self, sample: &GeometrySample) -> f64 {
        (0..self.n())
            .map(|b| {
                let phi = sample.structure.phi_of(&sample.frame_vector(b));
                let recon = &sample.tangent * self.t.column(b) + &sample.normal * self.f.column(b);
                sample.norm(&(phi - recon))
            })
            .fold(0.0, f64::max)
    }

    pub fn antisymmetry_defect(&self) -> f64 {
        (&self.t + self.t.transpose()).amax()
    }

    /// `max(‖Tξ‖, ‖Fξ‖)`; zero when `ξ` is not tangent.
    pub fn xi_defect(&self) -> f64 {
        if !self.xi_tangent {
            return 0.0;
        }
        (&self.t * &self.xi_coeffs)
            .norm()
            .max((&self.f * &self.xi_coeffs).norm())
    }

    pub fn q(&self) -> DMatrix<f64> {
        &self.t * &self.t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    Invariant,
    AntiInvariant,
    Slant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Label {
    #[serde(rename = "invariant")]
    Invariant,
    #[serde(rename = "anti-invariant")]
    AntiInvariant,
    #[serde(rename = "slant")]
    Slant,
    #[serde(rename = "contact CR")]
    ContactCr,
    #[serde(rename = "semi-slant")]
    SemiSlant,
    #[serde(rename = "pseudo-slant")]
    PseudoSlant,
    #[serde(rename = "skew CR order 1")]
    SkewCrOrder1,
    #[serde(rename = "generic")]
    Generic,
}

impl Label {
    pub const ALL: [Label; 8] = [
        Label::Invariant,
        Label::AntiInvariant,
        Label::Slant,
        Label::ContactCr,
        Label::SemiSlant,
        Label::PseudoSlant,
        Label::SkewCrOrder1,
        Label::Generic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Invariant => "invariant",
            Label::AntiInvariant => "anti-invariant",
            Label::Slant => "slant",
            Label::ContactCr => "contact CR",
            Label::SemiSlant => "semi-slant",
            Label::PseudoSlant => "pseudo-slant",
            Label::SkewCrOrder1 => "skew CR order 1",
            Label::Generic => "generic",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        Label::ALL.into_iter().find(|l| l.as_str() == s)
    }

    /// Label from the invariant / anti-invariant dimensions and the number
    /// of distinct slant blocks.
    pub fn from_dims(d: usize, d_perp: usize, slant_blocks: usize) -> Label {
        match (slant_blocks, d > 0, d_perp > 0) {
            (0, _, false) => Label::Invariant,
            (0, false, true) => Label::AntiInvariant,
            (0, true, true) => Label::ContactCr,
            (1, false, false) => Label::Slant,
            (1, true, false) => Label::SemiSlant,
            (1, false, true) => Label::PseudoSlant,
            (1, true, true) => Label::SkewCrOrder1,
            _ => Label::Generic,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One eigenspace of `Q` on `⟨ξ⟩^⊥`.
#[derive(Debug, Clone)]
pub struct Block {
    pub kind: BlockKind,
    /// Cluster mean of the eigenvalues, in `[-1, 0]`.
    pub eigenvalue: f64,
    /// Radians; exactly 0 for invariant and π/2 for anti-invariant blocks.
    pub angle: f64,
    /// Orthonormal tangent-frame coefficients, one column per vector.
    pub basis: DMatrix<f64>,
}

impl Block {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn cos2(&self) -> f64 {
        self.angle.cos().powi(2)
    }

    pub fn sin2(&self) -> f64 {
        self.angle.sin().powi(2)
    }

    fn vectors(&self) -> impl Iterator<Item = DVector<f64>> + '_ {
        self.basis.column_iter().map(|c| c.into_owned())
    }
}

#[derive(Debug, Clone)]
pub struct DistributionSplit {
    /// Ordered by eigenvalue: invariant first, anti-invariant last.
    pub blocks: Vec<Block>,
    /// Unit tangent-frame direction of `ξ` when tangent.
    pub xi: Option<DVector<f64>>,
    pub label: Label,
    /// Raw eigenvalues of `Q` on `⟨ξ⟩^⊥`, ascending.
    pub eigenvalues: Vec<f64>,
}

impl DistributionSplit {
    pub fn n(&self) -> usize {
        self.blocks.iter().map(Block::dim).sum::<usize>() + usize::from(self.xi.is_some())
    }

    fn kind_dim(&self, kind: BlockKind) -> usize {
        self.blocks
            .iter()
            .filter(|b| b.kind == kind)
            .map(Block::dim)
            .sum()
    }

    pub fn invariant_dim(&self) -> usize {
        self.kind_dim(BlockKind::Invariant)
    }

    pub fn anti_invariant_dim(&self) -> usize {
        self.kind_dim(BlockKind::AntiInvariant)
    }

    pub fn slant_blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(|b| b.kind == BlockKind::Slant)
    }

    pub fn slant_dims(&self) -> Vec<usize> {
        self.slant_blocks().map(Block::dim).collect()
    }

    pub fn slant_angles(&self) -> Vec<f64> {
        self.slant_blocks().map(|b| b.angle).collect()
    }

    pub fn block(&self, kind: BlockKind) -> Option<&Block> {
        self.blocks.iter().find(|b| b.kind == kind)
    }

    /// Columns of every block of `kind`, stacked.
    pub fn basis_of(&self, kind: BlockKind) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = self
            .blocks
            .iter()
            .filter(|b| b.kind == kind)
            .flat_map(|b| b.vectors())
            .collect();
        stack(self.n_frame(), cols)
    }

    fn n_frame(&self) -> usize {
        self.blocks
            .first()
            .map(|b| b.basis.nrows())
            .or_else(|| self.xi.as_ref().map(|x| x.len()))
            .unwrap_or(0)
    }

    /// Every block vector followed by `ξ`, as one matrix.
    pub fn all_vectors(&self) -> DMatrix<f64> {
        let mut cols: Vec<DVector<f64>> = self.blocks.iter().flat_map(|b| b.vectors()).collect();
        cols.extend(self.xi.clone());
        stack(self.n_frame(), cols)
    }

    /// Gram matrix of all block vectors and `ξ` against the identity.
    pub fn orthogonality_defect(&self) -> f64 {
        let all = self.all_vectors();
        identity_defect(&(all.transpose() * &all))
    }

    /// Slant blocks whose dimension is odd.
    pub fn odd_slant_blocks(&self) -> usize {
        self.slant_blocks().filter(|b| b.dim() % 2 == 1).count()
    }

    /// `max ‖T b‖` over anti-invariant basis vectors.
    pub fn anti_invariant_t_defect(&self, tf: &TFPair) -> f64 {
        self.blocks
            .iter()
            .filter(|b| b.kind == BlockKind::AntiInvariant)
            .flat_map(|b| b.vectors())
            .map(|v| (&tf.t * v).norm())
            .fold(0.0, f64::max)
    }

    /// Agreement of block angles with `‖Te‖ / ‖φe‖` evaluated per basis
    /// vector. Slant blocks compare angles; the others compare `cos²` since
    /// the angle is ill-conditioned at 0 and π/2.
    pub fn wirtinger_defect(&self, sample: &GeometrySample, tf: &TFPair) -> f64 {
        let mut worst: f64 = 0.0;
        for block in &self.blocks {
            for v in block.vectors() {
                let phi = sample.structure.phi_of(&sample.from_frame(&v));
                let ratio = ((&tf.t * &v).norm() / sample.norm(&phi)).min(1.0);
                let d = match block.kind {
                    BlockKind::Slant => (ratio.acos() - block.angle).abs(),
                    _ => (ratio * ratio - block.cos2()).abs(),
                };
                worst = worst.max(d);
            }
        }
        worst
    }
}

fn stack(rows: usize, cols: Vec<DVector<f64>>) -> DMatrix<f64> {
    if cols.is_empty() {
        DMatrix::zeros(rows, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Eigen-classification of `Q = T²` on the complement of `ξ`.
pub fn classify(tf: &TFPair, tol: &Tolerances) -> Result<DistributionSplit> {
    let n = tf.n();
    let xi = if tf.xi_tangent && tf.xi_coeffs.norm() > 0.0 {
        Some(tf.xi_coeffs.normalize())
    } else {
        None
    };
    let identity = DMatrix::identity(n, n);
    let complement = match &xi {
        Some(c) => complete_basis(&DMatrix::from_columns(std::slice::from_ref(c)), &identity),
        None => identity.clone(),
    };
    let q = tf.q();
    let restricted = complement.transpose() * &q * &complement;
    let restricted = (&restricted + restricted.transpose()) * 0.5;
    let eigen = SymmetricEigen::new(restricted);

    let mut order: Vec<usize> = (0..eigen.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eigen.eigenvalues[i]).collect();
    if let Some(bad) = eigenvalues
        .iter()
        .copied()
        .find(|&mu| mu < -1.0 - tol.eigen_range || mu > tol.eigen_range)
    {
        return Err(Error::EigenRange(bad));
    }

    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        match clusters.last_mut() {
            Some(c) if eigenvalues[k] - eigenvalues[k - 1] <= tol.cluster => c.push(i),
            _ => clusters.push(vec![i]),
        }
    }

    let blocks: Vec<Block> = clusters
        .into_iter()
        .map(|members| {
            let mu =
                members.iter().map(|&i| eigen.eigenvalues[i]).sum::<f64>() / members.len() as f64;
            let mu = mu.clamp(-1.0, 0.0);
            let cols: Vec<DVector<f64>> = members
                .iter()
                .map(|&i| &complement * eigen.eigenvectors.column(i))
                .collect();
            let (kind, angle) = if mu <= -1.0 + tol.cluster {
                (BlockKind::Invariant, 0.0)
            } else if mu >= -tol.cluster {
                (BlockKind::AntiInvariant, std::f64::consts::FRAC_PI_2)
            } else {
                (BlockKind::Slant, (-mu).sqrt().acos())
            };
            Block {
                kind,
                eigenvalue: mu,
                angle,
                basis: DMatrix::from_columns(&cols),
            }
        })
        .collect();

    let d = blocks
        .iter()
        .filter(|b| b.kind == BlockKind::Invariant)
        .map(Block::dim)
        .sum();
    let d_perp = blocks
        .iter()
        .filter(|b| b.kind == BlockKind::AntiInvariant)
        .map(Block::dim)
        .sum();
    let k = blocks.iter().filter(|b| b.kind == BlockKind::Slant).count();
    Ok(DistributionSplit {
        label: Label::from_dims(d, d_perp, k),
        blocks,
        xi,
        eigenvalues,
    })
}

/// Largest residuals of the slant identities over one block.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SlantResiduals {
    /// `T²X + cos²θ (X − η(X)ξ)`.
    pub t_squared: f64,
    /// `g(TX, TY) − cos²θ (g(X, Y) − η(X)η(Y))`.
    pub tt: f64,
    /// `g(FX, FY) − sin²θ (g(X, Y) − η(X)η(Y))`.
    pub ff: f64,
}

impl SlantResiduals {
    pub fn max(&self) -> f64 {
        self.t_squared.max(self.tt).max(self.ff)
    }

    fn merge(self, other: SlantResiduals) -> SlantResiduals {
        SlantResiduals {
            t_squared: self.t_squared.max(other.t_squared),
            tt: self.tt.max(other.tt),
            ff: self.ff.max(other.ff),
        }
    }
}

const RANDOM_COMBINATIONS: usize = 8;

/// Residuals of the slant identities for `block`, over its basis and seeded
/// random combinations of the basis and `ξ`.
pub fn slant_residuals(
    sample: &GeometrySample,
    tf: &TFPair,
    split: &DistributionSplit,
    block: &Block,
    seed: u64,
) -> SlantResiduals {
    let mut vectors: Vec<DVector<f64>> = block.vectors().collect();
    let mut spanning = vectors.clone();
    spanning.extend(split.xi.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_COMBINATIONS {
        let mut v = DVector::zeros(tf.n());
        for s in &spanning {
            v += s * rng.gen_range(-1.0..=1.0);
        }
        vectors.push(v);
    }

    let cos2 = block.cos2();
    let sin2 = block.sin2();
    let eta = |v: &DVector<f64>| sample.structure.eta_of(&sample.from_frame(v));
    let q = tf.q();
    let mut out = SlantResiduals::default();
    for x in &vectors {
        let ex = eta(x);
        let rhs = (x - &tf.xi_coeffs * ex) * (-cos2);
        out.t_squared = out.t_squared.max((&q * x - rhs).norm());
        let tx = &tf.t * x;
        let fx = &tf.f * x;
        for y in &vectors {
            let base = x.dot(y) - ex * eta(y);
            out.tt = out.tt.max((tx.dot(&(&tf.t * y)) - cos2 * base).abs());
            out.ff = out.ff.max((fx.dot(&(&tf.f * y)) - sin2 * base).abs());
        }
    }
    out
}

/// Per-block residuals (in block order) and their maximum.
pub fn verify_slant_identities(
    sample: &GeometrySample,
    tf: &TFPair,
    split: &DistributionSplit,
    seed: u64,
) -> (Vec<SlantResiduals>, SlantResiduals) {
    let per: Vec<SlantResiduals> = split
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| slant_residuals(sample, tf, split, b, seed.wrapping_add(i as u64)))
        .collect();
    let total = per
        .iter()
        .copied()
        .fold(SlantResiduals::default(), SlantResiduals::merge);
    (per, total)
}

/// `T^⊥M = φD^⊥ ⊕ FD^θ ⊕ μ` in normal-frame coefficients.
#[derive(Debug, Clone)]
pub struct NormalSplit {
    pub phi_d_perp: DMatrix<f64>,
    pub f_d_theta: DMatrix<f64>,
    pub mu: DMatrix<f64>,
    /// Largest `|cos|` between a `φD^⊥` and an `FD^θ` direction.
    pub cross_orthogonality: f64,
    /// Largest component of `φν` outside `μ`, for unit `ν ∈ μ`.
    pub phi_invariance: f64,
}

impl NormalSplit {
    pub fn dims(&self) -> (usize, usize, usize) {
        (
            self.phi_d_perp.ncols(),
            self.f_d_theta.ncols(),
            self.mu.ncols(),
        )
    }
}

pub fn classify_normal(
    sample: &GeometrySample,
    tf: &TFPair,
    split: &DistributionSplit,
    tol: &Tolerances,
) -> Result<NormalSplit> {
    let codim = sample.codim();
    let raw_perp: Vec<DVector<f64>> = split
        .basis_of(BlockKind::AntiInvariant)
        .column_iter()
        .map(|v| &tf.f * v)
        .collect();
    let raw_theta: Vec<DVector<f64>> = split
        .basis_of(BlockKind::Slant)
        .column_iter()
        .map(|v| &tf.f * v)
        .collect();
    let (p, s) = (raw_perp.len(), raw_theta.len());
    if p + s > codim {
        return Err(Error::NormalSplit(format!(
            "φD⊥ ({p}) and FDθ ({s}) exceed the normal rank {codim}"
        )));
    }

    let mut cross: f64 = 0.0;
    for a in &raw_perp {
        for b in &raw_theta {
            let denom = a.norm() * b.norm();
            if denom > 0.0 {
                cross = cross.max(a.dot(b).abs() / denom);
            }
        }
    }

    let mut raw = raw_perp;
    raw.extend(raw_theta);
    let identity = DMatrix::identity(codim, codim);
    let ortho = gram_schmidt(&stack(codim, raw), &identity, tol.normal_split).map_err(|j| {
        Error::NormalSplit(format!(
            "image direction {j} is dependent on the previous ones"
        ))
    })?;
    let mu = complete_basis(&ortho.frame, &identity);
    let phi_d_perp = ortho.frame.columns(0, p).into_owned();
    let f_d_theta = ortho.frame.columns(p, s).into_owned();

    let mu_ambient = &sample.normal * &mu;
    let g = &sample.structure.metric;
    let mut invariance: f64 = 0.0;
    for col in mu_ambient.column_iter() {
        let w = sample.structure.phi_of(&col.into_owned());
        let inside = &mu_ambient * (mu_ambient.transpose() * (g * &w));
        invariance = invariance.max(sample.norm(&(w - inside)));
    }

    Ok(NormalSplit {
        phi_d_perp,
        f_d_theta,
        mu,
        cross_orthogonality: cross,
        phi_invariance: invariance,
    })
}

/// Agreement of per-sample classifications.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSummary {
    pub label: Label,
    pub invariant_dim: usize,
    pub anti_invariant_dim: usize,
    pub slant_dims: Vec<usize>,
    /// Angles of the first sample, per slant block.
    pub angles: Vec<f64>,
    /// Largest spread of any slant angle across samples.
    pub angle_spread: f64,
    pub consistent_dims: bool,
}

/// `None` for an empty input. Samples disagreeing in dimensions, or with a
/// slant angle varying by more than `tol`, are labelled generic.
pub fn summarize(splits: &[DistributionSplit], tol: f64) -> Option<SplitSummary> {
    let first = splits.first()?;
    let key = |s: &DistributionSplit| (s.invariant_dim(), s.anti_invariant_dim(), s.slant_dims());
    let consistent_dims = splits.iter().all(|s| key(s) == key(first));
    let angles = first.slant_angles();
    let mut spread: f64 = 0.0;
    if consistent_dims {
        for (k, &a0) in angles.iter().enumerate() {
            let (lo, hi) = splits
                .iter()
                .map(|s| s.slant_angles()[k])
                .fold((a0, a0), |(lo, hi), a| (lo.min(a), hi.max(a)));
            spread = spread.max(hi - lo);
        }
    }
    let label = if !consistent_dims || spread > tol {
        Label::Generic
    } else {
        first.label
    };
    Some(SplitSummary {
        label,
        invariant_dim: first.invariant_dim(),
        anti_invariant_dim: first.anti_invariant_dim(),
        slant_dims: first.slant_dims(),
        angles,
        angle_spread: spread,
        consistent_dims,
    })
}
