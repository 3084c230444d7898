//! Small dense helpers for inner products in a non-Euclidean metric.

use nalgebra::{DMatrix, DVector};

/// Projection coefficient (relative to the incoming vector's norm) above
/// which a second orthogonalisation pass is made.
pub const REORTH_THRESHOLD: f64 = 0.7;

pub fn inner(g: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(&(g * b))
}

pub fn norm(g: &DMatrix<f64>, a: &DVector<f64>) -> f64 {
    inner(g, a, a).max(0.0).sqrt()
}

/// Result of orthonormalising the columns of `input`: `frame = input * coeffs`.
#[derive(Debug, Clone)]
pub struct Orthonormalized {
    pub frame: DMatrix<f64>,
    pub coeffs: DMatrix<f64>,
}

/// Modified Gram–Schmidt in the metric `g`, with one re-orthogonalisation
/// pass whenever a projection coefficient exceeds [`REORTH_THRESHOLD`].
///
/// Returns `Err(index)` for the first column whose remainder falls below
/// `tol` times its original length.
pub fn gram_schmidt(
    input: &DMatrix<f64>,
    g: &DMatrix<f64>,
    tol: f64,
) -> Result<Orthonormalized, usize> {
    let (dim, k) = input.shape();
    let mut frame = DMatrix::zeros(dim, k);
    let mut coeffs = DMatrix::zeros(k, k);
    for j in 0..k {
        let mut v = input.column(j).into_owned();
        let mut c = DVector::zeros(k);
        c[j] = 1.0;
        let original = norm(g, &v);
        if original == 0.0 {
            return Err(j);
        }
        for pass in 0..2 {
            let mut largest: f64 = 0.0;
            for i in 0..j {
                let q = frame.column(i).into_owned();
                let proj = inner(g, &q, &v);
                largest = largest.max(proj.abs() / original);
                v -= &q * proj;
                let ci = coeffs.column(i).into_owned();
                c -= ci * proj;
            }
            if pass == 0 && largest <= REORTH_THRESHOLD {
                break;
            }
        }
        let len = norm(g, &v);
        if len < tol * original {
            return Err(j);
        }
        frame.set_column(j, &(v / len));
        coeffs.set_column(j, &(c / len));
    }
    Ok(Orthonormalized { frame, coeffs })
}

/// Extends an orthonormal `frame` (columns) to a full orthonormal basis by
/// repeatedly adding the coordinate vector with the largest remainder.
/// Returns only the added columns.
pub fn complete_basis(frame: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    let dim = frame.nrows();
    let have = frame.ncols();
    let mut basis: Vec<DVector<f64>> = frame.column_iter().map(|c| c.into_owned()).collect();
    let mut added = Vec::new();
    for _ in have..dim {
        let mut best: Option<(f64, DVector<f64>)> = None;
        for a in 0..dim {
            let mut v = DVector::zeros(dim);
            v[a] = 1.0;
            let v = orthogonalize(&v, &basis, g);
            let len = norm(g, &v);
            if best.as_ref().is_none_or(|(l, _)| len > *l) {
                best = Some((len, v));
            }
        }
        let (len, v) = best.expect("dim > 0");
        let v = v / len;
        basis.push(v.clone());
        added.push(v);
    }
    if added.is_empty() {
        DMatrix::zeros(dim, 0)
    } else {
        DMatrix::from_columns(&added)
    }
}

/// Removes the components along an orthonormal set (two passes).
pub fn orthogonalize(v: &DVector<f64>, basis: &[DVector<f64>], g: &DMatrix<f64>) -> DVector<f64> {
    let mut v = v.clone();
    for _ in 0..2 {
        for q in basis {
            let c = inner(g, q, &v);
            v -= q * c;
        }
    }
    v
}

/// Largest absolute entry of `m - I`.
pub fn identity_defect(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((m[(i, j)] - target).abs());
        }
    }
    worst
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}
