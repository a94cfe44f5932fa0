//! Small dense helpers for `d×d` symmetric positive-semidefinite matrices
//! stored row-major in slices.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below this fraction of the largest are clamped to zero when
/// taking square roots.
pub const SQRT_CLAMP: f64 = 1e-12;
/// Relative asymmetry accepted from model covariance densities.
const ASYMMETRY_TOL: f64 = 1e-9;

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn mat_vec(m: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(&m[i * d..(i + 1) * d], x);
    }
}

/// `x′ m x`.
pub fn quad_form(m: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    if d == 1 {
        return x[0] * m[0] * x[0];
    }
    (0..d).map(|i| x[i] * dot(&m[i * d..(i + 1) * d], x)).sum()
}

pub fn max_asymmetry(m: &[f64], d: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in (i + 1)..d {
            worst = worst.max((m[i * d + j] - m[j * d + i]).abs());
        }
    }
    worst
}

/// Eigendecomposition of a symmetric matrix: `(eigenvalues, eigenvectors as columns)`.
pub fn sym_eigen(m: &[f64], d: usize) -> (Vec<f64>, DMatrix<f64>) {
    let mat = DMatrix::from_row_slice(d, d, m);
    let sym = (&mat + mat.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// Symmetric square root of the PSD matrix `m` (row-major, `d×d`) into `out`.
/// Eigenvalues under [`SQRT_CLAMP`] times the largest are treated as zero;
/// returns the offending eigenvalue when `m` is genuinely indefinite.
pub fn psd_sqrt(m: &[f64], d: usize, out: &mut [f64]) -> std::result::Result<(), f64> {
    if d == 1 {
        if m[0] < 0.0 {
            return Err(m[0]);
        }
        out[0] = m[0].sqrt();
        return Ok(());
    }
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if max_asymmetry(m, d) > ASYMMETRY_TOL * scale {
        return Err(f64::NAN);
    }
    let (vals, vecs) = sym_eigen(m, d);
    let largest = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let cutoff = SQRT_CLAMP * largest;
    if let Some(&bad) = vals.iter().find(|&&e| e < -cutoff) {
        return Err(bad);
    }
    out.iter_mut().for_each(|o| *o = 0.0);
    for (k, &e) in vals.iter().enumerate() {
        if e <= cutoff {
            continue;
        }
        let root = e.sqrt();
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] += root * vecs[(i, k)] * vecs[(j, k)];
            }
        }
    }
    Ok(())
}

/// Minimal-norm least-squares solution of `v x = g` for symmetric PSD `v`.
/// Spectral components with `|eigenvalue| ≤ tol · max|eigenvalue|` are dropped.
pub fn pseudo_solve(v: &[f64], g: &[f64], tol: f64) -> Result<Vec<f64>> {
    let d = g.len();
    if v.len() != d * d {
        return Err(Error::DimensionMismatch(format!("matrix of {} entries for vector of {d}", v.len())));
    }
    if d == 1 {
        if v[0] < 0.0 {
            return Err(Error::NonPsd(v[0]));
        }
        return Ok(vec![if v[0] > 0.0 { g[0] / v[0] } else { 0.0 }]);
    }
    let (vals, vecs) = sym_eigen(v, d);
    let largest = vals.iter().fold(0.0f64, |a, e| a.max(e.abs()));
    let asym = max_asymmetry(v, d);
    if asym > tol * largest.max(f64::MIN_POSITIVE) {
        return Err(Error::NonSymmetric(asym));
    }
    let cutoff = tol * largest;
    if let Some(&bad) = vals.iter().find(|&&e| e < -cutoff) {
        return Err(Error::NonPsd(bad));
    }
    let mut x = vec![0.0; d];
    for (k, &e) in vals.iter().enumerate() {
        if e <= cutoff {
            continue;
        }
        let coef = (0..d).map(|i| vecs[(i, k)] * g[i]).sum::<f64>() / e;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += coef * vecs[(i, k)];
        }
    }
    Ok(x)
}
