//! Small dense linear-algebra helpers shared by the channel pipeline and the
//! problem assembly.

use nalgebra::{Complex, DMatrix};

pub type C64 = Complex<f64>;

/// Hermitian part `(A + A^H) / 2`.
pub fn hermitian_part(a: &DMatrix<C64>) -> DMatrix<C64> {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// Square root of a Hermitian PSD matrix with eigenvalues clamped at zero.
///
/// Returns the factor together with the smallest eigenvalue seen before clamping.
pub fn hermitian_sqrt(a: &DMatrix<C64>) -> (DMatrix<C64>, f64) {
    let eig = hermitian_part(a).symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let roots = eig.eigenvalues.map(|v| C64::new(v.max(0.0).sqrt(), 0.0));
    let v = &eig.eigenvectors;
    let sqrt = v * DMatrix::from_diagonal(&roots) * v.adjoint();
    (sqrt, min)
}

/// Symmetric PSD square root of a real symmetric matrix, eigenvalues clamped at zero.
pub fn symmetric_sqrt(a: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    (v * DMatrix::from_diagonal(&roots) * v.transpose(), min)
}

/// Projects a real symmetric matrix onto the PSD cone by clamping eigenvalues.
///
/// Returns the repaired matrix and the smallest eigenvalue before repair. The
/// input is only touched when that eigenvalue is negative.
pub fn psd_repair(a: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min >= 0.0 {
        return (sym, min);
    }
    let clamped = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&clamped) * v.transpose();
    out = (&out + out.transpose()) * 0.5;
    (out, min)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `out = M v` for a row-major `n x n` block.
pub fn block_matvec(block: &[f64], v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for (row, o) in block.chunks_exact(n).zip(out.iter_mut()) {
        *o = dot(row, v);
    }
}
