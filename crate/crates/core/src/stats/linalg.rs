//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Cholesky factorisation with a jitter ladder.
///
/// On failure, `1e-10 * trace / p` is added to the diagonal and multiplied by ten
/// on each retry up to `1e-6 * trace / p`.
pub fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if !m.is_square() {
        return Err(Error::Decomposition(format!(
            "matrix is {}x{}, not square",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Decomposition("matrix has non-finite entries".into()));
    }
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let p = m.nrows().max(1) as f64;
    let base = (m.trace() / p).abs().max(f64::MIN_POSITIVE);
    let mut factor = 1e-10;
    while factor <= 1e-6 * (1.0 + 1e-9) {
        let mut jittered = m.clone();
        for i in 0..m.nrows() {
            jittered[(i, i)] += factor * base;
        }
        if let Some(c) = Cholesky::new(jittered) {
            return Ok(c);
        }
        factor *= 10.0;
    }
    Err(Error::Decomposition(
        "matrix is not positive definite (jitter ladder exhausted)".into(),
    ))
}

pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(cholesky(m)?.inverse())
}

pub fn log_det_chol(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Quadratic form `v' A^{-1} v` from a Cholesky factor of `A`.
pub fn inv_quad_form(c: &Cholesky<f64, Dyn>, v: &DVector<f64>) -> f64 {
    let z = c
        .l_dirty()
        .solve_lower_triangular(v)
        .expect("cholesky factor has a positive diagonal");
    z.norm_squared()
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol * scale))
}
