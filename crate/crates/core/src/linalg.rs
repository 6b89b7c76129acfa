use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues below this are treated as an input error.
pub(crate) const PSD_TOLERANCE: f64 = 1e-10;

pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Checks a covariance-like matrix and applies the tiny diagonal shift for
/// numerically semidefinite inputs.
pub(crate) fn repair_psd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Shape(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} has non-finite entries")));
    }
    let scale = m.amax().max(1.0);
    if max_asymmetry(m) > 1e-12 * scale {
        return Err(Error::InvalidArgument(format!("{what} is not symmetric")));
    }
    let lambda_min = min_eigenvalue(m);
    if lambda_min <= -PSD_TOLERANCE {
        return Err(Error::NotPositiveDefinite(format!(
            "{what} has smallest eigenvalue {lambda_min:e}"
        )));
    }
    let mut out = m.clone();
    if lambda_min < 0.0 {
        for i in 0..out.nrows() {
            out[(i, i)] += PSD_TOLERANCE;
        }
    }
    Ok(out)
}

pub(crate) fn require_positive_definite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::Shape(format!("{what} must be a non-empty square matrix")));
    }
    if m.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite(what.to_string()));
    }
    Ok(())
}

pub(crate) fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}
