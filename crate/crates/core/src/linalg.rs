//! Truncated-SVD pseudoinverse solves.

use faer::{Mat, MatRef};

use crate::error::{Error, Result};

/// Absolute singular-value threshold used when reporting ranks in the
/// shape-parameter sweep.
pub const ABSOLUTE_RANK_EPS: f64 = 1e-10;

/// Default relative threshold (`tol * sigma_max`) for solving.
pub const DEFAULT_RELATIVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PinvSolution {
    pub x: Vec<f64>,
    /// Number of singular values above `tol * sigma_max`.
    pub rank: usize,
    /// Number of singular values above [`ABSOLUTE_RANK_EPS`].
    pub abs_rank: usize,
    /// Singular values in descending order.
    pub singular_values: Vec<f64>,
}

impl PinvSolution {
    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    pub fn sigma_min(&self) -> f64 {
        self.singular_values.last().copied().unwrap_or(0.0)
    }
}

struct Truncated {
    u: Mat<f64>,
    v: Mat<f64>,
    sigma: Vec<f64>,
    kept: usize,
}

fn truncated_svd(a: MatRef<'_, f64>, tol: f64) -> Result<Truncated> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::InvalidParameter("empty matrix".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if !a[(i, j)].is_finite() {
                return Err(Error::NonFinite);
            }
        }
    }
    let svd = a
        .thin_svd()
        .map_err(|e| Error::LinearAlgebra(format!("svd failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let sigma: Vec<f64> = (0..s.nrows()).map(|i| s[i]).collect();
    let smax = sigma.first().copied().unwrap_or(0.0);
    let kept = sigma.iter().filter(|&&v| v > tol * smax && v > 0.0).count();
    Ok(Truncated {
        u: svd.U().to_owned(),
        v: svd.V().to_owned(),
        sigma,
        kept,
    })
}

impl Truncated {
    fn apply(&self, b: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..self.kept {
            let coef: f64 = (0..self.u.nrows()).map(|i| self.u[(i, k)] * b[i]).sum::<f64>() / self.sigma[k];
            for (j, o) in out.iter_mut().enumerate() {
                *o += coef * self.v[(j, k)];
            }
        }
    }
}

/// `x = A^+ b`, dropping singular values at or below `tol * sigma_max`.
///
/// One refinement step `x += A^+ (b - A x)` follows the direct solve; in
/// exact arithmetic the correction is zero.
pub fn pseudoinverse_solve(a: MatRef<'_, f64>, b: &[f64], tol: f64) -> Result<PinvSolution> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.len(),
        });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let t = truncated_svd(a, tol)?;
    let mut x = vec![0.0; a.ncols()];
    t.apply(b, &mut x);

    let residual: Vec<f64> = (0..a.nrows())
        .map(|i| b[i] - (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum::<f64>())
        .collect();
    let mut dx = vec![0.0; a.ncols()];
    t.apply(&residual, &mut dx);
    x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);

    let abs_rank = t.sigma.iter().filter(|&&s| s > ABSOLUTE_RANK_EPS).count();
    Ok(PinvSolution {
        x,
        rank: t.kept,
        abs_rank,
        singular_values: t.sigma,
    })
}

/// Explicit Moore-Penrose pseudoinverse with the same truncation rule.
pub fn pseudoinverse(a: MatRef<'_, f64>, tol: f64) -> Result<Mat<f64>> {
    let t = truncated_svd(a, tol)?;
    Ok(Mat::from_fn(a.ncols(), a.nrows(), |j, i| {
        (0..t.kept)
            .map(|k| t.v[(j, k)] * t.u[(i, k)] / t.sigma[k])
            .sum()
    }))
}

/// Count of singular values strictly above `threshold`.
pub fn numerical_rank(singular_values: &[f64], threshold: f64) -> usize {
    singular_values.iter().filter(|&&s| s > threshold).count()
}
