//! Dense linear least squares via Householder QR.
//!
//! Designs in this crate are tall and narrow (thousands of rows, a handful of
//! columns), so the solver works column-major on a copy of the design and
//! never forms the normal equations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow<T> {
    pub regressors: Vec<T>,
    pub response: T,
}

impl<T> DesignRow<T> {
    pub fn new(regressors: Vec<T>, response: T) -> Self {
        Self {
            regressors,
            response,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefEstimates<T> {
    pub coefficients: Vec<T>,
    pub standard_errors: Vec<T>,
    /// Unbiased residual variance, RSS / (n - p).
    pub residual_variance: T,
    pub n: usize,
    /// Sampling covariance of the coefficients.
    pub covariance: Vec<Vec<T>>,
}

/// Ordinary least squares with default column names `x0, x1, ...`.
pub fn ols_fit<T: Scalar>(rows: &[DesignRow<T>]) -> Result<CoefEstimates<T>> {
    ols_fit_named(rows, &[])
}

/// Ordinary least squares; `names` label columns in singularity errors.
pub fn ols_fit_named<T: Scalar>(rows: &[DesignRow<T>], names: &[&str]) -> Result<CoefEstimates<T>> {
    let n = rows.len();
    let p = rows.first().map(|r| r.regressors.len()).unwrap_or(0);
    if p == 0 {
        return Err(Error::Usage("design has no rows or no columns".into()));
    }
    if n <= p {
        return Err(Error::Degenerate(format!(
            "{n} observations cannot identify {p} coefficients"
        )));
    }
    let col_name = |j: usize| names.get(j).map(|s| s.to_string()).unwrap_or(format!("x{j}"));

    let mut a: Vec<Vec<T>> = vec![Vec::with_capacity(n); p];
    let mut y = Vec::with_capacity(n);
    for (i, row) in rows.iter().enumerate() {
        if row.regressors.len() != p {
            return Err(Error::Usage(format!(
                "row {i} has {} regressors, expected {p}",
                row.regressors.len()
            )));
        }
        if !row.response.is_finite() || row.regressors.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("row {i} contains a non-finite value")));
        }
        for (col, &v) in a.iter_mut().zip(&row.regressors) {
            col.push(v);
        }
        y.push(row.response);
    }
    let original = a.clone();

    // Householder triangularisation; the reflections are applied to y as we go.
    let mut diag = vec![T::zero(); p];
    for j in 0..p {
        let norm = a[j][j..].iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm == T::zero() {
            diag[j] = T::zero();
            continue;
        }
        let alpha = if a[j][j] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: T = v.iter().map(|&x| x * x).sum();
        if vnorm2 > T::zero() {
            let two = T::lit(2.0);
            for col in a.iter_mut().skip(j + 1) {
                let dot: T = v.iter().zip(&col[j..]).map(|(&vi, &ci)| vi * ci).sum();
                let f = two * dot / vnorm2;
                for (ci, &vi) in col[j..].iter_mut().zip(&v) {
                    *ci -= f * vi;
                }
            }
            let dot: T = v.iter().zip(&y[j..]).map(|(&vi, &yi)| vi * yi).sum();
            let f = two * dot / vnorm2;
            for (yi, &vi) in y[j..].iter_mut().zip(&v) {
                *yi -= f * vi;
            }
        }
        a[j][j] = alpha;
        for v in a[j][j + 1..].iter_mut() {
            *v = T::zero();
        }
        diag[j] = alpha;
    }

    let largest = diag.iter().fold(T::zero(), |m, &d| m.max(d.abs()));
    let tol = T::lit(1e-10).max(T::epsilon() * T::from_count(n)) * largest;
    let collinear: Vec<String> = diag
        .iter()
        .enumerate()
        .filter(|(_, d)| d.abs() <= tol)
        .map(|(j, _)| col_name(j))
        .collect();
    if !collinear.is_empty() || largest == T::zero() {
        return Err(Error::Singular { columns: collinear });
    }

    // R is stored as r[col][row] in `a`.
    let r = |row: usize, col: usize| a[col][row];
    let mut beta = vec![T::zero(); p];
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in i + 1..p {
            s -= r(i, k) * beta[k];
        }
        beta[i] = s / r(i, i);
    }

    let rss: T = (0..n)
        .map(|i| {
            let fitted: T = (0..p).map(|j| original[j][i] * beta[j]).sum();
            let e = rows[i].response - fitted;
            e * e
        })
        .sum();
    let sigma2 = rss / T::from_count(n - p);

    // Inverse of the upper-triangular R, column by column.
    let mut rinv = vec![vec![T::zero(); p]; p];
    for c in 0..p {
        rinv[c][c] = T::one() / r(c, c);
        for i in (0..c).rev() {
            let mut s = T::zero();
            for k in i + 1..=c {
                s += r(i, k) * rinv[k][c];
            }
            rinv[i][c] = -s / r(i, i);
        }
    }
    let mut covariance = vec![vec![T::zero(); p]; p];
    for i in 0..p {
        for j in 0..p {
            let s: T = (0..p).map(|k| rinv[i][k] * rinv[j][k]).sum();
            covariance[i][j] = sigma2 * s;
        }
    }
    let standard_errors = (0..p).map(|i| covariance[i][i].max(T::zero()).sqrt()).collect();

    Ok(CoefEstimates {
        coefficients: beta,
        standard_errors,
        residual_variance: sigma2,
        n,
        covariance,
    })
}

/// Slope of the least-squares line through the origin, Σxy / Σx².
pub fn origin_fit<T: Scalar>(xs: &[T], ys: &[T]) -> Result<T> {
    check_lengths(xs, ys)?;
    let sxx: T = xs.iter().map(|&x| x * x).sum();
    if !(sxx > T::zero()) {
        return Err(Error::Domain("through-origin fit needs a nonzero regressor".into()));
    }
    let sxy: T = xs.iter().zip(ys).map(|(&x, &y)| x * y).sum();
    Ok(sxy / sxx)
}

/// Ratio estimator Σy / Σx.
pub fn ratio_of_sums<T: Scalar>(xs: &[T], ys: &[T]) -> Result<T> {
    check_lengths(xs, ys)?;
    let sx: T = xs.iter().copied().sum();
    if !(sx > T::zero()) {
        return Err(Error::Domain(format!("ratio of sums needs a positive denominator, got {sx}")));
    }
    let sy: T = ys.iter().copied().sum();
    Ok(sy / sx)
}

fn check_lengths<T>(xs: &[T], ys: &[T]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::Usage(format!(
            "length mismatch: {} regressors vs {} responses",
            xs.len(),
            ys.len()
        )));
    }
    if xs.is_empty() {
        return Err(Error::Domain("no observations".into()));
    }
    Ok(())
}
