//! Dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// Ridge penalty used whenever a design matrix is column-rank deficient.
pub const RIDGE_LAMBDA: f64 = 1e-8;

/// Applies `f` to the eigenvalues of a symmetric matrix.
pub fn sym_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let vals = eig.eigenvalues.map(f);
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Raises eigenvalues below `floor` to `floor`.
pub fn floor_eigenvalues(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&v| v >= floor) {
        return sym;
    }
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    symmetrize(&(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Numerical column rank, with the usual `max(n, m) * eps * s_max` cutoff.
pub fn column_rank(x: &DMatrix<f64>) -> usize {
    if x.ncols() == 0 || x.nrows() == 0 {
        return 0;
    }
    let sv = x.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let cutoff = x.nrows().max(x.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > cutoff).count()
}

pub fn is_rank_deficient(x: &DMatrix<f64>) -> bool {
    column_rank(x) < x.ncols()
}

fn augment_ridge(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> (DMatrix<f64>, DVector<f64>) {
    let (n, c) = x.shape();
    let mut xa = DMatrix::zeros(n + c, c);
    xa.view_mut((0, 0), (n, c)).copy_from(x);
    let s = lambda.sqrt();
    for j in 0..c {
        xa[(n + j, j)] = s;
    }
    let mut ya = DVector::zeros(n + c);
    ya.rows_mut(0, n).copy_from(y);
    (xa, ya)
}

/// Least squares `argmin ||y - X b||` for a full-column-rank `X` via Householder QR.
pub fn lstsq_qr(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if x.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    if x.nrows() < x.ncols() {
        return Err(Error::Numerical(format!(
            "underdetermined least squares ({} rows, {} columns)",
            x.nrows(),
            x.ncols()
        )));
    }
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    qr.r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))
}

/// Least squares with the ridge fallback: exact QR when `X` has full column
/// rank, otherwise `argmin ||y - X b||^2 + RIDGE_LAMBDA ||b||^2`.
/// Returns the solution and whether the ridge was used.
pub fn lstsq(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    if is_rank_deficient(x) {
        let (xa, ya) = augment_ridge(x, y, RIDGE_LAMBDA);
        Ok((lstsq_qr(&xa, &ya)?, true))
    } else {
        Ok((lstsq_qr(x, y)?, false))
    }
}

/// Like [`lstsq`] but with the ridge decision made by the caller.
pub fn lstsq_with(x: &DMatrix<f64>, y: &DVector<f64>, ridge: bool) -> Result<DVector<f64>> {
    if ridge {
        let (xa, ya) = augment_ridge(x, y, RIDGE_LAMBDA);
        lstsq_qr(&xa, &ya)
    } else {
        lstsq_qr(x, y)
    }
}

/// Eigen-structure of the hat matrix `H = X (X'X + lambda I)^{-1} X'`:
/// `H = U diag(kappa) U'` with `U` the left singular vectors of `X`.
#[derive(Debug, Clone)]
pub struct HatSpectrum {
    pub u: DMatrix<f64>,
    pub kappa: DVector<f64>,
    pub ridge: bool,
}

impl HatSpectrum {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let n = x.nrows();
        if x.ncols() == 0 || n == 0 {
            return HatSpectrum {
                u: DMatrix::zeros(n, 0),
                kappa: DVector::zeros(0),
                ridge: false,
            };
        }
        let ridge = is_rank_deficient(x);
        let svd = x.clone().svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let kappa = svd.singular_values.map(|s| {
            let s2 = s * s;
            if ridge {
                s2 / (s2 + RIDGE_LAMBDA)
            } else {
                1.0
            }
        });
        HatSpectrum { u, kappa, ridge }
    }

    /// Diagonal of the hat matrix (the leverages).
    pub fn diagonal(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.u.nrows(),
            self.u.row_iter().map(|row| {
                row.iter()
                    .zip(self.kappa.iter())
                    .map(|(uij, k)| k * uij * uij)
                    .sum()
            }),
        )
    }

    pub fn apply(&self, y: &DVector<f64>) -> DVector<f64> {
        let coeffs = self.u.transpose() * y;
        &self.u * coeffs.component_mul(&self.kappa)
    }

    pub fn dense(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.kappa) * self.u.transpose()
    }
}
