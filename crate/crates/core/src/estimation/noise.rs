//! Error-covariance estimates `G_hat` and whitening.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::system::RegressionSystem;
use crate::linalg::{floor_eigenvalues, sym_map, HatSpectrum};
use crate::{Error, Result};

/// Eigenvalue floor applied to every covariance estimate.
pub const PD_FLOOR: f64 = 1e-8;
/// Leverages are capped here before `(1 - b)^delta`.
pub const LEVERAGE_CAP: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Spherical,
    Freedman,
    Hc4,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Spherical => "spherical",
            NoiseKind::Freedman => "freedman",
            NoiseKind::Hc4 => "hc4",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spherical" => Ok(NoiseKind::Spherical),
            "freedman" | "freedman-block" | "block" => Ok(NoiseKind::Freedman),
            "hc4" => Ok(NoiseKind::Hc4),
            other => Err(Error::Usage(format!(
                "unknown noise kind '{other}' (expected freedman, hc4 or spherical)"
            ))),
        }
    }
}

/// One diagonal block of `G` covering rows `start .. start + matrix.nrows()`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovBlock {
    pub start: usize,
    pub matrix: DMatrix<f64>,
}

/// Block-diagonal covariance; blocks are contiguous and cover every row.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub blocks: Vec<CovBlock>,
}

impl NoiseModel {
    pub fn spherical(n: usize, sigma2: f64) -> Self {
        let v = sigma2.max(PD_FLOOR);
        NoiseModel {
            kind: NoiseKind::Spherical,
            blocks: (0..n)
                .map(|r| CovBlock {
                    start: r,
                    matrix: DMatrix::from_element(1, 1, v),
                })
                .collect(),
        }
    }

    /// Diagonal model with the floor applied.
    pub fn diagonal(kind: NoiseKind, diag: &[f64]) -> Self {
        NoiseModel {
            kind,
            blocks: diag
                .iter()
                .enumerate()
                .map(|(r, &v)| CovBlock {
                    start: r,
                    matrix: DMatrix::from_element(1, 1, v.max(PD_FLOOR)),
                })
                .collect(),
        }
    }

    /// Arbitrary blocks, each symmetrised and floored.
    pub fn from_blocks(kind: NoiseKind, blocks: Vec<CovBlock>) -> Result<Self> {
        let mut next = 0;
        let mut out = Vec::with_capacity(blocks.len());
        for b in blocks {
            if b.start != next || !b.matrix.is_square() || b.matrix.nrows() == 0 {
                return Err(Error::Dimension(
                    "covariance blocks must be square and contiguous".into(),
                ));
            }
            if b.matrix.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical("non-finite covariance block".into()));
            }
            next += b.matrix.nrows();
            out.push(CovBlock {
                start: b.start,
                matrix: floor_eigenvalues(&b.matrix, PD_FLOOR),
            });
        }
        Ok(NoiseModel { kind, blocks: out })
    }

    pub fn n(&self) -> usize {
        self.blocks
            .last()
            .map_or(0, |b| b.start + b.matrix.nrows())
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut g = DMatrix::zeros(n, n);
        for b in &self.blocks {
            let k = b.matrix.nrows();
            g.view_mut((b.start, b.start), (k, k)).copy_from(&b.matrix);
        }
        g
    }

    pub fn diagonal_entries(&self) -> Vec<f64> {
        self.blocks
            .iter()
            .flat_map(|b| b.matrix.diagonal().iter().copied().collect::<Vec<_>>())
            .collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| crate::linalg::min_eigenvalue(&b.matrix))
            .fold(f64::INFINITY, f64::min)
    }

    fn map_blocks(&self, f: impl Fn(f64) -> f64 + Copy) -> Vec<(usize, DMatrix<f64>)> {
        self.blocks
            .iter()
            .map(|b| {
                let m = if b.matrix.nrows() == 1 {
                    DMatrix::from_element(1, 1, f(b.matrix[(0, 0)]))
                } else {
                    sym_map(&b.matrix, f)
                };
                (b.start, m)
            })
            .collect()
    }

    fn apply_blockwise(parts: &[(usize, DMatrix<f64>)], m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        for (start, w) in parts {
            let k = w.nrows();
            let rows = m.rows(*start, k);
            out.rows_mut(*start, k).copy_from(&(w * rows));
        }
        out
    }

    /// `G^{1/2} v`.
    pub fn sqrt_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let parts = self.map_blocks(f64::sqrt);
        let m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        Self::apply_blockwise(&parts, &m).column(0).into_owned()
    }

    /// `G^{-1/2} M`.
    pub fn inv_sqrt_apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let parts = self.map_blocks(|v| 1.0 / v.sqrt());
        Self::apply_blockwise(&parts, m)
    }

    /// Dense `G^{-1/2}`.
    pub fn inv_sqrt(&self) -> DMatrix<f64> {
        self.inv_sqrt_apply(&DMatrix::identity(self.n(), self.n()))
    }
}

fn check_residuals(sys: &RegressionSystem, e: &DVector<f64>) -> Result<()> {
    if e.len() != sys.n_rows() {
        return Err(Error::Dimension(format!(
            "{} residuals for {} rows",
            e.len(),
            sys.n_rows()
        )));
    }
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite residuals".into()));
    }
    Ok(())
}

/// `sigma^2 I` with `sigma^2 = ||e||^2 / n_d`.
pub fn estimate_noise_spherical(sys: &RegressionSystem, e: &DVector<f64>) -> Result<NoiseModel> {
    check_residuals(sys, e)?;
    let n = e.len().max(1) as f64;
    Ok(NoiseModel::spherical(sys.n_rows(), e.norm_squared() / n))
}

/// Per-player block `B_i = n_i^{-1} sum_t e_t e_t'` over that player's
/// `(l_i + 1)`-row residual groups, repeated for each of the player's observations.
pub fn estimate_noise_freedman(sys: &RegressionSystem, e: &DVector<f64>) -> Result<NoiseModel> {
    check_residuals(sys, e)?;
    let mut blocks = Vec::new();
    for b in &sys.layout.blocks {
        let n_i = b.records.len();
        if n_i == 0 {
            continue;
        }
        let r = b.rows_per_obs();
        let mut acc = DMatrix::zeros(r, r);
        for k in 0..n_i {
            let et = e.rows(b.row_offset + k * r, r);
            acc += et * et.transpose();
        }
        acc /= n_i as f64;
        let floored = floor_eigenvalues(&acc, PD_FLOOR);
        for k in 0..n_i {
            blocks.push(CovBlock {
                start: b.row_offset + k * r,
                matrix: floored.clone(),
            });
        }
    }
    NoiseModel::from_blocks(NoiseKind::Freedman, blocks)
}

/// Leverages `b` (over the non-fixed columns) and HC4 exponents `delta`.
/// Rows with zero leverage get `delta = 0`.
pub fn hc4_exponents(sys: &RegressionSystem) -> (Vec<f64>, Vec<f64>) {
    let free = sys.feasible.free_indices();
    let n = sys.n_rows();
    let b: Vec<f64> = if free.is_empty() {
        vec![0.0; n]
    } else {
        HatSpectrum::new(&sys.x.select_columns(&free))
            .diagonal()
            .iter()
            .map(|&v| v.clamp(0.0, LEVERAGE_CAP))
            .collect()
    };
    let total: f64 = b.iter().sum();
    let delta = b
        .iter()
        .map(|&bi| {
            if total > 0.0 {
                (n as f64 * bi / total).min(4.0)
            } else {
                0.0
            }
        })
        .collect();
    (b, delta)
}

/// `G_hat = diag(e_i^2 / (1 - b_i)^{delta_i})`, floored.
pub fn estimate_noise_hc4(sys: &RegressionSystem, e: &DVector<f64>) -> Result<NoiseModel> {
    check_residuals(sys, e)?;
    let (b, delta) = hc4_exponents(sys);
    let diag: Vec<f64> = e
        .iter()
        .zip(b.iter().zip(&delta))
        .map(|(ei, (bi, di))| ei * ei / (1.0 - bi).powf(*di))
        .collect();
    Ok(NoiseModel::diagonal(NoiseKind::Hc4, &diag))
}

pub fn estimate_noise(kind: NoiseKind, sys: &RegressionSystem, e: &DVector<f64>) -> Result<NoiseModel> {
    match kind {
        NoiseKind::Spherical => estimate_noise_spherical(sys, e),
        NoiseKind::Freedman => estimate_noise_freedman(sys, e),
        NoiseKind::Hc4 => estimate_noise_hc4(sys, e),
    }
}

/// `(G^{-1/2} X, G^{-1/2} Y)` with layout and feasible set unchanged.
pub fn whiten(sys: &RegressionSystem, noise: &NoiseModel) -> Result<RegressionSystem> {
    if noise.n() != sys.n_rows() {
        return Err(Error::Dimension(format!(
            "noise model over {} rows for a {}-row system",
            noise.n(),
            sys.n_rows()
        )));
    }
    let mut joint = DMatrix::zeros(sys.n_rows(), sys.n_cols() + 1);
    joint.columns_mut(0, sys.n_cols()).copy_from(&sys.x);
    joint.column_mut(sys.n_cols()).copy_from(&sys.y);
    let w = noise.inv_sqrt_apply(&joint);
    let mut out = sys.clone();
    out.x = w.columns(0, sys.n_cols()).into_owned();
    out.y = w.column(sys.n_cols()).into_owned();
    Ok(out)
}
