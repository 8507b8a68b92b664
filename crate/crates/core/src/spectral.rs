//! Eigenpairs of a centered similarity matrix.
//!
//! Both statistics, the null spectrum and the permutation oracle only need the
//! eigen-decomposition of `HSH`. It comes either from a dense symmetric
//! eigensolver or, for the linear kernel, from a thin SVD of the centered
//! responses (`HSH = (HY)(HY)ᵀ`), which is what the simulation harness uses.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::kernel::{ResponseMatrix, SimilarityMatrix, PSD_CLIP};

/// Eigenvalues below `ZERO_EIGEN * λ_max` in magnitude are exact zeros.
pub const ZERO_EIGEN: f64 = 1e-12;

/// Eigenpairs of `HSH`, eigenvalues in descending order.
///
/// Only eigenpairs with nonzero eigenvalue are kept; `n` records the full
/// dimension.
#[derive(Debug, Clone)]
pub struct CenteredEigen {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    n: usize,
    min_ratio: f64,
}

impl CenteredEigen {
    /// Dense route. `s` is centered first when it is raw.
    pub fn from_similarity(s: &SimilarityMatrix) -> Self {
        let centered = s.to_centered();
        let n = centered.n();
        let eig = SymmetricEigen::new(centered.into_matrix());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let pairs = order.into_iter().map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).clone_owned()));
        Self::from_pairs(pairs, n)
    }

    /// Linear-kernel route via the thin SVD of the column-centered responses.
    pub fn from_linear_responses(y: &ResponseMatrix) -> Self {
        Self::from_factor(&y.centered())
    }

    /// `HSH = F Fᵀ` for a factor `F` whose columns already have mean zero.
    pub fn from_factor(f: &DMatrix<f64>) -> Self {
        let n = f.nrows();
        let svd = f.clone().svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let pairs = order
            .into_iter()
            .map(|i| (svd.singular_values[i].powi(2), u.column(i).clone_owned()));
        Self::from_pairs(pairs, n)
    }

    fn from_pairs(pairs: impl Iterator<Item = (f64, DVector<f64>)>, n: usize) -> Self {
        let all: Vec<(f64, DVector<f64>)> = pairs.collect();
        let lmax = all.iter().map(|p| p.0).fold(0.0, f64::max);
        let lmin = all.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let min_ratio = if lmax > 0.0 { (lmin / lmax).min(0.0) } else { 0.0 };
        let kept: Vec<(f64, DVector<f64>)> = all
            .into_iter()
            .filter(|(v, _)| lmax > 0.0 && v.abs() > ZERO_EIGEN * lmax)
            .collect();
        let values = kept.iter().map(|p| p.0).collect();
        let cols: Vec<DVector<f64>> = kept.into_iter().map(|p| p.1).collect();
        let vectors = if cols.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        Self {
            values,
            vectors,
            n,
            min_ratio,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Nonzero eigenvalues, descending (negative ones last).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Matching unit eigenvectors as columns.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn lambda_max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0).max(0.0)
    }

    /// Most negative eigenvalue over the largest (0 when PSD).
    pub fn min_ratio(&self) -> f64 {
        self.min_ratio
    }

    /// Eigenvalues with tolerable negatives clipped to zero.
    pub fn clipped_values(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v.max(0.0)).collect()
    }

    /// Errors with `NotPsd` if an eigenvalue lies below `-PSD_CLIP·λ_max`.
    pub fn require_psd(&self) -> Result<()> {
        let threshold = -PSD_CLIP * self.lambda_max();
        match self.values.iter().copied().find(|&v| v < threshold) {
            Some(eigenvalue) => Err(Error::NotPsd {
                eigenvalue,
                threshold,
            }),
            None => Ok(()),
        }
    }

    /// Per-eigenvalue weights for the statistic of `power` 1 (pseudo) or ½ (sqrt).
    pub(crate) fn powered(&self, half: bool) -> Result<Vec<f64>> {
        if half {
            self.require_psd()?;
            Ok(self.values.iter().map(|&v| v.max(0.0).sqrt()).collect())
        } else {
            Ok(self.values.clone())
        }
    }
}
