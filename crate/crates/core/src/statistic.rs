//! Design matrices, the hat matrix, the symmetric square root, and the
//! pseudo-F / square-root F statistics.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{check_finite, SimilarityMatrix, PSD_CLIP};
use crate::spectral::{CenteredEigen, ZERO_EIGEN};

/// Largest admissible condition number of `XᵀX`.
pub const MAX_CONDITION: f64 = 1e12;
/// Residual trace at or below this fraction of `tr(HSH)` is degenerate.
pub const DEGENERATE_RESIDUAL: f64 = 1e-12;

/// Which statistic: `HSH` itself or its square root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pseudo,
    Sqrt,
}

impl Method {
    pub const BOTH: [Method; 2] = [Method::Pseudo, Method::Sqrt];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Pseudo => "pseudo",
            Method::Sqrt => "sqrt",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pseudo" => Ok(Method::Pseudo),
            "sqrt" => Ok(Method::Sqrt),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

/// `n × m` predictor observations together with their sample moments and an
/// orthonormal basis of the column space.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
    basis: DMatrix<f64>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        let (n, m) = x.shape();
        if m == 0 {
            return Err(Error::invalid("design matrix has no columns"));
        }
        if n <= m {
            return Err(Error::invalid(format!(
                "design matrix needs more subjects than predictors, got n = {n}, m = {m}"
            )));
        }
        check_finite(&x, "design matrix")?;

        let qr = x.clone().qr();
        let r = qr.r();
        let sv = r.clone().svd(false, false).singular_values;
        let (smax, smin) = (sv.max(), sv.min());
        let condition = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::SingularDesign { condition });
        }
        let basis = qr.q();

        let mean = DVector::from_fn(m, |j, _| x.column(j).mean());
        let mut centered = x.clone();
        for (j, mut col) in centered.column_iter_mut().enumerate() {
            col.add_scalar_mut(-mean[j]);
        }
        let mut cov = centered.transpose() * &centered / (n as f64 - 1.0);
        crate::kernel::symmetrize(&mut cov);

        Ok(Self { x, basis, mean, cov })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(crate::kernel::matrix_from_rows(rows)?)
    }

    /// A copy with a leading column of ones.
    pub fn with_intercept(&self) -> Result<Self> {
        let (n, m) = self.x.shape();
        let x = DMatrix::from_fn(n, m + 1, |i, j| if j == 0 { 1.0 } else { self.x[(i, j - 1)] });
        Self::new(x)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Orthonormal basis `Q` of the column space, `H_X = QQᵀ`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Sample mean `μ̂`.
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Sample covariance `Δ̂` (denominator `n − 1`).
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Plug-in noncentrality factor `1/(1 + μ̂ᵀΔ̂⁻¹μ̂)`.
    ///
    /// When the constant vector lies in the column space (e.g. an intercept
    /// column) the quadratic form is unbounded and the factor is its limit 0.
    pub fn noncentrality_factor(&self) -> Result<f64> {
        let n = self.n();
        let ones = DVector::from_element(n, 1.0);
        let proj = &self.basis * (self.basis.transpose() * &ones);
        if (proj - &ones).norm() <= 1e-10 * (n as f64).sqrt() {
            return Ok(0.0);
        }
        let chol = self.cov.clone().cholesky().ok_or(Error::SingularCovariance)?;
        let solved = chol.solve(&self.mean);
        let q = self.mean.dot(&solved);
        if !q.is_finite() || q < 0.0 {
            return Err(Error::SingularCovariance);
        }
        Ok(1.0 / (1.0 + q))
    }

    /// Same design with rows reordered: row `i` becomes row `perm[i]` of `self`.
    pub fn permuted_rows(&self, perm: &[usize]) -> Result<Self> {
        let x = DMatrix::from_fn(self.n(), self.m(), |i, j| self.x[(perm[i], j)]);
        Self::new(x)
    }
}

/// Orthogonal projector `H_X = X(XᵀX)⁻¹Xᵀ` onto the column space of `X`.
#[derive(Debug, Clone)]
pub struct HatMatrix {
    h: DMatrix<f64>,
}

impl HatMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn trace(&self) -> f64 {
        self.h.trace()
    }
}

pub fn hat_matrix(x: &DesignMatrix) -> HatMatrix {
    let q = x.basis();
    let mut h = q * q.transpose();
    crate::kernel::symmetrize(&mut h);
    HatMatrix { h }
}

/// Symmetric PSD square root `B` with `B·B = A`.
///
/// Eigenvalues in `[-1e-8·λ_max, 0)` are clipped to zero and those below
/// `1e-12·λ_max` in magnitude are treated as exact zeros; anything more
/// negative is `NotPsd`.
pub fn matrix_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::invalid("matrix_sqrt needs a square matrix"));
    }
    let n = a.nrows();
    let eig = SymmetricEigen::new(a.clone());
    let lmax = eig.eigenvalues.max().max(0.0);
    let threshold = -PSD_CLIP * lmax;
    let mut roots = DVector::zeros(n);
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l < threshold {
            return Err(Error::NotPsd {
                eigenvalue: l,
                threshold,
            });
        }
        roots[i] = if l > ZERO_EIGEN * lmax { l.sqrt() } else { 0.0 };
    }
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= roots[j];
    }
    let mut b = scaled * v.transpose();
    crate::kernel::symmetrize(&mut b);
    Ok(b)
}

/// Value of a pseudo-F type statistic with its two trace components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestStatistic {
    pub value: f64,
    pub method: Method,
    /// `tr(H_X A)/m`
    pub numerator: f64,
    /// `tr((I − H_X) A)/(n − m)`
    pub denominator: f64,
}

pub(crate) fn from_traces(model: f64, total: f64, n: usize, m: usize, method: Method) -> Result<TestStatistic> {
    let residual = total - model;
    if !(residual > DEGENERATE_RESIDUAL * total.abs()) || total <= 0.0 {
        return Err(Error::DegenerateResidual {
            denominator: residual,
            total,
        });
    }
    let numerator = model / m as f64;
    let denominator = residual / (n - m) as f64;
    Ok(TestStatistic {
        value: numerator / denominator,
        method,
        numerator,
        denominator,
    })
}

/// `tr(H_X A)` as `Σ_a q_aᵀ A q_a`.
fn projected_trace(a: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    let aq = a * q;
    q.component_mul(&aq).sum()
}

fn check_shapes(s: &SimilarityMatrix, x: &DesignMatrix) -> Result<()> {
    if s.n() != x.n() {
        return Err(Error::invalid(format!(
            "similarity matrix has {} subjects but design has {}",
            s.n(),
            x.n()
        )));
    }
    Ok(())
}

/// Pseudo-F statistic `[tr(H_X·HSH)/m] / [tr((I−H_X)·HSH)/(n−m)]`.
pub fn pseudo_f(s: &SimilarityMatrix, x: &DesignMatrix) -> Result<TestStatistic> {
    check_shapes(s, x)?;
    let a = s.to_centered().into_matrix();
    from_traces(projected_trace(&a, x.basis()), a.trace(), x.n(), x.m(), Method::Pseudo)
}

/// Square-root F statistic: the pseudo-F ratio with `HSH` replaced by `(HSH)^{1/2}`.
pub fn sqrt_f(s: &SimilarityMatrix, x: &DesignMatrix) -> Result<TestStatistic> {
    check_shapes(s, x)?;
    let b = matrix_sqrt(&s.to_centered().into_matrix())?;
    from_traces(projected_trace(&b, x.basis()), b.trace(), x.n(), x.m(), Method::Sqrt)
}

pub fn statistic(s: &SimilarityMatrix, x: &DesignMatrix, method: Method) -> Result<TestStatistic> {
    match method {
        Method::Pseudo => pseudo_f(s, x),
        Method::Sqrt => sqrt_f(s, x),
    }
}

/// Either statistic evaluated from the eigenpairs of `HSH`.
///
/// `tr(H_X A) = Σ_j a_j ‖Qᵀv_j‖²` with `a_j = λ_j` or `√λ_j`.
pub fn statistic_from_eigen(eig: &CenteredEigen, x: &DesignMatrix, method: Method) -> Result<TestStatistic> {
    if eig.n() != x.n() {
        return Err(Error::invalid(format!(
            "eigen-decomposition has {} subjects but design has {}",
            eig.n(),
            x.n()
        )));
    }
    let weights = eig.powered(method == Method::Sqrt)?;
    let proj = x.basis().transpose() * eig.vectors();
    let model: f64 = proj
        .column_iter()
        .zip(&weights)
        .map(|(c, w)| w * c.norm_squared())
        .sum();
    let total: f64 = weights.iter().sum();
    from_traces(model, total, x.n(), x.m(), method)
}
