//! Similarity matrices from responses or distances, and Gower double-centering.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when checking symmetry of square inputs.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvalues above `-PSD_CLIP * λ_max` count as numerical zeros.
pub const PSD_CLIP: f64 = 1e-8;
/// More negative than `-NOT_EUCLIDEAN * λ_max` flags a non-Euclidean distance.
pub const NOT_EUCLIDEAN: f64 = 1e-6;

/// `n × k` response observations, one row per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    values: DMatrix<f64>,
}

impl ResponseMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 3 {
            return Err(Error::invalid(format!(
                "response matrix needs at least 3 subjects, got {}",
                values.nrows()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::invalid("response matrix has no columns"));
        }
        check_finite(&values, "response matrix")?;
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn k(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Responses with each column shifted to mean zero, i.e. `H·Y`.
    pub fn centered(&self) -> DMatrix<f64> {
        let mut y = self.values.clone();
        for mut col in y.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityKind {
    RawSimilarity,
    Centered,
}

/// Symmetric `n × n` similarity matrix, either raw `S` or centered `HSH`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    s: DMatrix<f64>,
    kind: SimilarityKind,
}

impl SimilarityMatrix {
    /// Wraps a raw similarity matrix after checking shape, finiteness and symmetry.
    pub fn raw(s: DMatrix<f64>) -> Result<Self> {
        check_square_symmetric(&s, "similarity matrix")?;
        Ok(Self {
            s,
            kind: SimilarityKind::RawSimilarity,
        })
    }

    /// Wraps an already double-centered matrix; row sums must vanish.
    pub fn centered(s: DMatrix<f64>) -> Result<Self> {
        check_square_symmetric(&s, "centered similarity matrix")?;
        let tol = 1e-8 * s.norm().max(f64::MIN_POSITIVE);
        for (i, row) in s.row_iter().enumerate() {
            let sum = row.sum();
            if sum.abs() > tol {
                return Err(Error::invalid(format!(
                    "centered similarity matrix row {i} sums to {sum:e}"
                )));
            }
        }
        Ok(Self {
            s,
            kind: SimilarityKind::Centered,
        })
    }

    pub fn kind(&self) -> SimilarityKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn n(&self) -> usize {
        self.s.nrows()
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.s
    }

    /// `self` if already centered, otherwise `HSH`.
    pub fn to_centered(&self) -> SimilarityMatrix {
        match self.kind {
            SimilarityKind::Centered => self.clone(),
            SimilarityKind::RawSimilarity => center(self),
        }
    }

    /// Smallest and largest eigenvalue.
    pub fn eigen_range(&self) -> (f64, f64) {
        let eig = SymmetricEigen::new(self.s.clone()).eigenvalues;
        (eig.min(), eig.max())
    }

    /// `true` when the smallest eigenvalue is within `-PSD_CLIP·λ_max`.
    pub fn is_psd(&self) -> bool {
        let (lo, hi) = self.eigen_range();
        lo >= -PSD_CLIP * hi.max(0.0)
    }
}

/// Pairwise distances: symmetric, zero diagonal, nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    d: DMatrix<f64>,
}

impl DistanceMatrix {
    pub fn new(d: DMatrix<f64>) -> Result<Self> {
        check_square_symmetric(&d, "distance matrix")?;
        for i in 0..d.nrows() {
            if d[(i, i)] != 0.0 {
                return Err(Error::invalid(format!(
                    "distance matrix diagonal entry ({i},{i}) is {} (must be 0)",
                    d[(i, i)]
                )));
            }
        }
        if let Some(((i, j), v)) = d
            .iter()
            .enumerate()
            .map(|(idx, v)| ((idx % d.nrows(), idx / d.nrows()), v))
            .find(|(_, v)| **v < 0.0)
        {
            return Err(Error::invalid(format!(
                "distance matrix entry ({i},{j}) is negative ({v})"
            )));
        }
        Ok(Self { d })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn n(&self) -> usize {
        self.d.nrows()
    }
}

/// Euclidean geometry check performed by [`distance_to_similarity`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EuclideanCheck {
    /// Most negative eigenvalue divided by the largest (0 when PSD).
    pub min_eigen_ratio: f64,
    pub not_euclidean: bool,
}

#[derive(Debug, Clone)]
pub struct GowerSimilarity {
    pub similarity: SimilarityMatrix,
    pub check: EuclideanCheck,
}

/// Kernel used to turn responses into a similarity matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Kernel {
    Linear,
    Gaussian { bandwidth: f64 },
}

impl Kernel {
    pub fn similarity(&self, y: &ResponseMatrix) -> Result<SimilarityMatrix> {
        match *self {
            Kernel::Linear => Ok(gram_linear(y)),
            Kernel::Gaussian { bandwidth } => gram_gaussian(y, bandwidth),
        }
    }
}

impl std::fmt::Display for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Kernel::Linear => f.write_str("linear"),
            Kernel::Gaussian { bandwidth } => write!(f, "gaussian:{bandwidth}"),
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    /// `linear` or `gaussian:<bandwidth>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "linear" => Ok(Kernel::Linear),
            Some(("gaussian", bw)) => {
                let bandwidth: f64 = bw
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad gaussian bandwidth `{bw}`")))?;
                if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                    return Err(Error::invalid(format!("gaussian bandwidth must be positive, got {bw}")));
                }
                Ok(Kernel::Gaussian { bandwidth })
            }
            _ => Err(Error::invalid(format!("unknown kernel `{s}` (expected linear or gaussian:<bw>)"))),
        }
    }
}

impl TryFrom<String> for Kernel {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Kernel> for String {
    fn from(k: Kernel) -> String {
        k.to_string()
    }
}

/// Linear kernel `S = Y Yᵀ`.
pub fn gram_linear(y: &ResponseMatrix) -> SimilarityMatrix {
    let v = y.values();
    let mut s = v * v.transpose();
    symmetrize(&mut s);
    SimilarityMatrix {
        s,
        kind: SimilarityKind::RawSimilarity,
    }
}

/// Gaussian RBF kernel `exp(-‖y_i - y_j‖² / (2h²))`.
pub fn gram_gaussian(y: &ResponseMatrix, bandwidth: f64) -> Result<SimilarityMatrix> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid(format!(
            "gaussian bandwidth must be positive and finite, got {bandwidth}"
        )));
    }
    let v = y.values();
    let n = y.n();
    let denom = 2.0 * bandwidth * bandwidth;
    let mut s = DMatrix::from_element(n, n, 1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let d2 = (v.row(i) - v.row(j)).norm_squared();
            let k = (-d2 / denom).exp();
            s[(i, j)] = k;
            s[(j, i)] = k;
        }
    }
    Ok(SimilarityMatrix {
        s,
        kind: SimilarityKind::RawSimilarity,
    })
}

/// Gower double-centering `HSH` with `H = I - 11ᵀ/n`.
///
/// The input is treated as raw regardless of its kind, so centering a
/// centered matrix returns it unchanged (up to rounding).
pub fn center(s: &SimilarityMatrix) -> SimilarityMatrix {
    SimilarityMatrix {
        s: double_center(s.matrix()),
        kind: SimilarityKind::Centered,
    }
}

pub(crate) fn double_center(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| a.row(i).sum() / nf).collect();
    let col_means: Vec<f64> = (0..n).map(|j| a.column(j).sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    let mut out = DMatrix::from_fn(n, n, |i, j| a[(i, j)] - row_means[i] - col_means[j] + grand);
    symmetrize(&mut out);
    out
}

/// Gower transform `-½·H(D∘D)H` of a distance matrix.
pub fn distance_to_similarity(d: &DistanceMatrix) -> GowerSimilarity {
    let sq = d.matrix().map(|x| -0.5 * x * x);
    let s = double_center(&sq);
    let eig = SymmetricEigen::new(s.clone()).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let min_eigen_ratio = if hi > 0.0 { (lo / hi).min(0.0) } else { 0.0 };
    GowerSimilarity {
        similarity: SimilarityMatrix {
            s,
            kind: SimilarityKind::Centered,
        },
        check: EuclideanCheck {
            min_eigen_ratio,
            not_euclidean: min_eigen_ratio < -NOT_EUCLIDEAN,
        },
    }
}

/// Euclidean distances between the rows of `y`.
pub fn euclidean_distances(y: &ResponseMatrix) -> DistanceMatrix {
    let v = y.values();
    let n = y.n();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = (v.row(i) - v.row(j)).norm();
            d[(i, j)] = dist;
            d[(j, i)] = dist;
        }
    }
    DistanceMatrix { d }
}

pub(crate) fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

pub(crate) fn check_finite(a: &DMatrix<f64>, what: &str) -> Result<()> {
    let nrows = a.nrows();
    match a.iter().position(|v| !v.is_finite()) {
        Some(idx) => Err(Error::invalid(format!(
            "{what} entry ({},{}) is not finite",
            idx % nrows,
            idx / nrows
        ))),
        None => Ok(()),
    }
}

fn check_square_symmetric(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::invalid(format!(
            "{what} must be square and non-empty, got {}×{}",
            a.nrows(),
            a.ncols()
        )));
    }
    check_finite(a, what)?;
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let (x, y) = (a[(i, j)], a[(j, i)]);
            if (x - y).abs() > SYMMETRY_TOL * x.abs().max(1.0) {
                return Err(Error::invalid(format!(
                    "{what} is not symmetric at ({i},{j}): {x} vs {y}"
                )));
            }
        }
    }
    Ok(())
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::invalid(format!(
            "row {i} has {} columns, expected {ncols}",
            rows[i].len()
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_matrix, random_psd};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).abs().max()
    }

    #[test]
    fn linear_gram_small_cases() {
        let y = ResponseMatrix::from_rows(&[vec![1.0], vec![0.0], vec![0.0]]).unwrap();
        let s = gram_linear(&y);
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.matrix(), &expected);
        assert_eq!(s.kind(), SimilarityKind::RawSimilarity);

        // 2×2 identity responses padded with a zero subject to satisfy n ≥ 3.
        let y = ResponseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let s = gram_linear(&y);
        assert_eq!(s.matrix().view((0, 0), (2, 2)).clone_owned(), DMatrix::identity(2, 2));
    }

    #[test]
    fn linear_gram_spectrum_matches_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y = ResponseMatrix::new(random_matrix(&mut rng, 6, 3)).unwrap();
        let s = gram_linear(&y);
        let mut eig: Vec<f64> = SymmetricEigen::new(s.matrix().clone()).eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(eig.iter().all(|&v| v >= -1e-12));
        let mut sv: Vec<f64> = y.values().clone().svd(false, false).singular_values.iter().map(|s| s * s).collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (i, &v) in sv.iter().enumerate() {
            assert!((eig[i] - v).abs() < 1e-10 * v.max(1.0));
        }
        for &v in &eig[3..] {
            assert!(v.abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_responses() {
        assert!(ResponseMatrix::from_rows(&[vec![1.0], vec![f64::NAN], vec![0.0]]).is_err());
        assert!(ResponseMatrix::from_rows(&[vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn gaussian_kernel_values() {
        let h = 0.7;
        let y = ResponseMatrix::from_rows(&[vec![0.0], vec![h * 2f64.sqrt()], vec![0.0]]).unwrap();
        let s = gram_gaussian(&y, h).unwrap();
        let m = s.matrix();
        for i in 0..3 {
            assert_eq!(m[(i, i)], 1.0);
        }
        assert!((m[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(m[(0, 2)], 1.0);
        assert!(gram_gaussian(&y, 0.0).is_err());
        assert!(gram_gaussian(&y, -1.0).is_err());
    }

    #[test]
    fn centering_examples() {
        let ones = SimilarityMatrix::raw(DMatrix::from_element(4, 4, 1.0)).unwrap();
        assert!(center(&ones).matrix().abs().max() < 1e-15);

        let id = SimilarityMatrix::raw(DMatrix::identity(2, 2)).unwrap();
        let c = center(&id);
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert!(max_abs_diff(c.matrix(), &expected) < 1e-15);
        assert_eq!(c.kind(), SimilarityKind::Centered);
    }

    #[test]
    fn centering_matches_explicit_triple_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 8;
        let s = SimilarityMatrix::raw(random_psd(&mut rng, n, n)).unwrap();
        // H built entry by entry, products by plain loops.
        let h = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64);
        let mut hs = DMatrix::zeros(n, n);
        let mut hsh = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                hs[(i, j)] = (0..n).map(|l| h[(i, l)] * s.matrix()[(l, j)]).sum::<f64>();
            }
        }
        for i in 0..n {
            for j in 0..n {
                hsh[(i, j)] = (0..n).map(|l| hs[(i, l)] * h[(l, j)]).sum::<f64>();
            }
        }
        assert!(max_abs_diff(center(&s).matrix(), &hsh) < 1e-12);
    }

    #[test]
    fn distance_examples() {
        let zero = DistanceMatrix::new(DMatrix::zeros(3, 3)).unwrap();
        assert!(distance_to_similarity(&zero).similarity.matrix().abs().max() == 0.0);

        let d = DistanceMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let g = distance_to_similarity(&d);
        let expected = DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
        assert!(max_abs_diff(g.similarity.matrix(), &expected) < 1e-15);
        assert!(!g.check.not_euclidean);
    }

    #[test]
    fn distance_validation() {
        let neg = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
        assert!(matches!(DistanceMatrix::new(neg), Err(Error::InvalidInput(_))));
        let diag = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        assert!(matches!(DistanceMatrix::new(diag), Err(Error::InvalidInput(_))));
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(matches!(DistanceMatrix::new(asym), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn non_euclidean_distances_are_flagged() {
        // Violates the triangle inequality badly: d(0,2) > d(0,1) + d(1,2).
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 5.0, 1.0, 0.0, 1.0, 5.0, 1.0, 0.0]);
        let g = distance_to_similarity(&DistanceMatrix::new(d).unwrap());
        assert!(g.check.not_euclidean);
        assert!(g.check.min_eigen_ratio < -1e-6);
    }

    #[test]
    fn gower_identity_on_random_responses() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let y = ResponseMatrix::new(random_matrix(&mut rng, 12, 4)).unwrap();
            let via_distance = distance_to_similarity(&euclidean_distances(&y)).similarity;
            let via_gram = center(&gram_linear(&y));
            assert!(max_abs_diff(via_distance.matrix(), via_gram.matrix()) < 1e-10);
        }
    }

    #[test]
    fn kernel_parsing() {
        assert_eq!("linear".parse::<Kernel>().unwrap(), Kernel::Linear);
        assert_eq!("gaussian:2.5".parse::<Kernel>().unwrap(), Kernel::Gaussian { bandwidth: 2.5 });
        assert!("gaussian:0".parse::<Kernel>().is_err());
        assert!("gaussian".parse::<Kernel>().is_err());
        assert!("cosine".parse::<Kernel>().is_err());
        let k = Kernel::Gaussian { bandwidth: 0.75 };
        assert_eq!(k.to_string().parse::<Kernel>().unwrap(), k);
    }

    #[test]
    fn centered_constructor_checks_row_sums() {
        assert!(SimilarityMatrix::centered(DMatrix::identity(3, 3)).is_err());
        let h = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / 3.0);
        assert!(SimilarityMatrix::centered(h).is_ok());
    }
}
