//! Monte Carlo experiments: empirical size curves, power tables and
//! power-consistency curves for both statistics.
//!
//! Each replicate draws predictors `X ~ N(1_m, Θ_x)` and responses either
//! independently (`Y ~ N(0, Θ_y)`, the null) or from the linear model
//! `Y = Xβ + ε`, `ε ~ N(0, Θ_ε)`. The similarity is the linear kernel
//! `S = YYᵀ`, evaluated through a thin SVD of the centered responses.
//! Replicate `r` uses RNG stream `(seed, r)`, and its bootstrap uses a child
//! seed derived from `(seed, r)`, so every report is bit-identical across
//! thread counts.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::null_dist::{bootstrap_pvalues, cumulants, fit_box_chi2, fit_generalized_gamma, tail_pvalue_gamma, NullSpectrum};
use crate::rng::{derive_seed, stream};
use crate::spectral::CenteredEigen;
use crate::statistic::{statistic_from_eigen, DesignMatrix, Method};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationKind {
    /// `ρ^{|i−j|}`
    Ar1,
    /// Constant `ρ` off the diagonal.
    Equal,
}

impl CorrelationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CorrelationKind::Ar1 => "ar1",
            CorrelationKind::Equal => "equal",
        }
    }
}

/// Correlation structure without a dimension, as written in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub kind: CorrelationKind,
    pub rho: f64,
}

impl Correlation {
    pub fn ar1(rho: f64) -> Self {
        Self { kind: CorrelationKind::Ar1, rho }
    }

    pub fn equal(rho: f64) -> Self {
        Self { kind: CorrelationKind::Equal, rho }
    }

    pub fn with_dim(self, dim: usize) -> CorrelationModel {
        CorrelationModel { kind: self.kind, rho: self.rho, dim }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationModel {
    pub kind: CorrelationKind,
    pub rho: f64,
    pub dim: usize,
}

/// The `dim × dim` correlation matrix of `model`.
pub fn build_correlation(model: &CorrelationModel) -> Result<DMatrix<f64>> {
    let CorrelationModel { kind, rho, dim } = *model;
    if dim == 0 {
        return Err(Error::InvalidCorrelation("dimension must be positive".into()));
    }
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::InvalidCorrelation(format!("rho = {rho} outside (-1, 1)")));
    }
    if kind == CorrelationKind::Equal && dim > 1 && rho <= -1.0 / (dim as f64 - 1.0) {
        return Err(Error::InvalidCorrelation(format!(
            "equal correlation {rho} is not positive definite in dimension {dim}"
        )));
    }
    let theta = DMatrix::from_fn(dim, dim, |i, j| match (kind, i == j) {
        (_, true) => 1.0,
        (CorrelationKind::Ar1, false) => rho.powi(i.abs_diff(j) as i32),
        (CorrelationKind::Equal, false) => rho,
    });
    if theta.clone().cholesky().is_none() {
        return Err(Error::InvalidCorrelation(format!("{kind:?}({rho}) is not positive definite")));
    }
    Ok(theta)
}

/// `n` i.i.d. rows from `N(mean, cov)` via the Cholesky factor of `cov`.
pub fn sample_mvnormal<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &DMatrix<f64>, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let d = mean.len();
    if cov.shape() != (d, d) {
        return Err(Error::invalid(format!("covariance is {:?}, mean has length {d}", cov.shape())));
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidCorrelation("covariance is not positive definite".into()))?;
    let mut z = DMatrix::<f64>::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            z[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let mut out = z * chol.l().transpose();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(mean[j]);
    }
    Ok(out)
}

/// Number of nonzero coefficients: `τ·k·m` rounded to nearest, ties up.
pub fn signal_count(tau: f64, k: usize, m: usize) -> usize {
    let total = (k * m) as f64;
    // Scale before rounding so 0.2·50 = 10.000000000000002 stays 10.
    ((tau * total * 1e9).round() / 1e9 + 0.5).floor().clamp(0.0, total) as usize
}

/// Signal magnitude `{log(k)/(25·τ·k·m)}^{1/2}` shared by every nonzero entry.
pub fn signal_size(tau: f64, k: usize, m: usize) -> f64 {
    ((k as f64).ln() / (25.0 * tau * (k * m) as f64)).sqrt()
}

/// Random `m × k` effect matrix with `round(τkm)` nonzeros at uniform
/// positions, each `signal_size + (1/k)·N(0, 0.01)`.
pub fn gen_beta<R: Rng + ?Sized>(tau: f64, k: usize, m: usize, rng: &mut R) -> DMatrix<f64> {
    let mut beta = DMatrix::zeros(m, k);
    let count = signal_count(tau, k, m);
    if count == 0 {
        return beta;
    }
    let size = signal_size(tau, k, m);
    let noise_sd = 0.1 / k as f64;
    for pos in rand::seq::index::sample(rng, k * m, count) {
        let z: f64 = rng.sample(StandardNormal);
        beta[(pos / k, pos % k)] = size + noise_sd * z;
    }
    beta
}

/// How each replicate turns statistics into p-values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Calibration {
    #[default]
    Bootstrap,
    Gamma,
    Box,
}

fn default_x_model() -> Correlation {
    Correlation::ar1(0.5)
}

fn default_alpha() -> f64 {
    0.05
}

fn default_b() -> usize {
    2000
}

/// One simulation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    #[serde(default = "default_x_model")]
    pub x_model: Correlation,
    /// Correlation of `Y` under the null, of `ε` otherwise.
    pub model: Correlation,
    pub tau: f64,
    pub replicates: usize,
    #[serde(rename = "B", default = "default_b")]
    pub b: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub seed: u64,
    #[serde(default)]
    pub calibration: Calibration,
}

impl ScenarioSpec {
    /// The paper-style cell: `n = 500, k = 10, m = 5`, `Θ_x` AR(1) with ρ = 0.5.
    pub fn standard(model: Correlation, tau: f64, replicates: usize, seed: u64) -> Self {
        Self {
            n: 500,
            k: 10,
            m: 5,
            x_model: default_x_model(),
            model,
            tau,
            replicates,
            b: default_b(),
            alpha: default_alpha(),
            seed,
            calibration: Calibration::Bootstrap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::invalid("replicates must be positive"));
        }
        if self.n <= self.m + 1 || self.m == 0 || self.k == 0 {
            return Err(Error::invalid(format!(
                "need n > m + 1 and k, m ≥ 1 (n = {}, k = {}, m = {})",
                self.n, self.k, self.m
            )));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::invalid(format!("tau = {} outside [0, 1]", self.tau)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        if self.calibration == Calibration::Bootstrap && self.b < crate::null_dist::MIN_BOOTSTRAP {
            return Err(Error::invalid(format!("B = {} below {}", self.b, crate::null_dist::MIN_BOOTSTRAP)));
        }
        build_correlation(&self.x_model.with_dim(self.m))?;
        build_correlation(&self.model.with_dim(self.k))?;
        Ok(())
    }
}

/// p-values of both statistics for one simulated data set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub p_pseudo: f64,
    pub p_sqrt: f64,
    /// The gamma route failed and the bootstrap was used instead.
    pub fell_back: bool,
}

/// Where the responses come from in a replicate.
enum Signal<'a> {
    Null,
    Sparse(f64),
    Fixed(&'a DMatrix<f64>),
}

struct Generator {
    n: usize,
    k: usize,
    m: usize,
    theta_x: DMatrix<f64>,
    theta_y: DMatrix<f64>,
}

impl Generator {
    fn new(n: usize, k: usize, m: usize, x_model: Correlation, model: Correlation) -> Result<Self> {
        Ok(Self {
            n,
            k,
            m,
            theta_x: build_correlation(&x_model.with_dim(m))?,
            theta_y: build_correlation(&model.with_dim(k))?,
        })
    }

    fn draw<R: Rng + ?Sized>(&self, signal: &Signal<'_>, rng: &mut R) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let x = sample_mvnormal(&DVector::from_element(self.m, 1.0), &self.theta_x, self.n, rng)?;
        let noise = sample_mvnormal(&DVector::zeros(self.k), &self.theta_y, self.n, rng)?;
        let y = match signal {
            Signal::Null => noise,
            Signal::Sparse(tau) => {
                let beta = gen_beta(*tau, self.k, self.m, rng);
                &x * beta + noise
            }
            Signal::Fixed(beta) => &x * *beta + noise,
        };
        Ok((x, y))
    }
}

fn center_columns(mut y: DMatrix<f64>) -> DMatrix<f64> {
    for mut col in y.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    y
}

fn analyze(x: DMatrix<f64>, y: DMatrix<f64>, calibration: Calibration, b: usize, seed: u64) -> Result<ReplicateOutcome> {
    let design = DesignMatrix::new(x)?;
    let eig = CenteredEigen::from_factor(&center_columns(y));
    let t_pseudo = statistic_from_eigen(&eig, &design, Method::Pseudo)?.value;
    let t_sqrt = statistic_from_eigen(&eig, &design, Method::Sqrt)?.value;
    let spec = NullSpectrum::from_eigen(&eig, &design)?;
    let bootstrap = || bootstrap_pvalues(t_pseudo, t_sqrt, &spec, b, seed);
    match calibration {
        Calibration::Bootstrap => {
            let (p_pseudo, p_sqrt) = bootstrap()?;
            Ok(ReplicateOutcome { p_pseudo, p_sqrt, fell_back: false })
        }
        Calibration::Box => {
            let p = |method, t| fit_box_chi2(&cumulants(&spec, method)).map(|f| f.tail(t));
            Ok(ReplicateOutcome {
                p_pseudo: p(Method::Pseudo, t_pseudo)?,
                p_sqrt: p(Method::Sqrt, t_sqrt)?,
                fell_back: false,
            })
        }
        Calibration::Gamma => {
            let fit = |method| fit_generalized_gamma(&cumulants(&spec, method));
            match (fit(Method::Pseudo), fit(Method::Sqrt)) {
                (Ok(a), Ok(c)) => Ok(ReplicateOutcome {
                    p_pseudo: tail_pvalue_gamma(t_pseudo, &a.params),
                    p_sqrt: tail_pvalue_gamma(t_sqrt, &c.params),
                    fell_back: false,
                }),
                _ => {
                    let (p_pseudo, p_sqrt) = bootstrap()?;
                    Ok(ReplicateOutcome { p_pseudo, p_sqrt, fell_back: true })
                }
            }
        }
    }
}

/// Runs every replicate of `spec` and returns the per-replicate p-values in order.
pub fn run_replicates(spec: &ScenarioSpec) -> Result<Vec<ReplicateOutcome>> {
    spec.validate()?;
    let generator = Generator::new(spec.n, spec.k, spec.m, spec.x_model, spec.model)?;
    let signal = if spec.tau > 0.0 { Signal::Sparse(spec.tau) } else { Signal::Null };
    (0..spec.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(spec.seed, r as u64);
            let (x, y) = generator.draw(&signal, &mut rng)?;
            analyze(x, y, spec.calibration, spec.b, derive_seed(spec.seed, r as u64))
        })
        .collect()
}

/// Kolmogorov–Smirnov distance of a sample from Uniform(0, 1).
pub fn ks_uniform(pvalues: &[f64]) -> f64 {
    let mut p = pvalues.to_vec();
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, &v)| {
            let v = v.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - v).max(v - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

fn rejection_rate(pvalues: impl Iterator<Item = f64>, alpha: f64, total: usize) -> f64 {
    pvalues.filter(|&p| p <= alpha).count() as f64 / total as f64
}

/// Monte Carlo standard error of a rejection rate.
pub fn binomial_se(rate: f64, replicates: usize) -> f64 {
    (rate * (1.0 - rate) / replicates as f64).sqrt()
}

/// Empirical size of both tests over a grid of significance levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeCurve {
    pub model: Correlation,
    pub replicates: usize,
    pub alphas: Vec<f64>,
    pub size_pseudo: Vec<f64>,
    pub size_sqrt: Vec<f64>,
    pub ks_pseudo: f64,
    pub ks_sqrt: f64,
    pub pvalues_pseudo: Vec<f64>,
    pub pvalues_sqrt: Vec<f64>,
}

/// Null experiment (`τ = 0`): rejection fraction at each level plus KS uniformity.
pub fn run_size_experiment(spec: &ScenarioSpec, alphas: &[f64]) -> Result<SizeCurve> {
    if spec.tau != 0.0 {
        return Err(Error::invalid("size experiment requires tau = 0"));
    }
    let outcomes = run_replicates(spec)?;
    let pvalues_pseudo: Vec<f64> = outcomes.iter().map(|o| o.p_pseudo).collect();
    let pvalues_sqrt: Vec<f64> = outcomes.iter().map(|o| o.p_sqrt).collect();
    let r = spec.replicates;
    Ok(SizeCurve {
        model: spec.model,
        replicates: r,
        alphas: alphas.to_vec(),
        size_pseudo: alphas.iter().map(|&a| rejection_rate(pvalues_pseudo.iter().copied(), a, r)).collect(),
        size_sqrt: alphas.iter().map(|&a| rejection_rate(pvalues_sqrt.iter().copied(), a, r)).collect(),
        ks_pseudo: ks_uniform(&pvalues_pseudo),
        ks_sqrt: ks_uniform(&pvalues_sqrt),
        pvalues_pseudo,
        pvalues_sqrt,
    })
}

/// One row of a type-I-error / power table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub model: CorrelationKind,
    pub rho: f64,
    pub tau: f64,
    pub rate_pseudo: f64,
    pub rate_sqrt: f64,
    pub se_pseudo: f64,
    pub se_sqrt: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerReport {
    pub rows: Vec<PowerRow>,
}

impl PowerReport {
    pub const HEADER: [&'static str; 8] =
        ["model", "tau", "rho", "rate_pseudo", "rate_sqrt", "se_pseudo", "se_sqrt", "replicates"];

    pub fn to_tsv(&self) -> String {
        let mut out = Self::HEADER.join("\t");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}\n",
                r.model.as_str(),
                r.tau,
                r.rho,
                r.rate_pseudo,
                r.rate_sqrt,
                r.se_pseudo,
                r.se_sqrt,
                r.replicates
            ));
        }
        out
    }
}

/// Rejection rates at `spec.alpha` for a cell with any `τ` (0 gives the type I error).
pub fn run_cell(spec: &ScenarioSpec) -> Result<PowerRow> {
    let outcomes = run_replicates(spec)?;
    let r = spec.replicates;
    let rate_pseudo = rejection_rate(outcomes.iter().map(|o| o.p_pseudo), spec.alpha, r);
    let rate_sqrt = rejection_rate(outcomes.iter().map(|o| o.p_sqrt), spec.alpha, r);
    Ok(PowerRow {
        model: spec.model.kind,
        rho: spec.model.rho,
        tau: spec.tau,
        rate_pseudo,
        rate_sqrt,
        se_pseudo: binomial_se(rate_pseudo, r),
        se_sqrt: binomial_se(rate_sqrt, r),
        replicates: r,
    })
}

/// Power of both tests under sparse linear signals (`τ > 0`).
pub fn run_power_experiment(spec: &ScenarioSpec) -> Result<PowerReport> {
    if !(spec.tau > 0.0) {
        return Err(Error::invalid("power experiment requires tau > 0"));
    }
    Ok(PowerReport { rows: vec![run_cell(spec)?] })
}

/// A grid of cells as read from a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGrid {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    #[serde(default = "default_x_model")]
    pub x_model: Correlation,
    pub models: Vec<CorrelationKind>,
    pub rhos: Vec<f64>,
    pub taus: Vec<f64>,
    pub replicates: usize,
    #[serde(rename = "B", default = "default_b")]
    pub b: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub calibration: Calibration,
}

impl ScenarioGrid {
    /// Cells in table order (model, then ρ, then τ); cell `i` is seeded by `derive_seed(seed, i)`.
    pub fn cells(&self, seed: u64) -> Vec<ScenarioSpec> {
        let mut out = Vec::new();
        for &kind in &self.models {
            for &rho in &self.rhos {
                for &tau in &self.taus {
                    out.push(ScenarioSpec {
                        n: self.n,
                        k: self.k,
                        m: self.m,
                        x_model: self.x_model,
                        model: Correlation { kind, rho },
                        tau,
                        replicates: self.replicates,
                        b: self.b,
                        alpha: self.alpha,
                        seed: derive_seed(seed, out.len() as u64),
                        calibration: self.calibration,
                    });
                }
            }
        }
        out
    }
}

/// Runs every cell of a grid; rows are in table order.
pub fn run_table(cells: &[ScenarioSpec]) -> Result<PowerReport> {
    let rows = cells.iter().map(run_cell).collect::<Result<Vec<_>>>()?;
    Ok(PowerReport { rows })
}

/// Power at increasing sample sizes for a fixed effect matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySpec {
    pub n_grid: Vec<usize>,
    /// Fixed `m × k` effect matrix.
    pub beta: Vec<Vec<f64>>,
    pub x_model: Correlation,
    pub model: Correlation,
    pub replicates: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl ConsistencySpec {
    /// `m × k` effect with a single nonzero entry `effect` at `(0, 0)`.
    pub fn single_effect(m: usize, k: usize, effect: f64) -> Vec<Vec<f64>> {
        let mut beta = vec![vec![0.0; k]; m];
        beta[0][0] = effect;
        beta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub n_grid: Vec<usize>,
    pub power_pseudo: Vec<f64>,
    pub power_sqrt: Vec<f64>,
    pub replicates: usize,
}

impl PowerCurve {
    /// Every step is nondecreasing within `slack` binomial standard errors.
    pub fn is_monotone_within(&self, slack: f64) -> bool {
        let r = self.replicates;
        [&self.power_pseudo, &self.power_sqrt].iter().all(|p| {
            p.windows(2).all(|w| {
                let se = (binomial_se(w[0], r).powi(2) + binomial_se(w[1], r).powi(2)).sqrt();
                w[1] >= w[0] - slack * se
            })
        })
    }
}

pub fn run_consistency_check(spec: &ConsistencySpec) -> Result<PowerCurve> {
    let m = spec.beta.len();
    let k = spec.beta.first().map_or(0, Vec::len);
    if m == 0 || k == 0 {
        return Err(Error::invalid("beta must be a nonempty m × k matrix"));
    }
    if spec.replicates == 0 {
        return Err(Error::invalid("replicates must be positive"));
    }
    let beta = crate::kernel::matrix_from_rows(&spec.beta)?;
    let mut power_pseudo = Vec::with_capacity(spec.n_grid.len());
    let mut power_sqrt = Vec::with_capacity(spec.n_grid.len());
    for (gi, &n) in spec.n_grid.iter().enumerate() {
        if n <= m + 1 {
            return Err(Error::invalid(format!("n = {n} too small for m = {m}")));
        }
        let generator = Generator::new(n, k, m, spec.x_model, spec.model)?;
        let cell_seed = derive_seed(spec.seed, gi as u64);
        let outcomes = (0..spec.replicates)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(cell_seed, r as u64);
                let (x, y) = generator.draw(&Signal::Fixed(&beta), &mut rng)?;
                analyze(x, y, Calibration::Bootstrap, spec.b, derive_seed(cell_seed, r as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        power_pseudo.push(rejection_rate(outcomes.iter().map(|o| o.p_pseudo), spec.alpha, spec.replicates));
        power_sqrt.push(rejection_rate(outcomes.iter().map(|o| o.p_sqrt), spec.alpha, spec.replicates));
    }
    Ok(PowerCurve {
        n_grid: spec.n_grid.clone(),
        power_pseudo,
        power_sqrt,
        replicates: spec.replicates,
    })
}

/// Synthetic `(Y, X)` pair shaped like the simulation cells, used by benchmarks and examples.
pub fn synthetic_null_data(n: usize, k: usize, m: usize, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let generator = Generator::new(n, k, m, default_x_model(), Correlation::ar1(0.3))?;
    let (x, y) = generator.draw(&Signal::Null, &mut stream(seed, 0))?;
    Ok((y, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn correlation_examples() {
        let id = build_correlation(&Correlation::ar1(0.0).with_dim(3)).unwrap();
        assert_eq!(id, DMatrix::identity(3, 3));

        let ar = build_correlation(&Correlation::ar1(0.5).with_dim(3)).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0]);
        assert_eq!(ar, expected);

        let eq = build_correlation(&Correlation::equal(0.8).with_dim(10)).unwrap();
        let mut eig: Vec<f64> = eq.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        assert!((eig[9] - (1.0 + 9.0 * 0.8)).abs() < 1e-12);
        for &v in &eig[..9] {
            assert!((v - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_correlations() {
        assert!(build_correlation(&Correlation::ar1(1.0).with_dim(3)).is_err());
        assert!(build_correlation(&Correlation::equal(-0.5).with_dim(4)).is_err());
        assert!(build_correlation(&Correlation::equal(-0.3).with_dim(4)).is_ok());
    }

    #[test]
    fn mvnormal_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = 3;
        let z = sample_mvnormal(&DVector::zeros(d), &DMatrix::identity(d, d), 100_000, &mut rng).unwrap();
        let cov = z.transpose() * &z / 100_000.0;
        assert!((cov - DMatrix::<f64>::identity(d, d)).abs().max() < 0.05);

        let m = 4;
        let n = 20_000;
        let x = sample_mvnormal(&DVector::from_element(m, 1.0), &DMatrix::identity(m, m), n, &mut rng).unwrap();
        let se = 1.0 / (n as f64).sqrt();
        for col in x.column_iter() {
            assert!((col.mean() - 1.0).abs() < 3.0 * se);
        }
    }

    #[test]
    fn mvnormal_is_reproducible_and_checks_pd() {
        let draw = || sample_mvnormal(&DVector::zeros(2), &DMatrix::identity(2, 2), 1, &mut stream(5, 0)).unwrap();
        assert_eq!(draw(), draw());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            sample_mvnormal(&DVector::zeros(2), &bad, 1, &mut stream(5, 0)),
            Err(Error::InvalidCorrelation(_))
        ));
    }

    #[test]
    fn beta_sparsity_and_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(gen_beta(0.0, 10, 5, &mut rng), DMatrix::zeros(5, 10));

        let b = gen_beta(0.2, 10, 5, &mut rng);
        assert_eq!(b.iter().filter(|v| **v != 0.0).count(), 10);

        let expected = signal_size(1.0, 10, 5);
        assert!((expected - 0.042_919).abs() < 1e-6);
        // Noise is (1/k)·N(0, var 0.01): sd 0.01 for k = 10.
        let mut entries = Vec::new();
        for _ in 0..200 {
            entries.extend(gen_beta(1.0, 10, 5, &mut rng).iter().copied());
        }
        assert!(entries.iter().all(|v| *v != 0.0));
        let nf = entries.len() as f64;
        let mean = entries.iter().sum::<f64>() / nf;
        let sd = (entries.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
        assert!((mean - expected).abs() < 3.0 * 0.01 / nf.sqrt());
        assert!((sd - 0.01).abs() < 0.0005);
    }

    #[test]
    fn signal_counts_round_half_up() {
        assert_eq!(signal_count(0.2, 10, 5), 10);
        assert_eq!(signal_count(0.6, 10, 5), 30);
        assert_eq!(signal_count(0.05, 10, 5), 3); // 2.5 rounds up
        assert_eq!(signal_count(1.0, 10, 5), 50);
        assert_eq!(signal_count(0.0, 10, 5), 0);
    }

    #[test]
    fn ks_distance_of_uniform_grid() {
        let p: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_uniform(&p) - 0.005).abs() < 1e-12);
        assert_eq!(ks_uniform(&[1.0; 10]), 1.0);
    }

    #[test]
    fn small_null_cell_produces_valid_pvalues() {
        let spec = ScenarioSpec {
            n: 60,
            k: 4,
            m: 2,
            replicates: 20,
            b: 200,
            ..ScenarioSpec::standard(Correlation::ar1(0.3), 0.0, 20, 3)
        };
        let outcomes = run_replicates(&spec).unwrap();
        assert_eq!(outcomes.len(), 20);
        assert!(outcomes.iter().all(|o| (0.0..=1.0).contains(&o.p_pseudo) && (0.0..=1.0).contains(&o.p_sqrt)));
    }

    #[test]
    fn replicates_zero_is_invalid() {
        let spec = ScenarioSpec::standard(Correlation::ar1(0.3), 0.0, 0, 3);
        assert!(matches!(run_replicates(&spec), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn power_cell_is_deterministic_across_threads() {
        let spec = ScenarioSpec {
            n: 80,
            b: 200,
            ..ScenarioSpec::standard(Correlation::equal(0.8), 0.2, 24, 11)
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_power_experiment(&spec).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn gamma_and_box_calibrations_run() {
        for calibration in [Calibration::Gamma, Calibration::Box] {
            let spec = ScenarioSpec {
                n: 80,
                b: 200,
                calibration,
                ..ScenarioSpec::standard(Correlation::ar1(0.3), 0.0, 10, 4)
            };
            let outcomes = run_replicates(&spec).unwrap();
            assert!(outcomes.iter().all(|o| (0.0..=1.0).contains(&o.p_pseudo)));
        }
    }

    #[test]
    fn grid_expands_in_table_order() {
        let grid: ScenarioGrid = toml::from_str(
            r#"
            n = 100
            k = 10
            m = 5
            models = ["ar1", "equal"]
            rhos = [0.3, 0.8]
            taus = [0.0, 0.2]
            replicates = 10
            B = 200
            "#,
        )
        .unwrap();
        let cells = grid.cells(1);
        assert_eq!(cells.len(), 8);
        assert_eq!(cells[0].model, Correlation::ar1(0.3));
        assert_eq!(cells[1].tau, 0.2);
        assert_eq!(cells[7].model, Correlation::equal(0.8));
        assert_eq!(cells[0].x_model, Correlation::ar1(0.5));
        assert_ne!(cells[0].seed, cells[1].seed);
    }
}
