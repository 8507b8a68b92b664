//! Asymptotic null law of both statistics and its p-value routes.
//!
//! Under the null, `T_pseudo` behaves like `m⁻¹ Σ w_i ξ_i` and `T_sqrt` like
//! `m⁻¹ Σ η_i ξ_i`, with `w ∝ λ`, `η ∝ √λ` (λ the eigenvalues of `HSH`) and
//! `ξ_i = ϖ_i + f·ϱ_i`, `ϖ_i ~ χ²_{m−1}`, `ϱ_i ~ χ²_1`, `f = 1/(1 + μᵀΔ⁻¹μ)`.
//!
//! Three calibrations are offered: a parametric bootstrap of the mixture,
//! Box's two-cumulant scaled χ², and a four-cumulant shifted generalized gamma.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::kernel::SimilarityMatrix;
use crate::rng::{stream, StreamRng};
use crate::spectral::{CenteredEigen, ZERO_EIGEN};
use crate::statistic::{DesignMatrix, Method};

/// Smallest replicate count accepted by the bootstrap.
pub const MIN_BOOTSTRAP: usize = 100;
/// Relative cumulant residual a generalized-gamma fit must reach.
pub const GAMMA_FIT_TOL: f64 = 1e-6;
/// Newton iteration cap for the generalized-gamma fit.
pub const GAMMA_FIT_MAX_ITER: usize = 200;

/// Eigenvalues of `HSH` with the mixture weights derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSpectrum {
    /// Descending, negatives clipped to zero.
    pub eigenvalues: Vec<f64>,
    /// `λ_i / Σλ_j`
    pub w: Vec<f64>,
    /// `√λ_i / Σ√λ_j`
    pub eta: Vec<f64>,
    pub m: usize,
    /// Noncentrality factor `1/(1 + μᵀΔ⁻¹μ)`.
    pub factor: f64,
}

impl NullSpectrum {
    /// Builds a spectrum from eigenvalues, dropping those below `1e-12·λ₁`
    /// and renormalizing the weights over the remainder.
    pub fn new(eigenvalues: &[f64], m: usize, factor: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("predictor count m must be at least 1"));
        }
        if !(0.0..=1.0).contains(&factor) {
            return Err(Error::invalid(format!("noncentrality factor {factor} outside [0, 1]")));
        }
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("eigenvalues must be finite"));
        }
        let mut values: Vec<f64> = eigenvalues.iter().map(|&v| v.max(0.0)).collect();
        values.sort_by(|a, b| b.total_cmp(a));
        let top = values.first().copied().unwrap_or(0.0);
        if top <= 0.0 {
            return Err(Error::DegenerateSpectrum);
        }
        let kept: Vec<f64> = values.iter().copied().filter(|&v| v > ZERO_EIGEN * top).collect();
        let total: f64 = kept.iter().sum();
        let root_total: f64 = kept.iter().map(|v| v.sqrt()).sum();
        let w = kept.iter().map(|v| v / total).collect();
        let eta = kept.iter().map(|v| v.sqrt() / root_total).collect();
        Ok(Self {
            eigenvalues: values,
            w,
            eta,
            m,
            factor,
        })
    }

    /// Spectrum of precomputed eigenpairs with the plug-in factor of `x`.
    pub fn from_eigen(eig: &CenteredEigen, x: &DesignMatrix) -> Result<Self> {
        let mut values = eig.clipped_values();
        values.resize(eig.n().max(values.len()), 0.0);
        Self::new(&values, x.m(), x.noncentrality_factor()?)
    }

    pub fn weights(&self, method: Method) -> &[f64] {
        match method {
            Method::Pseudo => &self.w,
            Method::Sqrt => &self.eta,
        }
    }

    /// `m − 1 + f`
    pub fn m0(&self) -> f64 {
        self.m as f64 - 1.0 + self.factor
    }

    /// Shannon entropy (nats) of a weight vector.
    pub fn entropy(&self, method: Method) -> f64 {
        self.weights(method)
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum()
    }

    /// `η₁ < 2/n`: the square-root weights decay slowly.
    pub fn heavy_eta_tail(&self, n: usize) -> bool {
        self.eta.first().is_some_and(|&e| e < 2.0 / n as f64)
    }
}

/// Null spectrum of `HSH` (centering `s` first if needed) for design `x`.
pub fn null_spectrum(s: &SimilarityMatrix, x: &DesignMatrix) -> Result<NullSpectrum> {
    if s.n() != x.n() {
        return Err(Error::invalid(format!(
            "similarity matrix has {} subjects but design has {}",
            s.n(),
            x.n()
        )));
    }
    NullSpectrum::from_eigen(&CenteredEigen::from_similarity(s), x)
}

/// Draws `ξ_i = ϖ_i + f·ϱ_i` for every retained weight.
struct XiSampler {
    chi_m1: Option<ChiSquared<f64>>,
    factor: f64,
}

impl XiSampler {
    fn new(spec: &NullSpectrum) -> Self {
        let chi_m1 = (spec.m > 1).then(|| ChiSquared::new((spec.m - 1) as f64).expect("positive dof"));
        Self {
            chi_m1,
            factor: spec.factor,
        }
    }

    #[inline]
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let varpi = self.chi_m1.as_ref().map_or(0.0, |c| c.sample(rng));
        let z: f64 = rng.sample(StandardNormal);
        varpi + self.factor * z * z
    }
}

/// One draw of the mixture `m⁻¹ Σ weight_i·ξ_i`.
pub fn sample_mixture<R: Rng + ?Sized>(spec: &NullSpectrum, method: Method, rng: &mut R) -> f64 {
    let sampler = XiSampler::new(spec);
    let weights = spec.weights(method);
    weights.iter().map(|w| w * sampler.draw(rng)).sum::<f64>() / spec.m as f64
}

/// One draw of `(T₁, T₂)` sharing the same `ξ` vector.
pub fn sample_mixture_pair<R: Rng + ?Sized>(spec: &NullSpectrum, rng: &mut R) -> (f64, f64) {
    let sampler = XiSampler::new(spec);
    let (mut t1, mut t2) = (0.0, 0.0);
    for (w, eta) in spec.w.iter().zip(&spec.eta) {
        let xi = sampler.draw(rng);
        t1 += w * xi;
        t2 += eta * xi;
    }
    let m = spec.m as f64;
    (t1 / m, t2 / m)
}

fn replicate_rng(seed: u64, b: usize) -> StreamRng {
    stream(seed, b as u64)
}

fn check_replicates(b: usize) -> Result<()> {
    if b < MIN_BOOTSTRAP {
        return Err(Error::invalid(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP} replicates, got {b}"
        )));
    }
    Ok(())
}

/// Parametric-bootstrap p-value `B⁻¹ #{T_b ≥ t_obs}`.
///
/// Replicate `b` draws from stream `(seed, b)`, so the result is identical for
/// any thread count.
pub fn bootstrap_pvalue(t_obs: f64, spec: &NullSpectrum, method: Method, b: usize, seed: u64) -> Result<f64> {
    check_replicates(b)?;
    let hits: usize = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(seed, i);
            usize::from(sample_mixture(spec, method, &mut rng) >= t_obs)
        })
        .sum();
    Ok(hits as f64 / b as f64)
}

/// Bootstrap p-values for both statistics from one set of mixture draws.
///
/// Equal to calling [`bootstrap_pvalue`] twice with the same seed.
pub fn bootstrap_pvalues(t_pseudo: f64, t_sqrt: f64, spec: &NullSpectrum, b: usize, seed: u64) -> Result<(f64, f64)> {
    check_replicates(b)?;
    let (h1, h2) = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(seed, i);
            let (t1, t2) = sample_mixture_pair(spec, &mut rng);
            (usize::from(t1 >= t_pseudo), usize::from(t2 >= t_sqrt))
        })
        .reduce(|| (0, 0), |a, c| (a.0 + c.0, a.1 + c.1));
    Ok((h1 as f64 / b as f64, h2 as f64 / b as f64))
}

/// `B` mixture draws for one statistic, in replicate order.
pub fn bootstrap_draws(spec: &NullSpectrum, method: Method, b: usize, seed: u64) -> Vec<f64> {
    (0..b)
        .into_par_iter()
        .map(|i| sample_mixture(spec, method, &mut replicate_rng(seed, i)))
        .collect()
}

/// First four cumulants of a null mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantSet {
    pub values: [f64; 4],
    pub method: Method,
    /// `m − 1 + f`
    pub m0: f64,
}

impl CumulantSet {
    pub fn c(&self, l: usize) -> f64 {
        self.values[l - 1]
    }

    /// Variance over squared mean.
    pub fn dispersion(&self) -> f64 {
        self.values[1] / (self.values[0] * self.values[0])
    }
}

/// Cumulants of `m⁻¹ Σ a_i ξ_i`.
///
/// `ξ_i = ϖ_i + f·ϱ_i` has l-th cumulant `2^{l−1}(l−1)!·(m − 1 + f^l)`, so
/// `c_l = 2^{l−1}(l−1)!·(m − 1 + f^l)·Σ(a_i/m)^l`. At `f = 1` this is
/// `2^{l−1}(l−1)!·m0·Σ(a_i/m)^l` with `m0 = m`.
pub fn cumulants(spec: &NullSpectrum, method: Method) -> CumulantSet {
    let m = spec.m as f64;
    let weights = spec.weights(method);
    let mut values = [0.0; 4];
    let mut coef = 1.0; // 2^{l−1}(l−1)!
    for l in 1..=4 {
        if l > 1 {
            coef *= 2.0 * (l - 1) as f64;
        }
        let power_sum: f64 = weights.iter().map(|w| (w / m).powi(l as i32)).sum();
        let dof = m - 1.0 + spec.factor.powi(l as i32);
        values[l - 1] = coef * dof * power_sum;
    }
    CumulantSet {
        values,
        method,
        m0: spec.m0(),
    }
}

/// Scaled chi-square `a·χ²_d` matched on the first two cumulants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxFit {
    pub scale: f64,
    pub df: f64,
}

impl BoxFit {
    /// `P(a·χ²_d ≥ t)`
    pub fn tail(&self, t_obs: f64) -> f64 {
        if t_obs <= 0.0 {
            return 1.0;
        }
        gamma_ur(self.df / 2.0, t_obs / (2.0 * self.scale)).clamp(0.0, 1.0)
    }
}

/// `a = c₂/(2c₁)`, `d = 2c₁²/c₂`.
pub fn fit_box_chi2(c: &CumulantSet) -> Result<BoxFit> {
    let (c1, c2) = (c.values[0], c.values[1]);
    if !(c1 > 0.0 && c2 > 0.0) || !c1.is_finite() || !c2.is_finite() {
        return Err(Error::InvalidCumulants(format!("need c1 > 0 and c2 > 0, got ({c1}, {c2})")));
    }
    Ok(BoxFit {
        scale: c2 / (2.0 * c1),
        df: 2.0 * c1 * c1 / c2,
    })
}

/// Shifted generalized gamma `X_g + θ` with density
/// `v x^{vw−1} exp(−(x/σ)^v) / (σ^{vw} Γ(w))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedGammaParams {
    pub v: f64,
    pub w: f64,
    pub sigma: f64,
    pub theta: f64,
}

impl GeneralizedGammaParams {
    /// Raw moment `E[X_g^l] = σ^l Γ(l/v + w)/Γ(w)`.
    pub fn raw_moment(&self, l: u32) -> f64 {
        let t = l as f64 / self.v;
        self.sigma.powi(l as i32) * (ln_gamma(self.w + t) - ln_gamma(self.w)).exp()
    }

    /// Cumulants of `X_g + θ`, evaluated stably for large `w`.
    pub fn cumulants(&self) -> [f64; 4] {
        let shape = ShapeCumulants::new(self.v, self.w);
        let scale = self.sigma * (self.w.ln() / self.v).exp();
        [
            self.theta + scale * (1.0 + shape.mean_offset),
            scale.powi(2) * shape.k[0],
            scale.powi(3) * shape.k[1],
            scale.powi(4) * shape.k[2],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Largest relative error over the matched cumulants.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub params: GeneralizedGammaParams,
    pub diagnostics: FitDiagnostics,
}

/// `ln Γ(w + t) − ln Γ(w) − t·ln w`, accurate when the result is small.
fn log_gamma_shift(w: f64, t: f64) -> f64 {
    const BIG: f64 = 10.0;
    if w >= BIG {
        // Stirling series difference.
        const C: [f64; 7] = [
            1.0 / 12.0,
            -1.0 / 360.0,
            1.0 / 1260.0,
            -1.0 / 1680.0,
            1.0 / 1188.0,
            -691.0 / 360_360.0,
            1.0 / 156.0,
        ];
        let z = w + t;
        let mut series = 0.0;
        let (mut pz, mut pw) = (1.0 / z, 1.0 / w);
        let (z2, w2) = (1.0 / (z * z), 1.0 / (w * w));
        for c in C {
            series += c * (pz - pw);
            pz *= z2;
            pw *= w2;
        }
        (w + t - 0.5) * (t / w).ln_1p() - t + series
    } else {
        let shift = (BIG - w).ceil();
        let big = w + shift;
        let mut acc = log_gamma_shift(big, t) + t * (big.ln() - w.ln());
        let mut j = 0.0;
        while j < shift {
            acc -= (t / (w + j)).ln_1p();
            j += 1.0;
        }
        acc
    }
}

/// Cumulants 2–4 of `Z = (G/w)^{1/v}`, `G ~ Gamma(w, 1)`, plus `E[Z] − 1`.
struct ShapeCumulants {
    mean_offset: f64,
    k: [f64; 3],
}

impl ShapeCumulants {
    fn new(v: f64, w: f64) -> Self {
        // e_l = E[Z^l] − 1; raw moments of U = Z − 1 follow by binomial expansion.
        let e: [f64; 5] = std::array::from_fn(|l| if l == 0 { 0.0 } else { log_gamma_shift(w, l as f64 / v).exp_m1() });
        let binom = [[1.0, 0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0, 0.0], [1.0, 2.0, 1.0, 0.0, 0.0], [1.0, 3.0, 3.0, 1.0, 0.0], [1.0, 4.0, 6.0, 4.0, 1.0]];
        let mut u = [0.0; 5];
        for j in 1..=4 {
            u[j] = (1..=j)
                .map(|i| {
                    let sign = if (j - i) % 2 == 0 { 1.0 } else { -1.0 };
                    sign * binom[j][i] * e[i]
                })
                .sum();
        }
        let (m1, m2, m3, m4) = (u[1], u[2], u[3], u[4]);
        let k2 = m2 - m1 * m1;
        let k3 = m3 - 3.0 * m2 * m1 + 2.0 * m1.powi(3);
        let k4 = m4 - 4.0 * m3 * m1 - 3.0 * m2 * m2 + 12.0 * m2 * m1 * m1 - 6.0 * m1.powi(4);
        Self {
            mean_offset: e[1],
            k: [k2, k3, k4],
        }
    }

    fn skewness(&self) -> f64 {
        self.k[1] / self.k[0].powf(1.5)
    }

    fn kurtosis(&self) -> f64 {
        self.k[2] / (self.k[0] * self.k[0])
    }
}

/// Scaled shape residual at `(ln v, ln w)`.
fn shape_residual(x: [f64; 2], target: [f64; 2]) -> Option<[f64; 2]> {
    let (v, w) = (x[0].exp(), x[1].exp());
    if !(v.is_finite() && w.is_finite() && v > 0.0 && w > 0.0) {
        return None;
    }
    let s = ShapeCumulants::new(v, w);
    if !(s.k[0] > 0.0) {
        return None;
    }
    let r = [s.skewness() / target[0] - 1.0, s.kurtosis() / target[1] - 1.0];
    (r[0].is_finite() && r[1].is_finite()).then_some(r)
}

fn norm2(r: [f64; 2]) -> f64 {
    r[0].hypot(r[1])
}

/// Damped Newton on `(ln v, ln w)`; returns the final point, residual norm and iterations used.
fn newton_shape(start: [f64; 2], target: [f64; 2], budget: usize) -> ([f64; 2], f64, usize) {
    let mut x = start;
    let Some(mut r) = shape_residual(x, target) else {
        return (x, f64::INFINITY, 0);
    };
    let h = 1e-6;
    for iter in 0..budget {
        if norm2(r) < 1e-13 {
            return (x, norm2(r), iter);
        }
        let mut jac = [[0.0; 2]; 2];
        for p in 0..2 {
            let (mut xp, mut xm) = (x, x);
            xp[p] += h;
            xm[p] -= h;
            let (Some(rp), Some(rm)) = (shape_residual(xp, target), shape_residual(xm, target)) else {
                return (x, norm2(r), iter);
            };
            for q in 0..2 {
                jac[q][p] = (rp[q] - rm[q]) / (2.0 * h);
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if !det.is_finite() || det.abs() < 1e-300 {
            return (x, norm2(r), iter);
        }
        let mut step = [
            -(jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
            -(-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
        ];
        let longest = step[0].abs().max(step[1].abs());
        if longest > 1.0 {
            step = [step[0] / longest, step[1] / longest];
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = [x[0] + alpha * step[0], x[1] + alpha * step[1]];
            if let Some(rt) = shape_residual(trial, target) {
                if norm2(rt) < norm2(r) {
                    x = trial;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return (x, norm2(r), iter + 1);
        }
    }
    (x, norm2(r), budget)
}

/// Largest relative error between `fit` and `target` over the given cumulant orders.
fn relative_residual(fit: &[f64; 4], target: &[f64; 4]) -> f64 {
    fit.iter()
        .zip(target)
        .map(|(f, t)| ((f - t) / t).abs())
        .fold(0.0, f64::max)
}

/// Matches a shifted generalized gamma to `c₁..c₄`.
///
/// Shape `(v, w)` solves the skewness/kurtosis equations by damped Newton in
/// log-parameters starting from the gamma family (`v = 1`, `w = 4c₂³/c₃²`);
/// the scale then matches `c₂` and the shift `θ` matches `c₁`.
pub fn fit_generalized_gamma(c: &CumulantSet) -> Result<GammaFit> {
    let [c1, c2, c3, c4] = c.values;
    if !(c2 > 0.0 && c4 > 0.0) || c.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidCumulants(format!(
            "need finite cumulants with c2 > 0 and c4 > 0, got {:?}",
            c.values
        )));
    }
    if !(c3 > 0.0) {
        return Err(Error::InvalidCumulants(format!(
            "generalized gamma needs positive skewness, got c3 = {c3}"
        )));
    }
    let target = [c3 / c2.powf(1.5), c4 / (c2 * c2)];
    let w0 = 4.0 * c2.powi(3) / (c3 * c3);

    let starts = [[0.0, w0.ln()], [(0.5f64).ln(), w0.ln()], [(2.0f64).ln(), w0.ln()], [0.0, 0.0]];
    let mut used = 0;
    let mut best: Option<([f64; 2], f64)> = None;
    for start in starts {
        if used >= GAMMA_FIT_MAX_ITER {
            break;
        }
        let (x, res, iters) = newton_shape(start, target, GAMMA_FIT_MAX_ITER - used);
        used += iters.max(1);
        if best.is_none_or(|(_, r)| res < r) {
            best = Some((x, res));
        }
        if res < 1e-10 {
            break;
        }
    }
    let (x, _) = best.expect("at least one start");
    let (v, w) = (x[0].exp(), x[1].exp());
    let shape = ShapeCumulants::new(v, w);
    let scale = (c2 / shape.k[0]).sqrt();
    let sigma = scale * (-(w.ln()) / v).exp();
    let theta = c1 - scale * (1.0 + shape.mean_offset);
    let params = GeneralizedGammaParams { v, w, sigma, theta };

    let residual = match sigma.is_finite() && sigma > 0.0 {
        true => relative_residual(&params.cumulants(), &c.values),
        false => f64::INFINITY,
    };
    let residual = if residual.is_nan() { f64::INFINITY } else { residual };
    let converged = residual <= GAMMA_FIT_TOL;
    if !converged {
        return Err(Error::GammaFitFailed {
            iterations: used,
            residual,
        });
    }
    Ok(GammaFit {
        params,
        diagnostics: FitDiagnostics {
            residual,
            iterations: used,
            converged,
        },
    })
}

/// `P(X_g + θ ≥ t) = Q(w, ((t − θ)/σ)^v)`.
pub fn tail_pvalue_gamma(t_obs: f64, g: &GeneralizedGammaParams) -> f64 {
    if t_obs <= g.theta {
        return 1.0;
    }
    let x = (g.v * ((t_obs - g.theta) / g.sigma).ln()).exp();
    if x.is_infinite() {
        return 0.0;
    }
    gamma_ur(g.w, x).clamp(0.0, 1.0)
}

/// p-values by every requested calibration route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_bootstrap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_box: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_permutation: Option<f64>,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fit_diagnostics: Option<FitDiagnostics>,
}
