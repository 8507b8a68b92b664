//! Permutation p-values: rows of the design are shuffled against a fixed
//! similarity. Slow but assumption-free, this is the reference the
//! parametric calibrations are checked against.
//!
//! The centered similarity is decomposed once; each permutation costs one
//! `m × n` by `n × r` product.

use std::time::Instant;

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Kernel, ResponseMatrix, SimilarityMatrix};
use crate::null_dist::{bootstrap_pvalue, NullSpectrum};
use crate::rng::stream;
use crate::spectral::CenteredEigen;
use crate::statistic::{from_traces, statistic_from_eigen, DesignMatrix, Method};

/// Smallest number of permutations accepted.
pub const MIN_PERMUTATIONS: usize = 99;

/// Permuted statistics within this relative distance of the observed one count as ties.
pub const TIE_TOL: f64 = 1e-12;

/// Largest `n` for which [`exact_pvalue`] enumerates every permutation.
pub const MAX_EXACT_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationPlan {
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
}

impl PermutationPlan {
    pub fn new(b: usize, seed: u64) -> Result<Self> {
        if b < MIN_PERMUTATIONS {
            return Err(Error::invalid(format!("{b} permutations, need at least {MIN_PERMUTATIONS}")));
        }
        Ok(Self { b, seed })
    }

    /// The `index`-th permutation of `0..n`; independent of thread scheduling.
    pub fn permutation(&self, n: usize, index: usize) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut stream(self.seed, index as u64));
        perm
    }
}

/// Permutation p-values of both statistics from one shared set of shuffles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationPValues {
    pub pseudo: f64,
    pub sqrt: f64,
    #[serde(rename = "B")]
    pub b: usize,
}

impl PermutationPValues {
    pub fn get(&self, method: Method) -> f64 {
        match method {
            Method::Pseudo => self.pseudo,
            Method::Sqrt => self.sqrt,
        }
    }
}

/// Fixed eigenpairs plus the observed statistics; evaluates permuted designs.
pub struct PermutationOracle<'a> {
    eig: &'a CenteredEigen,
    design: &'a DesignMatrix,
    weights: [Vec<f64>; 2],
    observed: [f64; 2],
}

impl<'a> PermutationOracle<'a> {
    pub fn new(eig: &'a CenteredEigen, design: &'a DesignMatrix) -> Result<Self> {
        let observed = [
            statistic_from_eigen(eig, design, Method::Pseudo)?.value,
            statistic_from_eigen(eig, design, Method::Sqrt)?.value,
        ];
        Ok(Self {
            eig,
            design,
            weights: [eig.powered(false)?, eig.powered(true)?],
            observed,
        })
    }

    pub fn observed(&self, method: Method) -> f64 {
        self.observed[method as usize]
    }

    /// Both statistics with row `i` of the design replaced by row `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<[f64; 2]> {
        let q = self.design.basis();
        let gathered = DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| q[(perm[i], j)]);
        let proj = gathered.transpose() * self.eig.vectors();
        let norms: Vec<f64> = proj.column_iter().map(|c| c.norm_squared()).collect();
        let (n, m) = (self.design.n(), self.design.m());
        let mut out = [0.0; 2];
        for (slot, (w, method)) in self.weights.iter().zip([Method::Pseudo, Method::Sqrt]).enumerate() {
            let model: f64 = w.iter().zip(&norms).map(|(a, b)| a * b).sum();
            out[slot] = from_traces(model, w.iter().sum(), n, m, method)?.value;
        }
        Ok(out)
    }

    fn exceeds(&self, slot: usize, value: f64) -> bool {
        let t = self.observed[slot];
        value >= t - TIE_TOL * t.abs()
    }

    /// `(1 + #{T_π ≥ t}) / (|perms| + 1)` over an explicit list of permutations.
    pub fn pvalue_over(&self, perms: &[Vec<usize>]) -> Result<PermutationPValues> {
        let hits = perms
            .par_iter()
            .map(|p| self.permuted(p).map(|t| [self.exceeds(0, t[0]) as usize, self.exceeds(1, t[1]) as usize]))
            .try_reduce(|| [0, 0], |a, b| Ok([a[0] + b[0], a[1] + b[1]]))?;
        let denom = (perms.len() + 1) as f64;
        Ok(PermutationPValues {
            pseudo: (1 + hits[0]) as f64 / denom,
            sqrt: (1 + hits[1]) as f64 / denom,
            b: perms.len(),
        })
    }

    pub fn sampled(&self, plan: &PermutationPlan) -> Result<PermutationPValues> {
        let n = self.design.n();
        let hits = (0..plan.b)
            .into_par_iter()
            .map(|i| {
                let t = self.permuted(&plan.permutation(n, i))?;
                Ok::<_, Error>([self.exceeds(0, t[0]) as usize, self.exceeds(1, t[1]) as usize])
            })
            .try_reduce(|| [0, 0], |a, b| Ok([a[0] + b[0], a[1] + b[1]]))?;
        let denom = (plan.b + 1) as f64;
        Ok(PermutationPValues {
            pseudo: (1 + hits[0]) as f64 / denom,
            sqrt: (1 + hits[1]) as f64 / denom,
            b: plan.b,
        })
    }

    /// Exact p-value `#{π : T_π ≥ t} / n!` over all permutations (identity included).
    pub fn exact(&self) -> Result<PermutationPValues> {
        let n = self.design.n();
        if n > MAX_EXACT_N {
            return Err(Error::invalid(format!("exact enumeration limited to n ≤ {MAX_EXACT_N}, got {n}")));
        }
        let mut hits = [0usize; 2];
        let mut total = 0usize;
        for p in (0..n).permutations(n) {
            let t = self.permuted(&p)?;
            for slot in 0..2 {
                hits[slot] += self.exceeds(slot, t[slot]) as usize;
            }
            total += 1;
        }
        Ok(PermutationPValues {
            pseudo: hits[0] as f64 / total as f64,
            sqrt: hits[1] as f64 / total as f64,
            b: total,
        })
    }
}

/// Permutation p-values of both statistics.
pub fn permutation_pvalues(s: &SimilarityMatrix, x: &DesignMatrix, plan: &PermutationPlan) -> Result<PermutationPValues> {
    if s.n() != x.n() {
        return Err(Error::invalid(format!("similarity has {} subjects but design has {}", s.n(), x.n())));
    }
    let eig = CenteredEigen::from_similarity(s);
    eig.require_psd()?;
    PermutationOracle::new(&eig, x)?.sampled(plan)
}

pub fn permutation_pvalue(s: &SimilarityMatrix, x: &DesignMatrix, method: Method, plan: &PermutationPlan) -> Result<f64> {
    Ok(permutation_pvalues(s, x, plan)?.get(method))
}

/// Exact permutation p-values for `n ≤ MAX_EXACT_N`.
pub fn exact_pvalues(s: &SimilarityMatrix, x: &DesignMatrix) -> Result<PermutationPValues> {
    let eig = CenteredEigen::from_similarity(s);
    eig.require_psd()?;
    PermutationOracle::new(&eig, x)?.exact()
}

pub fn exact_pvalue(s: &SimilarityMatrix, x: &DesignMatrix, method: Method) -> Result<f64> {
    Ok(exact_pvalues(s, x)?.get(method))
}

/// Wall-clock comparison of the parametric bootstrap and the permutation test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub n: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub kernel: Kernel,
    /// Bootstrap p-value given the null spectrum.
    pub t_parametric_s: f64,
    /// Full permutation p-value: centering, eigen-decomposition and `B` shuffles.
    pub t_permutation_s: f64,
    pub ratio: f64,
}

/// Times both calibrations of the pseudo-F statistic on synthetic data with
/// `k = 10` responses and `m = 5` AR(1) predictors.
pub fn timing_benchmark(n: usize, b: usize, kernel: Kernel, seed: u64) -> Result<TimingReport> {
    let (y, x) = crate::sim::synthetic_null_data(n, 10, 5, seed)?;
    let design = DesignMatrix::new(x)?;
    let s = kernel.similarity(&ResponseMatrix::new(y)?)?;

    let eig = CenteredEigen::from_similarity(&s);
    let t = statistic_from_eigen(&eig, &design, Method::Pseudo)?.value;
    let spec = NullSpectrum::from_eigen(&eig, &design)?;
    let start = Instant::now();
    bootstrap_pvalue(t, &spec, Method::Pseudo, b, seed)?;
    let t_parametric_s = start.elapsed().as_secs_f64();

    let plan = PermutationPlan::new(b, seed)?;
    let start = Instant::now();
    permutation_pvalue(&s, &design, Method::Pseudo, &plan)?;
    let t_permutation_s = start.elapsed().as_secs_f64();

    Ok(TimingReport {
        n,
        b,
        kernel,
        t_parametric_s,
        t_permutation_s,
        ratio: t_permutation_s / t_parametric_s.max(1e-9),
    })
}
