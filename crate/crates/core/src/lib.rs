//! Distance-based regression association tests.
//!
//! Given an `n × n` similarity (or distance) matrix over subjects and an
//! `n × m` design matrix of predictors, this crate computes the pseudo-F
//! statistic and the square-root F statistic, and calibrates them against
//! their chi-squared mixture null law:
//!
//! - [`kernel`]: similarity matrices from responses or distances, Gower centering
//! - [`statistic`]: hat matrix, symmetric square root, both statistics
//! - [`null_dist`]: null spectrum, parametric bootstrap, Box and generalized-gamma p-values
//! - [`permutation`]: permutation p-values, used as a reference oracle
//! - [`sim`]: Monte Carlo size/power/consistency experiments
//! - [`io`]: delimited-text ingestion, result documents, the `test`/`simulate`/`bench` commands
//!
//! Runnable walkthroughs live in `examples/`.

pub mod error;
pub mod io;
pub mod kernel;
pub mod null_dist;
pub mod permutation;
pub mod rng;
pub mod sim;
pub mod spectral;
pub mod statistic;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use kernel::{
    center, Kernel, distance_to_similarity, gram_gaussian, gram_linear, DistanceMatrix, ResponseMatrix, SimilarityKind,
    SimilarityMatrix,
};
pub use null_dist::{
    bootstrap_pvalue, bootstrap_pvalues, cumulants, fit_box_chi2, fit_generalized_gamma, null_spectrum,
    sample_mixture, tail_pvalue_gamma, CumulantSet, GeneralizedGammaParams, NullSpectrum, PValueReport,
};
pub use permutation::{exact_pvalue, permutation_pvalue, permutation_pvalues, PermutationPlan, PermutationPValues};
pub use spectral::CenteredEigen;
pub use statistic::{hat_matrix, matrix_sqrt, pseudo_f, sqrt_f, DesignMatrix, HatMatrix, Method, TestStatistic};
