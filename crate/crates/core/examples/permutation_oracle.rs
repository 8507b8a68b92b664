//! Parametric bootstrap p-values checked against permutation p-values on a
//! handful of null data sets.
//!
//! Run with `cargo run --release --example permutation_oracle`.

use dbreg::permutation::PermutationOracle;
use dbreg::sim::synthetic_null_data;
use dbreg::{bootstrap_pvalue, CenteredEigen, DesignMatrix, Kernel, Method, NullSpectrum, PermutationPlan, ResponseMatrix};

fn main() -> dbreg::Result<()> {
    println!("dataset  method  bootstrap  permutation");
    for d in 0..5 {
        let (y, x) = synthetic_null_data(200, 10, 5, 100 + d)?;
        let design = DesignMatrix::new(x)?;
        let s = Kernel::Linear.similarity(&ResponseMatrix::new(y)?)?;
        let eig = CenteredEigen::from_similarity(&s);
        let spec = NullSpectrum::from_eigen(&eig, &design)?;
        let oracle = PermutationOracle::new(&eig, &design)?;
        let perm = oracle.sampled(&PermutationPlan::new(2000, d)?)?;
        for method in Method::BOTH {
            let boot = bootstrap_pvalue(oracle.observed(method), &spec, method, 2000, d)?;
            println!("{d:>7}  {method:>6}  {boot:>9.4}  {:>11.4}", perm.get(method));
        }
    }
    Ok(())
}
