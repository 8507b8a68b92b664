//! Empirical size of both tests under the null, with a KS check of p-value
//! uniformity.
//!
//! Run with `cargo run --release --example size_study -- [replicates]`.

use dbreg::sim::{run_size_experiment, Correlation, ScenarioSpec};

fn main() -> dbreg::Result<()> {
    let replicates = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let alphas = [0.01, 0.05, 0.10];
    for model in [Correlation::ar1(0.3), Correlation::ar1(0.8), Correlation::equal(0.3), Correlation::equal(0.8)] {
        let spec = ScenarioSpec { b: 1000, ..ScenarioSpec::standard(model, 0.0, replicates, 2024) };
        let curve = run_size_experiment(&spec, &alphas)?;
        println!(
            "{:?}(rho = {}): size pseudo {:?}, sqrt {:?}; KS {:.3} / {:.3}",
            model.kind, model.rho, curve.size_pseudo, curve.size_sqrt, curve.ks_pseudo, curve.ks_sqrt
        );
    }
    Ok(())
}
