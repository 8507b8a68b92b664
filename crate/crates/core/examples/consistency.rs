//! Power under a fixed effect as the sample size grows.
//!
//! Run with `cargo run --release --example consistency`.

use dbreg::sim::{run_consistency_check, Correlation, ConsistencySpec};

fn main() -> dbreg::Result<()> {
    let spec = ConsistencySpec {
        n_grid: vec![100, 200, 400, 800],
        beta: ConsistencySpec::single_effect(5, 10, 0.15),
        x_model: Correlation::ar1(0.5),
        model: Correlation::ar1(0.3),
        replicates: 200,
        b: 500,
        alpha: 0.05,
        seed: 3,
    };
    let curve = run_consistency_check(&spec)?;
    println!("n\tpower_pseudo\tpower_sqrt");
    for (i, n) in curve.n_grid.iter().enumerate() {
        println!("{n}\t{:.3}\t{:.3}", curve.power_pseudo[i], curve.power_sqrt[i]);
    }
    println!("monotone within 2 SE: {}", curve.is_monotone_within(2.0));
    Ok(())
}
