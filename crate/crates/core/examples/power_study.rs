//! A type I error / power table over signal sparsity levels.
//!
//! Run with `cargo run --release --example power_study -- [replicates]`.

use dbreg::sim::{run_table, CorrelationKind, ScenarioGrid};

fn main() -> dbreg::Result<()> {
    let replicates = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let grid = ScenarioGrid {
        n: 500,
        k: 10,
        m: 5,
        x_model: dbreg::sim::Correlation::ar1(0.5),
        models: vec![CorrelationKind::Ar1, CorrelationKind::Equal],
        rhos: vec![0.3, 0.8],
        taus: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
        replicates,
        b: 1000,
        alpha: 0.05,
        seed: Some(1),
        calibration: Default::default(),
    };
    let report = run_table(&grid.cells(1))?;
    print!("{}", report.to_tsv());
    Ok(())
}
